#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xmal/data/vocab.hpp"
#include "xmal/models/config.hpp"
#include "xmal/models/transformer.hpp"

namespace xmal {

struct DecoderLayerParams {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
  AttentionParams self_attn, cross_attn;
  FfnParams ffn;

  static DecoderLayerParams make(ParamFactory& f, const std::string& prefix, int64_t dim, int64_t ffn_dim) {
    DecoderLayerParams p;
    p.ln1_g = f.ones(prefix + "/ln1_g", {dim});
    p.ln1_b = f.zeros(prefix + "/ln1_b", {dim});
    p.self_attn = AttentionParams::make(f, prefix + "/self", dim);
    p.ln2_g = f.ones(prefix + "/ln2_g", {dim});
    p.ln2_b = f.zeros(prefix + "/ln2_b", {dim});
    p.cross_attn = AttentionParams::make(f, prefix + "/cross", dim);
    p.ln3_g = f.ones(prefix + "/ln3_g", {dim});
    p.ln3_b = f.zeros(prefix + "/ln3_b", {dim});
    p.ffn = FfnParams::make(f, prefix + "/ffn", dim, ffn_dim);
    return p;
  }
};

// Causal transformer decoder with cross-attention into the speech encoder
// states; drives both ASR pretraining and the multitask objective.
struct DecoderModel {
  DecoderConfig cfg;
  int vocab_size = 0;
  Tensor embed;  // [V × dim]
  std::vector<DecoderLayerParams> layers;
  Tensor final_g, final_b;
  Tensor out_w, out_b;  // [dim × V], [V]

  static DecoderModel make(const DecoderConfig& cfg, int vocab_size, ParamFactory& f) {
    DecoderModel m;
    m.cfg = cfg;
    m.vocab_size = vocab_size;
    m.embed = f.normal("embed", {vocab_size, cfg.dim}, 1.0 / std::sqrt(static_cast<double>(cfg.dim)));
    for (int l = 0; l < cfg.n_layers_d; ++l)
      m.layers.push_back(DecoderLayerParams::make(f, "l" + std::to_string(l), cfg.dim, cfg.ffn_dim));
    m.final_g = f.ones("final_g", {cfg.dim});
    m.final_b = f.zeros("final_b", {cfg.dim});
    m.out_w = f.xavier("out_w", cfg.dim, vocab_size);
    m.out_b = f.zeros("out_b", {vocab_size});
    return m;
  }
};

// Teacher-forced logits [L × V] for decoder input tokens (bos, y1, ..).
inline Tensor decoder_logits(const DecoderModel& m, const Tensor& encoder_states,
                             const std::vector<int>& input_tokens, const RunCtx& ctx) {
  check(!input_tokens.empty(), "decoder: empty input sequence");
  check(static_cast<int64_t>(input_tokens.size()) <= m.cfg.max_len,
        cat("decoder: sequence of ", input_tokens.size(), " tokens exceeds max_len ", m.cfg.max_len));
  check(encoder_states.rank() == 2 && encoder_states.size(1) == m.cfg.dim,
        cat("decoder: encoder states ", shape_str(encoder_states.shape()), " do not match dim ", m.cfg.dim));
  const int64_t len = static_cast<int64_t>(input_tokens.size());
  Tensor x = ops::scale(ops::embedding(m.embed, input_tokens), std::sqrt(static_cast<double>(m.cfg.dim)));
  x = ops::add(x, sinusoidal_pe(len, m.cfg.dim));
  x = ops::dropout(x, m.cfg.dropout_rate, ctx.dropout_key("decoder/embed"), ctx.training);
  const std::vector<uint8_t> causal = causal_mask(len);
  for (size_t l = 0; l < m.layers.size(); ++l) {
    const auto& lp = m.layers[l];
    const std::string site = "decoder/l" + std::to_string(l);
    Tensor h = ops::layer_norm(x, lp.ln1_g, lp.ln1_b);
    Tensor a = multi_head_attention(h, h, lp.self_attn, m.cfg.n_heads, &causal);
    a = ops::dropout(a, m.cfg.dropout_rate, ctx.dropout_key(site + "/self"), ctx.training);
    x = ops::add(x, a);
    Tensor h2 = ops::layer_norm(x, lp.ln2_g, lp.ln2_b);
    Tensor c = multi_head_attention(h2, encoder_states, lp.cross_attn, m.cfg.n_heads);
    c = ops::dropout(c, m.cfg.dropout_rate, ctx.dropout_key(site + "/cross"), ctx.training);
    x = ops::add(x, c);
    Tensor h3 = ops::layer_norm(x, lp.ln3_g, lp.ln3_b);
    Tensor f = ffn_forward(h3, lp.ffn);
    f = ops::dropout(f, m.cfg.dropout_rate, ctx.dropout_key(site + "/ffn"), ctx.training);
    x = ops::add(x, f);
  }
  x = ops::layer_norm(x, m.final_g, m.final_b);
  return ops::linear(x, m.out_w, m.out_b);
}

// Next-token logits [V] for a prefix (bos, y1, .., yk); evaluation path.
inline Tensor decode_asr_step(const DecoderModel& m, const Tensor& encoder_states,
                              const std::vector<int>& prefix) {
  Tensor logits = decoder_logits(m, encoder_states, prefix, kEvalCtx);
  const int64_t v = logits.size(1);
  const int64_t last = logits.size(0) - 1;
  Tensor out = Tensor::zeros({v});
  for (int64_t j = 0; j < v; ++j) out.data()[j] = logits.data()[last * v + j];
  return out;
}

struct GreedyDecodeResult {
  std::vector<int> tokens;  // content tokens, no specials
  bool ended = false;       // true when eos was emitted within the budget
};

// Greedy decoding until eos or max_steps; ties by lowest token id.
inline GreedyDecodeResult greedy_decode(const DecoderModel& m, const Tensor& encoder_states,
                                        const Vocabulary& vocab, int64_t max_steps) {
  GreedyDecodeResult res;
  std::vector<int> prefix = {vocab.bos};
  for (int64_t s = 0; s < max_steps; ++s) {
    if (static_cast<int64_t>(prefix.size()) >= m.cfg.max_len) break;
    Tensor logits = decode_asr_step(m, encoder_states, prefix);
    int best = 0;
    double best_v = logits.data()[0];
    for (int j = 1; j < m.vocab_size; ++j) {
      if (logits.data()[j] > best_v) {
        best_v = logits.data()[j];
        best = j;
      }
    }
    if (best == vocab.eos) {
      res.ended = true;
      break;
    }
    prefix.push_back(best);
    res.tokens.push_back(best);
  }
  return res;
}

}  // namespace xmal
