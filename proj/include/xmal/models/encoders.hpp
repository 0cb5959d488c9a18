#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "xmal/data/vocab.hpp"
#include "xmal/models/config.hpp"
#include "xmal/models/transformer.hpp"

namespace xmal {

// ---------------------------------------------------------------------------
// teacher text pipeline
// ---------------------------------------------------------------------------

struct TeacherModel {
  TextEncoderConfig cfg;
  Tensor embed;  // [V × dim_t]
  TransformerStack stack;

  static TeacherModel make(const TextEncoderConfig& cfg, ParamFactory& f) {
    TeacherModel m;
    m.cfg = cfg;
    m.embed = f.normal("embed", {cfg.vocab_size, cfg.dim_t}, 1.0 / std::sqrt(static_cast<double>(cfg.dim_t)));
    m.stack = TransformerStack::make(f, "enc", cfg.n_layers_t, cfg.dim_t, cfg.ffn_dim);
    return m;
  }
};

// Head used only during masked-token pretraining.
struct MlmHead {
  Tensor w, b;

  static MlmHead make(const TextEncoderConfig& cfg, ParamFactory& f) {
    MlmHead h;
    h.w = f.xavier("w", cfg.dim_t, cfg.vocab_size);
    h.b = f.zeros("b", {cfg.vocab_size});
    return h;
  }
};

// Transformer states over an already-wrapped (bos ... eos) token sequence.
inline Tensor teacher_states(const TeacherModel& m, const std::vector<int>& wrapped, const RunCtx& ctx) {
  const int64_t len = static_cast<int64_t>(wrapped.size());
  check(len <= m.cfg.max_len,
        cat("encode_text: sequence of ", len, " tokens exceeds max_len ", m.cfg.max_len));
  Tensor x = ops::scale(ops::embedding(m.embed, wrapped), std::sqrt(static_cast<double>(m.cfg.dim_t)));
  x = ops::add(x, sinusoidal_pe(len, m.cfg.dim_t));
  x = ops::dropout(x, m.cfg.dropout_rate, ctx.dropout_key("teacher/embed"), ctx.training);
  return stack_forward(x, m.stack, m.cfg.n_heads, m.cfg.dropout_rate, ctx, "teacher");
}

// Content tokens -> unit-norm sentence embedding [dim_t]. bos/eos are added
// here; pooling covers the whole wrapped sequence.
inline Tensor encode_text(const TeacherModel& m, const Vocabulary& vocab, const std::vector<int>& tokens,
                          const RunCtx& ctx = kEvalCtx) {
  check(!tokens.empty(), "encode_text: empty token sequence");
  check(static_cast<int64_t>(tokens.size()) + 2 <= m.cfg.max_len,
        cat("encode_text: sequence of ", tokens.size(), " tokens exceeds max_len ", m.cfg.max_len,
            " (2 positions reserved for sentence markers)"));
  for (int t : tokens) check(t >= 0 && t < m.cfg.vocab_size, cat("encode_text: token ", t, " outside vocabulary"));
  Tensor states = teacher_states(m, wrap_sentence(tokens, vocab), ctx);
  std::vector<uint8_t> mask(static_cast<size_t>(states.size(0)), 1);
  return ops::l2_normalize(ops::mean_pool_masked(states, mask));
}

// ---------------------------------------------------------------------------
// student speech pipeline
// ---------------------------------------------------------------------------

struct ConvLayerParams {
  Tensor w;  // [kernel*in × out]
  Tensor b;  // [out]
  int kernel = 3;
  int stride = 2;
};

struct StudentModel {
  SpeechEncoderConfig cfg;
  std::vector<ConvLayerParams> convs;
  TransformerStack stack;

  static StudentModel make(const SpeechEncoderConfig& cfg, ParamFactory& f) {
    StudentModel m;
    m.cfg = cfg;
    int in_dim = cfg.frame_dim;
    for (size_t i = 0; i < cfg.conv_layers.size(); ++i) {
      auto [k, s] = cfg.conv_layers[i];
      ConvLayerParams c;
      c.kernel = k;
      c.stride = s;
      c.w = f.xavier("conv" + std::to_string(i) + "/w", static_cast<int64_t>(k) * in_dim, cfg.dim_s);
      c.b = f.zeros("conv" + std::to_string(i) + "/b", {cfg.dim_s});
      m.convs.push_back(c);
      in_dim = cfg.dim_s;
    }
    m.stack = TransformerStack::make(f, "enc", cfg.n_layers_s, cfg.dim_s, cfg.ffn_dim);
    return m;
  }
};

// Conv downsampling followed by the transformer stack -> [T' × dim_s].
inline Tensor student_states(const StudentModel& m, const Tensor& frames, const RunCtx& ctx) {
  check(frames.rank() == 2 && frames.size(1) == m.cfg.frame_dim,
        cat("encode_speech: frames ", shape_str(frames.shape()), " do not match frame_dim ", m.cfg.frame_dim));
  check(frames.size(0) >= m.cfg.total_downsampling(),
        cat("encode_speech: input shorter than receptive field (", frames.size(0), " < ",
            m.cfg.total_downsampling(), " frames)"));
  Tensor x = frames;
  for (const auto& conv : m.convs) {
    Tensor cols = ops::im2col_1d(x, conv.kernel, conv.stride, conv.kernel / 2);
    x = ops::gelu(ops::linear(cols, conv.w, conv.b));
  }
  x = ops::add(x, sinusoidal_pe(x.size(0), m.cfg.dim_s));
  x = ops::dropout(x, m.cfg.dropout_rate, ctx.dropout_key("student/embed"), ctx.training);
  return stack_forward(x, m.stack, m.cfg.n_heads, m.cfg.dropout_rate, ctx, "student");
}

// ---------------------------------------------------------------------------
// projection head: linear -> GELU -> linear -> dropout -> layernorm
// ---------------------------------------------------------------------------

struct ProjectionHead {
  ProjectionHeadConfig cfg;
  Tensor w1, b1, w2, b2, ln_g, ln_b;

  static ProjectionHead make(const ProjectionHeadConfig& cfg, ParamFactory& f) {
    ProjectionHead p;
    p.cfg = cfg;
    p.w1 = f.xavier("w1", cfg.in_dim, cfg.hidden_dim);
    p.b1 = f.zeros("b1", {cfg.hidden_dim});
    p.w2 = f.xavier("w2", cfg.hidden_dim, cfg.out_dim);
    p.b2 = f.zeros("b2", {cfg.out_dim});
    p.ln_g = f.ones("ln_g", {cfg.out_dim});
    p.ln_b = f.zeros("ln_b", {cfg.out_dim});
    return p;
  }
};

inline Tensor projection_forward(const ProjectionHead& p, const Tensor& states, const RunCtx& ctx) {
  Tensor h = ops::gelu(ops::linear(states, p.w1, p.b1));
  Tensor o = ops::linear(h, p.w2, p.b2);
  o = ops::dropout(o, p.cfg.dropout_rate, ctx.dropout_key("projection/drop"), ctx.training);
  return ops::layer_norm(o, p.ln_g, p.ln_b);
}

// Frame sequence -> unit-norm sentence embedding [dim_t].
inline Tensor encode_speech(const StudentModel& m, const ProjectionHead& proj, const Tensor& frames,
                            const RunCtx& ctx = kEvalCtx) {
  Tensor states = student_states(m, frames, ctx);
  Tensor projected = projection_forward(proj, states, ctx);
  std::vector<uint8_t> mask(static_cast<size_t>(projected.size(0)), 1);
  return ops::l2_normalize(ops::mean_pool_masked(projected, mask));
}

}  // namespace xmal
