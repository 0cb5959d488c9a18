#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "xmal/core/ops.hpp"
#include "xmal/models/params.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

// Per-forward context: training gates dropout, and (seed, step, unit) key
// the counter-based dropout streams so any forward is exactly replayable.
struct RunCtx {
  bool training = false;
  uint64_t seed = 0;
  uint64_t step = 0;
  uint64_t unit = 0;

  uint64_t dropout_key(const std::string& site) const {
    return mix_key({seed, fnv1a(site), step, unit});
  }
};

inline const RunCtx kEvalCtx{};

namespace pe_detail {
inline void fill_pe_rows(double* p, int64_t row0, int64_t rows, int64_t dim) {
  for (int64_t pos = row0; pos < row0 + rows; ++pos) {
    for (int64_t i = 0; i < dim / 2; ++i) {
      const double angle = static_cast<double>(pos) /
                           std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(dim));
      p[pos * dim + 2 * i] = std::sin(angle);
      if (2 * i + 1 < dim) p[pos * dim + 2 * i + 1] = std::cos(angle);
    }
  }
}
}  // namespace pe_detail

// Cached per dim; the table is grown on demand and sliced per call.
inline Tensor sinusoidal_pe(int64_t len, int64_t dim) {
  static std::mutex mu;
  static std::map<int64_t, std::vector<double>> tables;
  Tensor out = Tensor::zeros({len, dim});
  {
    std::lock_guard<std::mutex> lock(mu);
    auto& table = tables[dim];
    const int64_t have = static_cast<int64_t>(table.size()) / dim;
    if (have < len) {
      const int64_t want = std::max<int64_t>(len, std::max<int64_t>(2 * have, 64));
      table.resize(static_cast<size_t>(want * dim));
      pe_detail::fill_pe_rows(table.data(), have, want - have, dim);
    }
    std::copy(table.begin(), table.begin() + static_cast<int64_t>(len * dim), out.data().begin());
  }
  return out;
}

inline std::vector<uint8_t> causal_mask(int64_t t) {
  std::vector<uint8_t> m(static_cast<size_t>(t * t), 0);
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = 0; j <= i; ++j) m[static_cast<size_t>(i * t + j)] = 1;
  return m;
}

struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  static AttentionParams make(ParamFactory& f, const std::string& prefix, int64_t dim) {
    AttentionParams p;
    p.wq = f.xavier(prefix + "/wq", dim, dim);
    p.bq = f.zeros(prefix + "/bq", {dim});
    p.wk = f.xavier(prefix + "/wk", dim, dim);
    p.bk = f.zeros(prefix + "/bk", {dim});
    p.wv = f.xavier(prefix + "/wv", dim, dim);
    p.bv = f.zeros(prefix + "/bv", {dim});
    p.wo = f.xavier(prefix + "/wo", dim, dim);
    p.bo = f.zeros(prefix + "/bo", {dim});
    return p;
  }
};

struct FfnParams {
  Tensor w1, b1, w2, b2;

  static FfnParams make(ParamFactory& f, const std::string& prefix, int64_t dim, int64_t ffn_dim) {
    FfnParams p;
    p.w1 = f.xavier(prefix + "/w1", dim, ffn_dim);
    p.b1 = f.zeros(prefix + "/b1", {ffn_dim});
    p.w2 = f.xavier(prefix + "/w2", ffn_dim, dim);
    p.b2 = f.zeros(prefix + "/b2", {dim});
    return p;
  }
};

struct EncoderLayerParams {
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
  AttentionParams attn;
  FfnParams ffn;

  static EncoderLayerParams make(ParamFactory& f, const std::string& prefix, int64_t dim, int64_t ffn_dim) {
    EncoderLayerParams p;
    p.ln1_g = f.ones(prefix + "/ln1_g", {dim});
    p.ln1_b = f.zeros(prefix + "/ln1_b", {dim});
    p.attn = AttentionParams::make(f, prefix + "/attn", dim);
    p.ln2_g = f.ones(prefix + "/ln2_g", {dim});
    p.ln2_b = f.zeros(prefix + "/ln2_b", {dim});
    p.ffn = FfnParams::make(f, prefix + "/ffn", dim, ffn_dim);
    return p;
  }
};

struct TransformerStack {
  std::vector<EncoderLayerParams> layers;
  Tensor final_g, final_b;

  static TransformerStack make(ParamFactory& f, const std::string& prefix, int n_layers, int64_t dim,
                               int64_t ffn_dim) {
    TransformerStack s;
    for (int l = 0; l < n_layers; ++l)
      s.layers.push_back(EncoderLayerParams::make(f, prefix + "/l" + std::to_string(l), dim, ffn_dim));
    s.final_g = f.ones(prefix + "/final_g", {dim});
    s.final_b = f.zeros(prefix + "/final_b", {dim});
    return s;
  }
};

// queries [Tq×D] attend over keys/values [Tk×D]; mask (optional) is Tq×Tk.
inline Tensor multi_head_attention(const Tensor& queries, const Tensor& keys_values,
                                   const AttentionParams& p, int n_heads,
                                   const std::vector<uint8_t>* mask = nullptr) {
  return ops::multi_head_attention_op(queries, keys_values, p.wq, p.bq, p.wk, p.bk, p.wv, p.bv,
                                      p.wo, p.bo, n_heads, mask);
}

inline Tensor ffn_forward(const Tensor& x, const FfnParams& p) {
  return ops::linear(ops::gelu(ops::linear(x, p.w1, p.b1)), p.w2, p.b2);
}

// Pre-norm layer: x + Attn(LN(x)), then x + FFN(LN(x)).
inline Tensor encoder_layer_forward(const Tensor& x, const EncoderLayerParams& lp, int n_heads,
                                    double dropout_rate, const RunCtx& ctx, const std::string& site) {
  Tensor h = ops::layer_norm(x, lp.ln1_g, lp.ln1_b);
  Tensor a = multi_head_attention(h, h, lp.attn, n_heads);
  a = ops::dropout(a, dropout_rate, ctx.dropout_key(site + "/attn"), ctx.training);
  Tensor x1 = ops::add(x, a);
  Tensor h2 = ops::layer_norm(x1, lp.ln2_g, lp.ln2_b);
  Tensor f = ffn_forward(h2, lp.ffn);
  f = ops::dropout(f, dropout_rate, ctx.dropout_key(site + "/ffn"), ctx.training);
  return ops::add(x1, f);
}

inline Tensor stack_forward(Tensor x, const TransformerStack& stack, int n_heads, double dropout_rate,
                            const RunCtx& ctx, const std::string& site) {
  for (size_t l = 0; l < stack.layers.size(); ++l)
    x = encoder_layer_forward(x, stack.layers[l], n_heads, dropout_rate, ctx,
                              site + "/l" + std::to_string(l));
  return ops::layer_norm(x, stack.final_g, stack.final_b);
}

}  // namespace xmal
