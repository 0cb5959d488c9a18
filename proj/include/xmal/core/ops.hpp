#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "xmal/core/tape.hpp"
#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal::ops {

inline bool recording(std::initializer_list<const Tensor*> operands) {
  if (!active_tape()) return false;
  for (const Tensor* t : operands)
    if (t->requires_grad()) return true;
  return false;
}

// ---------------------------------------------------------------------------
// matrix product
// ---------------------------------------------------------------------------

namespace detail {
// c += a[m×k] * b[k×n], ikj order
inline void mm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double aik = arow[kk];
      if (aik == 0.0) continue;
      const double* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
    }
  }
}
// c += a[m×k] * b[n×k]^T
inline void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += arow[kk] * brow[kk];
      crow[j] += s;
    }
  }
}
// c += a[k×m]^T * b[k×n]
inline void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      double* crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aki * brow[j];
    }
  }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2,
        cat("matmul: expects rank-2 operands, got ", shape_str(a.shape()), " and ", shape_str(b.shape())));
  check(a.size(1) == b.size(0),
        cat("matmul: inner dimensions disagree: ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  const int64_t m = a.size(0), k = a.size(1), n = b.size(1);
  Tensor out = Tensor::zeros({m, n});
  detail::mm_acc(a.data().data(), b.data().data(), out.data().data(), m, k, n);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    active_tape()->record([ac, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (ac.requires_grad()) detail::mm_nt_acc(g, bc.data().data(), ac.grad().data(), m, n, k);
      if (bc.requires_grad()) detail::mm_tn_acc(ac.data().data(), g, bc.grad().data(), k, m, n);
    });
  }
  return out;
}

// y = x * w + b in one tape entry.
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  check(x.rank() == 2 && w.rank() == 2 && b.rank() == 1,
        cat("linear: expects [m×k],[k×n],[n], got ", shape_str(x.shape()), " ", shape_str(w.shape()),
            " ", shape_str(b.shape())));
  check(x.size(1) == w.size(0) && w.size(1) == b.size(0),
        cat("linear: dimensions disagree: ", shape_str(x.shape()), " vs ", shape_str(w.shape()), " vs ",
            shape_str(b.shape())));
  const int64_t m = x.size(0), k = x.size(1), n = w.size(1);
  Tensor out = Tensor::zeros({m, n});
  double* po = out.data().data();
  const double* pb = b.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[i * n + j] = pb[j];
  detail::mm_acc(x.data().data(), w.data().data(), po, m, k, n);
  if (recording({&x, &w, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, wc = w, bc = b, oc = out;
    active_tape()->record([xc, wc, bc, oc, m, k, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (xc.requires_grad()) detail::mm_nt_acc(g, wc.data().data(), xc.grad().data(), m, n, k);
      if (wc.requires_grad()) detail::mm_tn_acc(xc.data().data(), g, wc.grad().data(), k, m, n);
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

inline Tensor transpose(const Tensor& a) {
  check(a.rank() == 2, cat("transpose: expects rank-2, got ", shape_str(a.shape())));
  const int64_t m = a.size(0), n = a.size(1);
  Tensor out = Tensor::zeros({n, m});
  const double* pa = a.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[j * m + i] = pa[i * n + j];
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    active_tape()->record([ac, oc, m, n]() mutable {
      if (!oc.has_grad() || !ac.requires_grad()) return;
      const double* g = oc.grad().data();
      double* ga = ac.grad().data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        cat("add: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    active_tape()->record([ac, bc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

inline Tensor add_rowvec(const Tensor& x, const Tensor& b) {
  check(x.rank() == 2 && b.rank() == 1 && x.size(1) == b.size(0),
        cat("add_rowvec: shapes ", shape_str(x.shape()), " and ", shape_str(b.shape()), " do not broadcast"));
  const int64_t m = x.size(0), n = x.size(1);
  Tensor out = Tensor::zeros({m, n});
  const double* px = x.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) po[i * n + j] = px[i * n + j] + pb[j];
  if (recording({&x, &b})) {
    out.set_requires_grad(true);
    Tensor xc = x, bc = b, oc = out;
    active_tape()->record([xc, bc, oc, m, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (xc.requires_grad()) {
        double* gx = xc.grad().data();
        for (int64_t i = 0; i < m * n; ++i) gx[i] += g[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        for (int64_t i = 0; i < m; ++i)
          for (int64_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
      }
    });
  }
  return out;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        cat("mul: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* po = out.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i];
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    active_tape()->record([ac, bc, oc, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        const double* pb2 = bc.data().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * pb2[i];
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        const double* pa2 = ac.data().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * pa2[i];
      }
    });
  }
  return out;
}

inline Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data().data();
  double* po = out.data().data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  if (recording({&a})) {
    out.set_requires_grad(true);
    Tensor ac = a, oc = out;
    active_tape()->record([ac, oc, c, n]() mutable {
      if (!oc.has_grad() || !ac.requires_grad()) return;
      const double* g = oc.grad().data();
      double* ga = ac.grad().data();
      for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

inline Tensor gelu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  const int64_t n = x.numel();
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  constexpr double inv_sqrt_2pi = 0.39894228040143267794;
  const bool rec = recording({&x});
  // derivative terms are cheap to produce alongside the forward values
  std::shared_ptr<std::vector<double>> deriv;
  if (rec) deriv = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double v = px[i];
    const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
    po[i] = v * cdf;
    if (rec) (*deriv)[static_cast<size_t>(i)] = cdf + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
  }
  if (rec) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, deriv, n]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gx = xc.grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (*deriv)[static_cast<size_t>(i)];
    });
  }
  return out;
}

inline Tensor tanh_op(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) po[i] = std::tanh(px[i]);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, n]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      const double* py = oc.data().data();
      double* gx = xc.grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (1.0 - py[i] * py[i]);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// softmax / layer norm / dropout
// ---------------------------------------------------------------------------

// Row-wise softmax. mask (optional) is a row-major m×n boolean; masked-out
// entries get probability exactly 0 and every row must keep at least one
// allowed entry. Rank-1 input is treated as a single row.
inline Tensor softmax_rows(const Tensor& x, const std::vector<uint8_t>* mask = nullptr) {
  check(x.rank() == 1 || x.rank() == 2,
        cat("softmax: expects rank-1 or rank-2, got ", shape_str(x.shape())));
  const int64_t m = x.rank() == 2 ? x.size(0) : 1;
  const int64_t n = x.rank() == 2 ? x.size(1) : x.size(0);
  if (mask)
    check(static_cast<int64_t>(mask->size()) == m * n,
          cat("softmax: mask size ", mask->size(), " does not cover ", m, "x", n));
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i) {
    const double* row = px + i * n;
    double* orow = po + i * n;
    const uint8_t* mrow = mask ? mask->data() + i * n : nullptr;
    double mx = -1e300;
    int64_t allowed = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (mrow && !mrow[j]) continue;
      ++allowed;
      if (row[j] > mx) mx = row[j];
    }
    check(allowed > 0, cat("softmax: row ", i, " is fully masked"));
    double z = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      if (mrow && !mrow[j]) {
        orow[j] = 0.0;
        continue;
      }
      orow[j] = std::exp(row[j] - mx);
      z += orow[j];
    }
    const double inv = 1.0 / z;
    for (int64_t j = 0; j < n; ++j) orow[j] *= inv;
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, m, n]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      const double* y = oc.data().data();
      double* gx = xc.grad().data();
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        const double* yrow = y + i * n;
        double dot = 0.0;
        for (int64_t j = 0; j < n; ++j) dot += grow[j] * yrow[j];
        double* gxrow = gx + i * n;
        for (int64_t j = 0; j < n; ++j) gxrow[j] += yrow[j] * (grow[j] - dot);
      }
    });
  }
  return out;
}

// Row-wise layer normalization with affine gain/bias, population variance.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  check(x.rank() == 1 || x.rank() == 2,
        cat("layer_norm: expects rank-1 or rank-2, got ", shape_str(x.shape())));
  const int64_t m = x.rank() == 2 ? x.size(0) : 1;
  const int64_t n = x.rank() == 2 ? x.size(1) : x.size(0);
  check(gain.rank() == 1 && gain.size(0) == n && bias.rank() == 1 && bias.size(0) == n,
        cat("layer_norm: gain/bias ", shape_str(gain.shape()), "/", shape_str(bias.shape()),
            " do not match feature dim ", n));
  Tensor out = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(m * n));
  auto inv_sd = std::make_shared<std::vector<double>>(static_cast<size_t>(m));
  const double* px = x.data().data();
  const double* pg = gain.data().data();
  const double* pb = bias.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i) {
    const double* row = px + i * n;
    double mean = 0.0;
    for (int64_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t j = 0; j < n; ++j) {
      double d = row[j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double isd = 1.0 / std::sqrt(var + eps);
    (*inv_sd)[static_cast<size_t>(i)] = isd;
    double* orow = po + i * n;
    double* hrow = xhat->data() + i * n;
    for (int64_t j = 0; j < n; ++j) {
      hrow[j] = (row[j] - mean) * isd;
      orow[j] = hrow[j] * pg[j] + pb[j];
    }
  }
  if (recording({&x, &gain, &bias})) {
    out.set_requires_grad(true);
    Tensor xc = x, gc = gain, bc = bias, oc = out;
    active_tape()->record([xc, gc, bc, oc, xhat, inv_sd, m, n]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      const double* pg2 = gc.data().data();
      for (int64_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        const double* hrow = xhat->data() + i * n;
        if (gc.requires_grad()) {
          double* gg = gc.grad().data();
          for (int64_t j = 0; j < n; ++j) gg[j] += grow[j] * hrow[j];
        }
        if (bc.requires_grad()) {
          double* gb = bc.grad().data();
          for (int64_t j = 0; j < n; ++j) gb[j] += grow[j];
        }
        if (xc.requires_grad()) {
          double sum_gy = 0.0, sum_gyh = 0.0;
          for (int64_t j = 0; j < n; ++j) {
            double gy = grow[j] * pg2[j];
            sum_gy += gy;
            sum_gyh += gy * hrow[j];
          }
          const double invn = 1.0 / static_cast<double>(n);
          const double isd = (*inv_sd)[static_cast<size_t>(i)];
          double* gx = xc.grad().data() + i * n;
          for (int64_t j = 0; j < n; ++j) {
            double gy = grow[j] * pg2[j];
            gx[j] += isd * (gy - invn * sum_gy - hrow[j] * invn * sum_gyh);
          }
        }
      }
    });
  }
  return out;
}

// Inverted dropout keyed by a counter-based stream: the same key always
// produces the same mask, which keeps finite-difference checks and replays
// exact. Identity when not training or rate == 0.
inline Tensor dropout(const Tensor& x, double rate, uint64_t key, bool training) {
  check(rate >= 0.0 && rate < 1.0, cat("dropout: rate ", rate, " outside [0,1)"));
  if (!training || rate == 0.0) return x;
  const int64_t n = x.numel();
  auto mask = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  RngStream rng(key);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (int64_t i = 0; i < n; ++i) (*mask)[static_cast<size_t>(i)] = rng.next_unit() >= rate ? keep_scale : 0.0;
  Tensor out = Tensor::zeros(x.shape());
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < n; ++i) po[i] = px[i] * (*mask)[static_cast<size_t>(i)];
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, mask, n]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gx = xc.grad().data();
      for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * (*mask)[static_cast<size_t>(i)];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// gathers / layout
// ---------------------------------------------------------------------------

// Rows of `table` at `ids`; the embedding lookup. Backward scatter-adds.
inline Tensor gather_rows(const Tensor& table, const std::vector<int>& ids) {
  check(table.rank() == 2, cat("embedding: table must be rank-2, got ", shape_str(table.shape())));
  const int64_t v = table.size(0), d = table.size(1);
  check(!ids.empty(), "embedding: empty id list");
  for (int id : ids)
    check(id >= 0 && id < v, cat("embedding: id ", id, " out of range [0,", v, ")"));
  const int64_t L = static_cast<int64_t>(ids.size());
  Tensor out = Tensor::zeros({L, d});
  const double* pt = table.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < L; ++i)
    for (int64_t j = 0; j < d; ++j) po[i * d + j] = pt[static_cast<int64_t>(ids[static_cast<size_t>(i)]) * d + j];
  if (recording({&table})) {
    out.set_requires_grad(true);
    Tensor tc = table, oc = out;
    auto idsc = std::make_shared<std::vector<int>>(ids);
    active_tape()->record([tc, oc, idsc, d]() mutable {
      if (!oc.has_grad() || !tc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gt = tc.grad().data();
      for (size_t i = 0; i < idsc->size(); ++i) {
        double* trow = gt + static_cast<int64_t>((*idsc)[i]) * d;
        const double* grow = g + static_cast<int64_t>(i) * d;
        for (int64_t j = 0; j < d; ++j) trow[j] += grow[j];
      }
    });
  }
  return out;
}

inline Tensor embedding(const Tensor& table, const std::vector<int>& ids) { return gather_rows(table, ids); }

inline Tensor slice_cols(const Tensor& x, int64_t c0, int64_t width) {
  check(x.rank() == 2, cat("slice_cols: expects rank-2, got ", shape_str(x.shape())));
  check(c0 >= 0 && width > 0 && c0 + width <= x.size(1),
        cat("slice_cols: range [", c0, ",", c0 + width, ") outside ", shape_str(x.shape())));
  const int64_t m = x.size(0), n = x.size(1);
  Tensor out = Tensor::zeros({m, width});
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < width; ++j) po[i * width + j] = px[i * n + c0 + j];
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, c0, width, m, n]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gx = xc.grad().data();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < width; ++j) gx[i * n + c0 + j] += g[i * width + j];
    });
  }
  return out;
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
  check(!parts.empty(), "concat_cols: no operands");
  const int64_t m = parts[0].size(0);
  int64_t total = 0;
  for (const auto& p : parts) {
    check(p.rank() == 2 && p.size(0) == m,
          cat("concat_cols: operand ", shape_str(p.shape()), " does not share ", m, " rows"));
    total += p.size(1);
  }
  Tensor out = Tensor::zeros({m, total});
  double* po = out.data().data();
  int64_t off = 0;
  bool any_grad = false;
  for (const auto& p : parts) {
    const int64_t w = p.size(1);
    const double* pp = p.data().data();
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < w; ++j) po[i * total + off + j] = pp[i * w + j];
    off += w;
    any_grad = any_grad || p.requires_grad();
  }
  if (active_tape() && any_grad) {
    out.set_requires_grad(true);
    Tensor oc = out;
    auto pc = std::make_shared<std::vector<Tensor>>(parts);
    active_tape()->record([oc, pc, m, total]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      int64_t off2 = 0;
      for (auto& p : *pc) {
        const int64_t w = p.size(1);
        if (p.requires_grad()) {
          double* gp = p.grad().data();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < w; ++j) gp[i * w + j] += g[i * total + off2 + j];
        }
        off2 += w;
      }
    });
  }
  return out;
}

// Unfold a [T×C] sequence into [T_out × kernel*C] windows for a strided
// 1-D convolution; out-of-range taps read zero.
inline Tensor im2col_1d(const Tensor& x, int64_t kernel, int64_t stride, int64_t pad) {
  check(x.rank() == 2, cat("im2col_1d: expects rank-2, got ", shape_str(x.shape())));
  check(kernel >= 1 && stride >= 1 && pad >= 0,
        cat("im2col_1d: bad kernel/stride/pad ", kernel, "/", stride, "/", pad));
  const int64_t t_in = x.size(0), c = x.size(1);
  const int64_t t_out = (t_in + 2 * pad - kernel) / stride + 1;
  check(t_out >= 1, cat("im2col_1d: input length ", t_in, " shorter than receptive field"));
  Tensor out = Tensor::zeros({t_out, kernel * c});
  const double* px = x.data().data();
  double* po = out.data().data();
  for (int64_t t = 0; t < t_out; ++t) {
    for (int64_t j = 0; j < kernel; ++j) {
      const int64_t src = t * stride + j - pad;
      if (src < 0 || src >= t_in) continue;
      double* dst = po + t * kernel * c + j * c;
      const double* srow = px + src * c;
      for (int64_t cc = 0; cc < c; ++cc) dst[cc] = srow[cc];
    }
  }
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    active_tape()->record([xc, oc, kernel, stride, pad, t_in, t_out, c]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gx = xc.grad().data();
      for (int64_t t = 0; t < t_out; ++t) {
        for (int64_t j = 0; j < kernel; ++j) {
          const int64_t src = t * stride + j - pad;
          if (src < 0 || src >= t_in) continue;
          const double* grow = g + t * kernel * c + j * c;
          double* xrow = gx + src * c;
          for (int64_t cc = 0; cc < c; ++cc) xrow[cc] += grow[cc];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// pooling / normalization / reductions
// ---------------------------------------------------------------------------

// Mean over the rows whose mask entry is true; the gradient distributes
// 1/count to each contributing position.
inline Tensor mean_pool_masked(const Tensor& states, const std::vector<uint8_t>& mask) {
  check(states.rank() == 2, cat("mean_pool: expects rank-2 states, got ", shape_str(states.shape())));
  const int64_t t = states.size(0), d = states.size(1);
  check(static_cast<int64_t>(mask.size()) == t,
        cat("mean_pool: mask length ", mask.size(), " does not match ", t, " rows"));
  int64_t count = 0;
  for (uint8_t m : mask) count += m ? 1 : 0;
  check(count > 0, "mean_pool: empty pooling window");
  Tensor out = Tensor::zeros({d});
  const double* ps = states.data().data();
  double* po = out.data().data();
  for (int64_t i = 0; i < t; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const double* row = ps + i * d;
    for (int64_t j = 0; j < d; ++j) po[j] += row[j];
  }
  const double inv = 1.0 / static_cast<double>(count);
  for (int64_t j = 0; j < d; ++j) po[j] *= inv;
  if (recording({&states})) {
    out.set_requires_grad(true);
    Tensor sc = states, oc = out;
    auto mc = std::make_shared<std::vector<uint8_t>>(mask);
    active_tape()->record([sc, oc, mc, t, d, inv]() mutable {
      if (!oc.has_grad() || !sc.requires_grad()) return;
      const double* g = oc.grad().data();
      double* gs = sc.grad().data();
      for (int64_t i = 0; i < t; ++i) {
        if (!(*mc)[static_cast<size_t>(i)]) continue;
        double* row = gs + i * d;
        for (int64_t j = 0; j < d; ++j) row[j] += g[j] * inv;
      }
    });
  }
  return out;
}

inline constexpr double kL2NormalizeTol = 1e-12;

inline Tensor l2_normalize(const Tensor& v) {
  check(v.rank() == 1, cat("l2_normalize: expects rank-1, got ", shape_str(v.shape())));
  const int64_t d = v.size(0);
  const double* pv = v.data().data();
  double nrm2 = 0.0;
  for (int64_t j = 0; j < d; ++j) nrm2 += pv[j] * pv[j];
  const double nrm = std::sqrt(nrm2);
  check(nrm >= kL2NormalizeTol, cat("l2_normalize: degenerate embedding (norm ", nrm, ")"));
  Tensor out = Tensor::zeros({d});
  double* po = out.data().data();
  const double inv = 1.0 / nrm;
  for (int64_t j = 0; j < d; ++j) po[j] = pv[j] * inv;
  if (recording({&v})) {
    out.set_requires_grad(true);
    Tensor vc = v, oc = out;
    active_tape()->record([vc, oc, d, inv]() mutable {
      if (!oc.has_grad() || !vc.requires_grad()) return;
      const double* g = oc.grad().data();
      const double* y = oc.data().data();
      double dot = 0.0;
      for (int64_t j = 0; j < d; ++j) dot += g[j] * y[j];
      double* gv = vc.grad().data();
      for (int64_t j = 0; j < d; ++j) gv[j] += (g[j] - y[j] * dot) * inv;
    });
  }
  return out;
}

// Squared Euclidean distance; for rank-2 operands the mean over rows.
inline Tensor squared_distance(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        cat("squared_distance: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  check(a.rank() == 1 || a.rank() == 2,
        cat("squared_distance: expects rank-1 or rank-2, got ", shape_str(a.shape())));
  const int64_t rows = a.rank() == 2 ? a.size(0) : 1;
  const int64_t n = a.numel();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double s = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double dif = pa[i] - pb[i];
    s += dif * dif;
  }
  const double inv_rows = 1.0 / static_cast<double>(rows);
  Tensor out = Tensor::scalar(s * inv_rows);
  if (recording({&a, &b})) {
    out.set_requires_grad(true);
    Tensor ac = a, bc = b, oc = out;
    active_tape()->record([ac, bc, oc, n, inv_rows]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0] * inv_rows;
      const double* pa2 = ac.data().data();
      const double* pb2 = bc.data().data();
      if (ac.requires_grad()) {
        double* ga = ac.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += 2.0 * (pa2[i] - pb2[i]) * g;
      }
      if (bc.requires_grad()) {
        double* gb = bc.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] -= 2.0 * (pa2[i] - pb2[i]) * g;
      }
    });
  }
  return out;
}

// sum_i weights[i] * x[i] -> scalar. General linear reduction; also the probe
// the finite-difference harness uses to scalarize any primitive output.
inline Tensor reduce_weighted_sum(const Tensor& x, const std::vector<double>& weights) {
  check(static_cast<int64_t>(weights.size()) == x.numel(),
        cat("reduce_weighted_sum: ", weights.size(), " weights vs ", x.numel(), " elements"));
  const double* px = x.data().data();
  double s = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) s += px[i] * weights[static_cast<size_t>(i)];
  Tensor out = Tensor::scalar(s);
  if (recording({&x})) {
    out.set_requires_grad(true);
    Tensor xc = x, oc = out;
    auto wc = std::make_shared<std::vector<double>>(weights);
    active_tape()->record([xc, oc, wc]() mutable {
      if (!oc.has_grad() || !xc.requires_grad()) return;
      const double g = oc.grad()[0];
      double* gx = xc.grad().data();
      for (size_t i = 0; i < wc->size(); ++i) gx[i] += g * (*wc)[i];
    });
  }
  return out;
}

// Sum of scalar tensors in one tape entry.
inline Tensor sum_scalars(const std::vector<Tensor>& xs) {
  check(!xs.empty(), "sum_scalars: no operands");
  double s = 0.0;
  bool any_grad = false;
  for (const auto& x : xs) {
    check(x.numel() == 1, cat("sum_scalars: operand ", shape_str(x.shape()), " is not scalar"));
    s += x.item();
    any_grad = any_grad || x.requires_grad();
  }
  Tensor out = Tensor::scalar(s);
  if (active_tape() && any_grad) {
    out.set_requires_grad(true);
    Tensor oc = out;
    auto xc = std::make_shared<std::vector<Tensor>>(xs);
    active_tape()->record([oc, xc]() mutable {
      if (!oc.has_grad()) return;
      const double g = oc.grad()[0];
      for (auto& x : *xc)
        if (x.requires_grad()) x.grad()[0] += g;
    });
  }
  return out;
}

inline Tensor mean_scalars(const std::vector<Tensor>& xs) {
  return scale(sum_scalars(xs), 1.0 / static_cast<double>(xs.size()));
}

// ---------------------------------------------------------------------------
// fused multi-head attention
// ---------------------------------------------------------------------------

// Full attention block as one tape entry: queries from xq, keys/values from
// xkv, per-head scaled dot-product softmax (optionally masked with a Tq×Tk
// boolean), head concat and output projection. Algebraically identical to
// the composition of linear/slice/matmul/softmax/concat primitives; fused to
// keep the tape short on the training hot path.
inline Tensor multi_head_attention_op(const Tensor& xq, const Tensor& xkv, const Tensor& wq,
                                      const Tensor& bq, const Tensor& wk, const Tensor& bk,
                                      const Tensor& wv, const Tensor& bv, const Tensor& wo,
                                      const Tensor& bo, int n_heads,
                                      const std::vector<uint8_t>* mask = nullptr) {
  check(xq.rank() == 2 && xkv.rank() == 2, "attention: inputs must be rank-2");
  const int64_t tq = xq.size(0), tk = xkv.size(0), dim = xq.size(1);
  check(xkv.size(1) == dim, cat("attention: query dim ", dim, " != key dim ", xkv.size(1)));
  check(dim % n_heads == 0, cat("attention: dim ", dim, " not divisible by ", n_heads, " heads"));
  for (const Tensor* w : {&wq, &wk, &wv, &wo})
    check(w->rank() == 2 && w->size(0) == dim && w->size(1) == dim,
          cat("attention: projection must be ", dim, "x", dim, ", got ", shape_str(w->shape())));
  if (mask)
    check(static_cast<int64_t>(mask->size()) == tq * tk,
          cat("attention: mask size ", mask->size(), " does not cover ", tq, "x", tk));
  const int64_t hd = dim / n_heads;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(hd));

  auto q = std::make_shared<std::vector<double>>(static_cast<size_t>(tq * dim));
  auto k = std::make_shared<std::vector<double>>(static_cast<size_t>(tk * dim));
  auto v = std::make_shared<std::vector<double>>(static_cast<size_t>(tk * dim));
  auto attn = std::make_shared<std::vector<double>>(static_cast<size_t>(n_heads * tq * tk));
  auto ctx = std::make_shared<std::vector<double>>(static_cast<size_t>(tq * dim), 0.0);

  auto project = [&](const Tensor& x, const Tensor& w, const Tensor& b, std::vector<double>& dst,
                     int64_t rows) {
    const double* pb = b.data().data();
    for (int64_t i = 0; i < rows; ++i)
      for (int64_t j = 0; j < dim; ++j) dst[static_cast<size_t>(i * dim + j)] = pb[j];
    detail::mm_acc(x.data().data(), w.data().data(), dst.data(), rows, dim, dim);
  };
  project(xq, wq, bq, *q, tq);
  project(xkv, wk, bk, *k, tk);
  project(xkv, wv, bv, *v, tk);

  const uint8_t* pm = mask ? mask->data() : nullptr;
  for (int h = 0; h < n_heads; ++h) {
    const int64_t c0 = h * hd;
    double* arow_base = attn->data() + static_cast<int64_t>(h) * tq * tk;
    for (int64_t i = 0; i < tq; ++i) {
      double* arow = arow_base + i * tk;
      const double* qrow = q->data() + i * dim + c0;
      double mx = -1e300;
      for (int64_t j = 0; j < tk; ++j) {
        if (pm && !pm[i * tk + j]) {
          arow[j] = -1e300;
          continue;
        }
        const double* krow = k->data() + j * dim + c0;
        double s = 0.0;
        for (int64_t d = 0; d < hd; ++d) s += qrow[d] * krow[d];
        arow[j] = s * inv_sqrt_d;
        if (arow[j] > mx) mx = arow[j];
      }
      check(mx > -1e299, cat("attention: row ", i, " is fully masked"));
      double z = 0.0;
      for (int64_t j = 0; j < tk; ++j) {
        arow[j] = (pm && !pm[i * tk + j]) ? 0.0 : std::exp(arow[j] - mx);
        z += arow[j];
      }
      const double inv_z = 1.0 / z;
      double* crow = ctx->data() + i * dim + c0;
      for (int64_t j = 0; j < tk; ++j) {
        arow[j] *= inv_z;
        if (arow[j] == 0.0) continue;
        const double* vrow = v->data() + j * dim + c0;
        for (int64_t d = 0; d < hd; ++d) crow[d] += arow[j] * vrow[d];
      }
    }
  }

  Tensor out = Tensor::zeros({tq, dim});
  {
    const double* pb = bo.data().data();
    double* po = out.data().data();
    for (int64_t i = 0; i < tq; ++i)
      for (int64_t j = 0; j < dim; ++j) po[i * dim + j] = pb[j];
    detail::mm_acc(ctx->data(), wo.data().data(), po, tq, dim, dim);
  }

  if (recording({&xq, &xkv, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo})) {
    out.set_requires_grad(true);
    Tensor xqc = xq, xkvc = xkv, wqc = wq, bqc = bq, wkc = wk, bkc = bk, wvc = wv, bvc = bv,
           woc = wo, boc = bo, oc = out;
    active_tape()->record([=]() mutable {
      if (!oc.has_grad()) return;
      const double* g = oc.grad().data();
      // output projection
      if (woc.requires_grad()) detail::mm_tn_acc(ctx->data(), g, woc.grad().data(), dim, tq, dim);
      if (boc.requires_grad()) {
        double* gb = boc.grad().data();
        for (int64_t i = 0; i < tq; ++i)
          for (int64_t j = 0; j < dim; ++j) gb[j] += g[i * dim + j];
      }
      std::vector<double> dctx(static_cast<size_t>(tq * dim), 0.0);
      detail::mm_nt_acc(g, woc.data().data(), dctx.data(), tq, dim, dim);

      std::vector<double> dq(static_cast<size_t>(tq * dim), 0.0);
      std::vector<double> dk(static_cast<size_t>(tk * dim), 0.0);
      std::vector<double> dv(static_cast<size_t>(tk * dim), 0.0);
      std::vector<double> da(static_cast<size_t>(tk));
      for (int h = 0; h < n_heads; ++h) {
        const int64_t c0 = h * hd;
        const double* arow_base = attn->data() + static_cast<int64_t>(h) * tq * tk;
        for (int64_t i = 0; i < tq; ++i) {
          const double* arow = arow_base + i * tk;
          const double* dcrow = dctx.data() + i * dim + c0;
          // dA = dC * V^T and dV += A^T * dC, restricted to this head
          double dot = 0.0;
          for (int64_t j = 0; j < tk; ++j) {
            const double* vrow = v->data() + j * dim + c0;
            double s = 0.0;
            for (int64_t d = 0; d < hd; ++d) s += dcrow[d] * vrow[d];
            da[static_cast<size_t>(j)] = s;
            dot += s * arow[j];
            if (arow[j] != 0.0) {
              double* dvrow = dv.data() + j * dim + c0;
              for (int64_t d = 0; d < hd; ++d) dvrow[d] += arow[j] * dcrow[d];
            }
          }
          // softmax backward, then the scaled score product
          const double* qrow = q->data() + i * dim + c0;
          double* dqrow = dq.data() + i * dim + c0;
          for (int64_t j = 0; j < tk; ++j) {
            const double ds = arow[j] * (da[static_cast<size_t>(j)] - dot) * inv_sqrt_d;
            if (ds == 0.0) continue;
            const double* krow = k->data() + j * dim + c0;
            double* dkrow = dk.data() + j * dim + c0;
            for (int64_t d = 0; d < hd; ++d) {
              dqrow[d] += ds * krow[d];
              dkrow[d] += ds * qrow[d];
            }
          }
        }
      }
      // back through the q/k/v projections
      auto unproject = [&](const Tensor& x, Tensor& xc2, const Tensor& w, Tensor& wc2, Tensor& bc2,
                           const std::vector<double>& dproj, int64_t rows) {
        if (xc2.requires_grad())
          detail::mm_nt_acc(dproj.data(), w.data().data(), xc2.grad().data(), rows, dim, dim);
        if (wc2.requires_grad())
          detail::mm_tn_acc(x.data().data(), dproj.data(), wc2.grad().data(), dim, rows, dim);
        if (bc2.requires_grad()) {
          double* gb = bc2.grad().data();
          for (int64_t i = 0; i < rows; ++i)
            for (int64_t j = 0; j < dim; ++j) gb[j] += dproj[static_cast<size_t>(i * dim + j)];
        }
      };
      unproject(xqc, xqc, wqc, wqc, bqc, dq, tq);
      unproject(xkvc, xkvc, wkc, wkc, bkc, dk, tk);
      unproject(xkvc, xkvc, wvc, wvc, bvc, dv, tk);
    });
  }
  return out;
}

}  // namespace xmal::ops
