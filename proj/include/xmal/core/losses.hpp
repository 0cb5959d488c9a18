#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "xmal/core/ops.hpp"
#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

// Weights of the composite objective: total = gamma * ce + beta * l2.
struct LossWeights {
  double gamma = 0.0;
  double beta = 1.0;

  void validate() const {
    check(gamma >= 0.0 && beta >= 0.0, cat("loss weights: gamma/beta must be >= 0, got ", gamma, "/", beta));
    check(gamma + beta > 0.0, "loss weights: gamma + beta must be positive");
  }
};

// Squared Euclidean distance between paired embeddings, batch-averaged for
// rank-2 inputs. Gradient reaches only the operands that require grad, so a
// frozen teacher side receives none.
inline Tensor l2_pair_loss(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape(),
        cat("l2_pair_loss: dim mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  return ops::squared_distance(a, b);
}

// Mean over valid positions of CE against the epsilon-smoothed target
// distribution: mass 1-eps on the target, eps/(V-1) elsewhere.
inline Tensor cross_entropy_label_smoothed(const Tensor& logits, const std::vector<int>& targets,
                                           double epsilon,
                                           const std::vector<uint8_t>* valid = nullptr) {
  check(logits.rank() == 2, cat("cross_entropy: logits must be rank-2, got ", shape_str(logits.shape())));
  const int64_t t = logits.size(0), v = logits.size(1);
  check(static_cast<int64_t>(targets.size()) == t,
        cat("cross_entropy: ", targets.size(), " targets vs ", t, " logit rows"));
  check(epsilon >= 0.0 && epsilon < 1.0, cat("cross_entropy: epsilon ", epsilon, " outside [0,1)"));
  check(v >= 2, cat("cross_entropy: vocab size ", v, " too small"));
  if (valid)
    check(static_cast<int64_t>(valid->size()) == t,
          cat("cross_entropy: valid mask length ", valid->size(), " vs ", t, " rows"));
  for (int64_t i = 0; i < t; ++i) {
    if (valid && !(*valid)[static_cast<size_t>(i)]) continue;
    const int tg = targets[static_cast<size_t>(i)];
    check(tg >= 0 && tg < v, cat("cross_entropy: target id ", tg, " >= vocab size ", v));
  }

  const double off_mass = epsilon / static_cast<double>(v - 1);
  const double on_mass = 1.0 - epsilon;
  const double* pl = logits.data().data();
  auto probs = std::make_shared<std::vector<double>>(static_cast<size_t>(t * v));
  int64_t n_valid = 0;
  double loss = 0.0;
  for (int64_t i = 0; i < t; ++i) {
    if (valid && !(*valid)[static_cast<size_t>(i)]) continue;
    ++n_valid;
    const double* row = pl + i * v;
    double mx = row[0];
    for (int64_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (int64_t j = 0; j < v; ++j) z += std::exp(row[j] - mx);
    const double log_z = std::log(z) + mx;
    double* prow = probs->data() + i * v;
    const int tg = targets[static_cast<size_t>(i)];
    for (int64_t j = 0; j < v; ++j) {
      const double logp = row[j] - log_z;
      prow[j] = std::exp(logp);
      const double q = (j == tg) ? on_mass : off_mass;
      loss -= q * logp;
    }
  }
  check(n_valid > 0, "cross_entropy: no valid positions");
  const double inv_valid = 1.0 / static_cast<double>(n_valid);
  Tensor out = Tensor::scalar(loss * inv_valid);

  if (ops::recording({&logits})) {
    out.set_requires_grad(true);
    Tensor lc = logits, oc = out;
    auto tg = std::make_shared<std::vector<int>>(targets);
    auto vm = std::make_shared<std::vector<uint8_t>>(valid ? *valid : std::vector<uint8_t>());
    active_tape()->record([lc, oc, tg, vm, probs, t, v, on_mass, off_mass, inv_valid]() mutable {
      if (!oc.has_grad() || !lc.requires_grad()) return;
      const double g = oc.grad()[0] * inv_valid;
      double* gl = lc.grad().data();
      for (int64_t i = 0; i < t; ++i) {
        if (!vm->empty() && !(*vm)[static_cast<size_t>(i)]) continue;
        const double* prow = probs->data() + i * v;
        double* grow = gl + i * v;
        const int target = (*tg)[static_cast<size_t>(i)];
        for (int64_t j = 0; j < v; ++j) {
          const double q = (j == target) ? on_mass : off_mass;
          grow[j] += g * (prow[j] - q);
        }
      }
    });
  }
  return out;
}

// total = gamma * ce + beta * l2, rejecting non-finite terms.
inline Tensor total_loss(const Tensor& ce, const Tensor& l2, const LossWeights& w) {
  w.validate();
  check(ce.numel() == 1 && l2.numel() == 1, "total_loss: terms must be scalars");
  check(std::isfinite(ce.item()) && std::isfinite(l2.item()),
        cat("total_loss: non-finite loss (ce=", ce.item(), ", l2=", l2.item(), ")"));
  return ops::add(ops::scale(ce, w.gamma), ops::scale(l2, w.beta));
}

}  // namespace xmal
