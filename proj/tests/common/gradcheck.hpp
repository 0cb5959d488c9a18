#pragma once

// Central finite-difference gradient oracle. Lives in test code and never
// shares a code path with the backward rules it checks: the forward pass is
// re-evaluated at x +/- h with no tape, and the quotient is compared against
// the recorded analytic gradient.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "xmal/core/tape.hpp"
#include "xmal/core/tensor.hpp"
#include "xmal/util/rng.hpp"

namespace xmal::testing {

struct GradCheckReport {
  double max_rel_err = 0.0;
  int64_t checked_coords = 0;
  std::string worst_site;
};

// rel err uses a floored denominator: for gradients near zero the comparison
// degenerates to an absolute one at the floor scale, which is what fp64
// central differences at h=1e-5 can actually resolve.
inline double fd_rel_err(double analytic, double fd) {
  const double denom = std::max({std::abs(analytic), std::abs(fd), 1e-3});
  return std::abs(analytic - fd) / denom;
}

// build_loss must be a pure deterministic function of the leaves' current
// values (dropout and friends keyed, not stateful).
inline GradCheckReport finite_difference_check(const std::function<Tensor()>& build_loss,
                                               std::vector<std::pair<std::string, Tensor>> leaves,
                                               double h = 1e-5, int64_t max_coords_per_leaf = -1,
                                               uint64_t pick_seed = 0) {
  for (auto& [name, t] : leaves) t.drop_grad();
  Tape tape;
  Tensor loss;
  {
    TapeScope scope(&tape);
    loss = build_loss();
  }
  backward(loss, tape);

  auto eval = [&]() {
    TapeScope scope(nullptr);
    return build_loss().item();
  };

  GradCheckReport rep;
  RngStream pick(mix_key({pick_seed, 0xfdfdULL}));
  for (auto& [name, t] : leaves) {
    const int64_t n = t.numel();
    std::vector<int64_t> coords;
    if (max_coords_per_leaf < 0 || n <= max_coords_per_leaf) {
      for (int64_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (int64_t c = 0; c < max_coords_per_leaf; ++c) coords.push_back(pick.next_int(0, n - 1));
    }
    std::span<const double> g = t.grad_view();
    for (int64_t i : coords) {
      double* slot = &t.data()[static_cast<size_t>(i)];
      const double orig = *slot;
      *slot = orig + h;
      const double fp = eval();
      *slot = orig - h;
      const double fm = eval();
      *slot = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double analytic = g.empty() ? 0.0 : g[static_cast<size_t>(i)];
      const double err = fd_rel_err(analytic, fd);
      ++rep.checked_coords;
      if (err > rep.max_rel_err) {
        rep.max_rel_err = err;
        rep.worst_site = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

}  // namespace xmal::testing
