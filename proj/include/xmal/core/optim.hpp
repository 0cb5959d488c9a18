#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

// Inverse-square-root schedule: linear ramp to peak_lr over warmup_steps,
// then peak_lr * sqrt(warmup/step). Continuous at the warmup boundary.
struct LrSchedule {
  double peak_lr = 1e-3;
  int64_t warmup_steps = 300;

  double at(int64_t step) const {
    check(step >= 1, cat("lr schedule: step must be >= 1, got ", step));
    check(peak_lr > 0.0 && warmup_steps >= 1,
          cat("lr schedule: bad peak/warmup ", peak_lr, "/", warmup_steps));
    if (step <= warmup_steps)
      return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    return peak_lr * std::sqrt(static_cast<double>(warmup_steps) / static_cast<double>(step));
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

// Bias-corrected Adam over a fixed parameter list. Moment arrays are
// shape-congruent with their parameters; the step counter advances by one
// per update call. Missing gradients are treated as zero.
class Adam {
 public:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };

  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg = {}) : cfg_(cfg) {
    slots_.reserve(params.size());
    for (auto& [name, p] : params) {
      Slot s;
      s.name = name;
      s.param = p;
      s.m.assign(static_cast<size_t>(p.numel()), 0.0);
      s.v.assign(static_cast<size_t>(p.numel()), 0.0);
      slots_.push_back(std::move(s));
    }
  }

  void step(double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (Slot& s : slots_) {
      const int64_t n = s.param.numel();
      std::span<const double> g = s.param.grad_view();
      double* p = s.param.data().data();
      for (int64_t i = 0; i < n; ++i) {
        const double gi = g.empty() ? 0.0 : g[static_cast<size_t>(i)];
        check(std::isfinite(gi), cat("adam: non-finite gradient in parameter '", s.name, "'"));
        double& m = s.m[static_cast<size_t>(i)];
        double& v = s.v[static_cast<size_t>(i)];
        m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * gi;
        v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = m / bc1;
        const double vhat = v / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  void zero_grads() {
    for (Slot& s : slots_) s.param.zero_grad();
  }

  int64_t step_count() const { return t_; }
  const std::vector<Slot>& slots() const { return slots_; }

 private:
  AdamConfig cfg_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

}  // namespace xmal
