#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <utility>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

struct Param {
  std::string name;
  Tensor value;
};

// Named parameter collection with a shared frozen flag. Freezing clears
// requires_grad, so frozen parameters are invisible to the tape.
class ParamGroup {
 public:
  ParamGroup() = default;
  explicit ParamGroup(std::string name) : name_(std::move(name)) {}

  const std::string& name() const { return name_; }

  Tensor add(const std::string& local_name, Tensor t) {
    std::string full = name_.empty() ? local_name : name_ + "/" + local_name;
    for (const auto& p : params_)
      check(p.name != full, cat("param group: duplicate parameter '", full, "'"));
    t.set_requires_grad(!frozen_);
    params_.push_back({std::move(full), t});
    return t;
  }

  bool frozen() const { return frozen_; }
  void set_frozen(bool f) {
    frozen_ = f;
    for (auto& p : params_) p.value.set_requires_grad(!f);
  }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }

  int64_t numel() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
  }

  // Raw fp64 bytes in registration order; used for drift checks.
  std::vector<double> snapshot() const {
    std::vector<double> out;
    out.reserve(static_cast<size_t>(numel()));
    for (const auto& p : params_) out.insert(out.end(), p.value.data().begin(), p.value.data().end());
    return out;
  }

  uint64_t content_hash() const {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : params_) {
      for (double v : p.value.data()) {
        uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
          h ^= (bits >> (8 * i)) & 0xFF;
          h *= 0x100000001b3ULL;
        }
      }
    }
    return h;
  }

  void zero_grads() {
    for (auto& p : params_) p.value.zero_grad();
  }

 private:
  std::string name_;
  std::vector<Param> params_;
  bool frozen_ = false;
};

// Deterministic initializers keyed by (seed, full parameter name), so a
// parameter's initial value does not depend on what else the model contains.
class ParamFactory {
 public:
  ParamFactory(ParamGroup& group, uint64_t seed) : group_(group), seed_(seed) {}

  Tensor xavier(const std::string& name, int64_t fan_in, int64_t fan_out) {
    RngStream rng(key(name));
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return group_.add(name, Tensor::rand_uniform({fan_in, fan_out}, rng, -limit, limit));
  }

  Tensor normal(const std::string& name, Shape shape, double stdev) {
    RngStream rng(key(name));
    return group_.add(name, Tensor::randn(std::move(shape), rng, stdev));
  }

  Tensor zeros(const std::string& name, Shape shape) {
    return group_.add(name, Tensor::zeros(std::move(shape)));
  }

  Tensor ones(const std::string& name, Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data()) v = 1.0;
    return group_.add(name, t);
  }

 private:
  uint64_t key(const std::string& local) const {
    std::string full = group_.name().empty() ? local : group_.name() + "/" + local;
    return mix_key({seed_, fnv1a(full)});
  }

  ParamGroup& group_;
  uint64_t seed_;
};

// Copies values from `source` into every parameter of `group`, matched by
// name. The first missing or shape-mismatched parameter aborts the load.
inline void load_group_values(ParamGroup& group, const std::vector<Param>& source) {
  for (auto& p : group.params()) {
    const Param* found = nullptr;
    for (const auto& s : source) {
      if (s.name == p.name) {
        found = &s;
        break;
      }
    }
    check(found != nullptr, cat("checkpoint load: parameter '", p.name, "' missing from checkpoint"));
    check(found->value.shape() == p.value.shape(),
          cat("checkpoint load: parameter '", p.name, "' has shape ", shape_str(found->value.shape()),
              ", expected ", shape_str(p.value.shape())));
    p.value.copy_values_from(found->value);
  }
}

}  // namespace xmal
