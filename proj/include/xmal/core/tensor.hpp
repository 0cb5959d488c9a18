#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// Dense fp64 tensor with value-handle semantics: copies share storage, which
// is what the tape relies on to address gradients. grad is allocated lazily
// and is always shape-congruent with data.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    validate_shape(shape);
    t.impl_->shape = std::move(shape);
    t.impl_->data.assign(static_cast<size_t>(shape_numel(t.impl_->shape)), 0.0);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false) {
    validate_shape(shape);
    check(shape_numel(shape) == static_cast<int64_t>(values.size()),
          cat("tensor: shape ", shape_str(shape), " does not match ", values.size(), " values"));
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(values);
    t.impl_->requires_grad = requires_grad;
    return t;
  }

  static Tensor scalar(double v) { return from({1}, {v}); }

  static Tensor randn(Shape shape, RngStream& rng, double stdev = 1.0, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.data()) x = rng.next_normal() * stdev;
    return t;
  }

  static Tensor rand_uniform(Shape shape, RngStream& rng, double lo, double hi,
                             bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    for (double& x : t.data()) x = lo + (hi - lo) * rng.next_unit();
    return t;
  }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int rank() const { return static_cast<int>(impl_->shape.size()); }
  int64_t size(int dim) const { return impl_->shape[static_cast<size_t>(dim)]; }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<double> data() { return impl_->data; }
  std::span<const double> data() const { return impl_->data; }

  double item() const {
    check(numel() == 1, cat("item: tensor ", shape_str(shape()), " is not a scalar"));
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool rg) { impl_->requires_grad = rg; }

  bool has_grad() const { return !impl_->grad.empty(); }

  // Allocates a zero gradient on first touch.
  std::span<double> grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0);
    return impl_->grad;
  }
  std::span<const double> grad_view() const { return impl_->grad; }

  void zero_grad() {
    for (double& g : impl_->grad) g = 0.0;
  }
  void drop_grad() { impl_->grad.clear(); }

  // Deep copy of values only; grad state and recording identity are not carried.
  Tensor detached_clone() const {
    Tensor t;
    t.impl_ = std::make_shared<Impl>();
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = false;
    return t;
  }

  void copy_values_from(const Tensor& other) {
    check(other.shape() == shape(), cat("copy_values_from: shape ", shape_str(other.shape()),
                                        " does not match ", shape_str(shape())));
    impl_->data = std::vector<double>(other.data().begin(), other.data().end());
  }

  const void* id() const { return impl_.get(); }

 private:
  struct Impl {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty = absent
    bool requires_grad = false;
  };

  static void validate_shape(const Shape& s) {
    for (int64_t d : s) check(d > 0, cat("tensor: non-positive dimension in shape ", shape_str(s)));
  }

  std::shared_ptr<Impl> impl_;
};

}  // namespace xmal
