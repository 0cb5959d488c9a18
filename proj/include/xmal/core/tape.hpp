#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

// Reverse-mode tape. Forward ops append entries in topological order (an
// operand of entry i was produced by an earlier entry or is a leaf); backward
// replays them in reverse. Entries carry their own backward rule as a closure
// over the tensors involved.
class Tape {
 public:
  void record(std::function<void()> backward_rule) { entries_.push_back(std::move(backward_rule)); }

  size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  void run_backward() {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> entries_;
};

namespace detail {
inline Tape*& tape_slot() {
  thread_local Tape* t = nullptr;
  return t;
}
}  // namespace detail

inline Tape* active_tape() { return detail::tape_slot(); }

// RAII scope making a tape current on this thread. Passing nullptr gives a
// no-grad (eval) region.
class TapeScope {
 public:
  explicit TapeScope(Tape* t) : prev_(detail::tape_slot()) { detail::tape_slot() = t; }
  ~TapeScope() { detail::tape_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* prev_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every recorded
// tensor that requires grad. Frozen parameters (requires_grad == false) are
// never touched. The tape is cleared afterwards.
inline void backward(Tensor loss, Tape& tape) {
  check(loss.numel() == 1, cat("backward: loss must be scalar, got ", shape_str(loss.shape())));
  check(loss.requires_grad(), "backward: loss does not require grad (nothing recorded)");
  loss.grad()[0] += 1.0;
  tape.run_backward();
  tape.clear();
}

}  // namespace xmal
