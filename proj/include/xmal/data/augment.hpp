#pragma once

#include <cstdint>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

// SpecAugment-style masking: zero one random time band and one random
// channel band. Band widths are uniform in [0, max]; training-time only.
inline Tensor spec_augment_like(const Tensor& frames, int time_mask_max, int channel_mask_max,
                                uint64_t seed) {
  check(frames.rank() == 2, cat("spec_augment: frames must be rank-2, got ", shape_str(frames.shape())));
  const int64_t t = frames.size(0), c = frames.size(1);
  check(time_mask_max >= 0 && time_mask_max <= t,
        cat("spec_augment: time_mask_max ", time_mask_max, " exceeds ", t, " frames"));
  check(channel_mask_max >= 0 && channel_mask_max <= c,
        cat("spec_augment: channel_mask_max ", channel_mask_max, " exceeds ", c, " channels"));
  if (time_mask_max == 0 && channel_mask_max == 0) return frames;

  RngStream rng(seed);
  const int64_t tw = rng.next_int(0, time_mask_max);
  const int64_t t0 = rng.next_int(0, t - tw);
  const int64_t cw = rng.next_int(0, channel_mask_max);
  const int64_t c0 = rng.next_int(0, c - cw);

  Tensor out = frames.detached_clone();
  double* p = out.data().data();
  for (int64_t i = t0; i < t0 + tw; ++i)
    for (int64_t j = 0; j < c; ++j) p[i * c + j] = 0.0;
  for (int64_t i = 0; i < t; ++i)
    for (int64_t j = c0; j < c0 + cw; ++j) p[i * c + j] = 0.0;
  return out;
}

}  // namespace xmal
