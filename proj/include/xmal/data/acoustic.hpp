#pragma once

#include <cstdint>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

// Synthetic acoustic renderer standing in for real speech features. Each
// token has a prototype frame vector; rendering repeats it for a random
// per-token duration, adds gaussian noise, then applies a per-speaker affine
// channel distortion. Deterministic in (tokens, speaker, seed).
class AcousticModel {
 public:
  static AcousticModel make(int vocab_size, int frame_dim, uint64_t seed, int d_min = 2, int d_max = 4,
                            double noise_sigma = 0.1) {
    check(d_min >= 1 && d_max >= d_min, cat("acoustic model: bad duration law [", d_min, ",", d_max, "]"));
    check(noise_sigma >= 0.0, cat("acoustic model: negative noise sigma ", noise_sigma));
    AcousticModel am;
    am.frame_dim_ = frame_dim;
    am.vocab_size_ = vocab_size;
    am.seed_ = seed;
    am.d_min_ = d_min;
    am.d_max_ = d_max;
    am.noise_sigma_ = noise_sigma;
    RngStream rng(mix_key({seed, fnv1a("acoustic-prototypes")}));
    am.prototypes_ = Tensor::randn({vocab_size, frame_dim}, rng, 1.0);
    return am;
  }

  // Same prototypes and seed, different duration law / noise level.
  AcousticModel with_variant(int d_min, int d_max, double noise_sigma) const {
    AcousticModel am = *this;
    check(d_min >= 1 && d_max >= d_min, cat("acoustic model: bad duration law [", d_min, ",", d_max, "]"));
    check(noise_sigma >= 0.0, cat("acoustic model: negative noise sigma ", noise_sigma));
    am.d_min_ = d_min;
    am.d_max_ = d_max;
    am.noise_sigma_ = noise_sigma;
    return am;
  }

  int frame_dim() const { return frame_dim_; }
  int d_min() const { return d_min_; }
  int d_max() const { return d_max_; }
  double noise_sigma() const { return noise_sigma_; }
  const Tensor& prototypes() const { return prototypes_; }

  struct Channel {
    std::vector<double> matrix;  // frame_dim × frame_dim, near identity
    std::vector<double> bias;    // frame_dim
  };

  // Per-speaker channel distortion; speaker 0 is exactly the identity.
  Channel channel_of(int speaker) const {
    const int f = frame_dim_;
    Channel ch;
    ch.matrix.assign(static_cast<size_t>(f) * f, 0.0);
    ch.bias.assign(static_cast<size_t>(f), 0.0);
    for (int i = 0; i < f; ++i) ch.matrix[static_cast<size_t>(i * f + i)] = 1.0;
    if (speaker == 0) return ch;
    RngStream rng(mix_key({seed_, fnv1a("speaker-channel"), static_cast<uint64_t>(speaker)}));
    const double scale = 0.15 / std::sqrt(static_cast<double>(f));
    for (auto& m : ch.matrix) m += scale * rng.next_normal();
    for (auto& b : ch.bias) b = 0.1 * rng.next_normal();
    return ch;
  }

  // frames = channel(speaker) applied to [prototype(token) repeated duration
  // times + noise], concatenated over tokens.
  Tensor render(const std::vector<int>& tokens, int speaker) const {
    check(!tokens.empty(), "render_frames: empty token sequence");
    for (int t : tokens)
      check(t >= 0 && t < vocab_size_, cat("render_frames: token ", t, " outside vocabulary"));

    uint64_t tok_key = 0xcbf29ce484222325ULL;
    for (int t : tokens) tok_key = mix_key({tok_key, static_cast<uint64_t>(t)});
    RngStream rng(mix_key({seed_, fnv1a("render"), static_cast<uint64_t>(speaker), tok_key}));

    std::vector<int> durations;
    durations.reserve(tokens.size());
    int total = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
      int d = static_cast<int>(rng.next_int(d_min_, d_max_));
      durations.push_back(d);
      total += d;
    }
    const int f = frame_dim_;
    const Channel ch = channel_of(speaker);
    Tensor frames = Tensor::zeros({total, f});
    double* out = frames.data().data();
    const double* proto = prototypes_.data().data();
    std::vector<double> raw(static_cast<size_t>(f));
    int row = 0;
    for (size_t i = 0; i < tokens.size(); ++i) {
      const double* p = proto + static_cast<int64_t>(tokens[i]) * f;
      for (int d = 0; d < durations[i]; ++d, ++row) {
        for (int j = 0; j < f; ++j)
          raw[static_cast<size_t>(j)] = p[j] + (noise_sigma_ > 0.0 ? noise_sigma_ * rng.next_normal() : 0.0);
        double* dst = out + static_cast<int64_t>(row) * f;
        for (int j = 0; j < f; ++j) {
          double acc = ch.bias[static_cast<size_t>(j)];
          const double* mrow = ch.matrix.data() + static_cast<size_t>(j) * f;
          for (int k = 0; k < f; ++k) acc += mrow[k] * raw[static_cast<size_t>(k)];
          dst[j] = acc;
        }
      }
    }
    return frames;
  }

 private:
  int frame_dim_ = 16;
  int vocab_size_ = 64;
  uint64_t seed_ = 0;
  int d_min_ = 2;
  int d_max_ = 4;
  double noise_sigma_ = 0.1;
  Tensor prototypes_;
};

}  // namespace xmal
