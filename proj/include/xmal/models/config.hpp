#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "xmal/util/error.hpp"

namespace xmal {

struct TextEncoderConfig {
  int vocab_size = 64;
  int dim_t = 64;
  int n_layers_t = 4;
  int n_heads = 4;
  int ffn_dim = 128;
  int max_len = 64;
  double dropout_rate = 0.1;

  void validate() const {
    check(dim_t % n_heads == 0, cat("text encoder: dim_t ", dim_t, " not divisible by ", n_heads, " heads"));
    check(vocab_size >= 5 && n_layers_t >= 1 && ffn_dim >= 1 && max_len >= 4, "text encoder: bad config");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "text encoder: dropout outside [0,1)");
  }
};

struct SpeechEncoderConfig {
  int frame_dim = 16;
  std::vector<std::pair<int, int>> conv_layers = {{3, 2}, {3, 2}};  // (kernel, stride)
  int dim_s = 32;
  int n_layers_s = 3;
  int n_heads = 4;
  int ffn_dim = 64;
  double dropout_rate = 0.1;

  int total_downsampling() const {
    int f = 1;
    for (auto [k, s] : conv_layers) f *= s;
    return f;
  }

  // Exact output length of the conv stack for an input of length t.
  int64_t downsampled_len(int64_t t) const {
    for (auto [k, s] : conv_layers) {
      const int64_t pad = k / 2;
      t = (t + 2 * pad - k) / s + 1;
    }
    return t;
  }

  void validate() const {
    check(dim_s % n_heads == 0, cat("speech encoder: dim_s ", dim_s, " not divisible by ", n_heads, " heads"));
    check(!conv_layers.empty(), "speech encoder: needs at least one conv layer");
    for (auto [k, s] : conv_layers)
      check(k >= 1 && s >= 1, cat("speech encoder: bad conv kernel/stride ", k, "/", s));
    check(total_downsampling() >= 2, cat("speech encoder: total downsampling ", total_downsampling(), " < 2"));
    check(frame_dim >= 1 && n_layers_s >= 1 && ffn_dim >= 1, "speech encoder: bad config");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "speech encoder: dropout outside [0,1)");
  }
};

struct ProjectionHeadConfig {
  int in_dim = 32;
  int hidden_dim = 64;
  int out_dim = 64;
  double dropout_rate = 0.1;

  void validate(int dim_s, int dim_t) const {
    check(in_dim == dim_s, cat("projection: in_dim ", in_dim, " must equal student dim ", dim_s));
    check(out_dim == dim_t, cat("projection: out_dim ", out_dim, " must equal teacher dim ", dim_t));
    check(hidden_dim >= 1, "projection: bad hidden_dim");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "projection: dropout outside [0,1)");
  }
};

struct DecoderConfig {
  int n_layers_d = 2;
  int dim = 32;
  int n_heads = 4;
  int ffn_dim = 64;
  double dropout_rate = 0.1;
  int max_len = 64;

  void validate(int vocab_size) const {
    check(dim % n_heads == 0, cat("decoder: dim ", dim, " not divisible by ", n_heads, " heads"));
    check(n_layers_d >= 1 && ffn_dim >= 1 && vocab_size >= 5, "decoder: bad config");
    check(dropout_rate >= 0.0 && dropout_rate < 1.0, "decoder: dropout outside [0,1)");
  }
};

// The four architecture blocks of the two pipelines. Desk-scale defaults
// keep the teacher wider than the student.
struct ModelConfigs {
  TextEncoderConfig teacher;
  SpeechEncoderConfig student;
  ProjectionHeadConfig projection;
  DecoderConfig decoder;

  void validate() const {
    teacher.validate();
    student.validate();
    projection.validate(student.dim_s, teacher.dim_t);
    decoder.validate(teacher.vocab_size);
    check(decoder.dim == student.dim_s,
          cat("decoder: dim ", decoder.dim, " must match student dim ", student.dim_s,
              " (cross-attention operates on encoder states)"));
  }
};

}  // namespace xmal
