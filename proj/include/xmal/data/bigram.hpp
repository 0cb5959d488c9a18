#pragma once

#include <cstdint>
#include <vector>

#include "xmal/data/vocab.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/rng.hpp"

namespace xmal {

// Class-structured bigram language over the content tokens. Transition
// probabilities depend only on (class(prev) -> class(next)); tokens inside a
// class are drawn uniformly, which makes same-class tokens statistically
// interchangeable for a context-driven teacher. Class 0 is widened so it can
// supply ten interchangeable single-token labels.
class BigramLanguage {
 public:
  static constexpr int kWideClassSize = 10;
  static constexpr int kNarrowClassSize = 5;

  static BigramLanguage make(const Vocabulary& vocab, uint64_t seed) {
    vocab.validate();
    BigramLanguage lang;
    lang.vocab_ = vocab;
    const int n_content = vocab.n_content();
    check(n_content >= kWideClassSize + kNarrowClassSize,
          cat("bigram language: ", n_content, " content tokens cannot hold the class layout"));

    int tok = vocab.content_begin();
    lang.class_tokens_.push_back({});
    for (int i = 0; i < kWideClassSize; ++i) lang.class_tokens_[0].push_back(tok++);
    while (tok < vocab.size) {
      std::vector<int> cls;
      for (int i = 0; i < kNarrowClassSize && tok < vocab.size; ++i) cls.push_back(tok++);
      lang.class_tokens_.push_back(cls);
    }
    lang.class_of_.assign(static_cast<size_t>(vocab.size), -1);
    for (size_t c = 0; c < lang.class_tokens_.size(); ++c)
      for (int t : lang.class_tokens_[c]) lang.class_of_[static_cast<size_t>(t)] = static_cast<int>(c);

    // Sharp but ergodic class transitions: a few preferred successors per
    // class plus a uniform floor.
    const int n_classes = lang.n_classes();
    RngStream rng(mix_key({seed, fnv1a("bigram-transitions")}));
    lang.trans_.assign(static_cast<size_t>(n_classes),
                       std::vector<double>(static_cast<size_t>(n_classes), 0.0));
    for (int c = 0; c < n_classes; ++c) {
      auto& row = lang.trans_[static_cast<size_t>(c)];
      for (int d = 0; d < n_classes; ++d) row[static_cast<size_t>(d)] = 0.05 + 0.1 * rng.next_unit();
      for (int p = 0; p < 3; ++p) {
        int d = static_cast<int>(rng.next_int(0, n_classes - 1));
        row[static_cast<size_t>(d)] += 1.0 + rng.next_unit();
      }
      double sum = 0.0;
      for (double w : row) sum += w;
      for (double& w : row) w /= sum;
    }
    return lang;
  }

  int n_classes() const { return static_cast<int>(class_tokens_.size()); }
  const Vocabulary& vocab() const { return vocab_; }

  int class_of(int token) const {
    check(token >= 0 && token < vocab_.size, cat("bigram language: token ", token, " out of range"));
    const int c = class_of_[static_cast<size_t>(token)];
    check(c >= 0, cat("bigram language: token ", token, " is a special, not content"));
    return c;
  }

  const std::vector<int>& tokens_of_class(int c) const {
    check(c >= 0 && c < n_classes(), cat("bigram language: class ", c, " out of range"));
    return class_tokens_[static_cast<size_t>(c)];
  }

  int sample_class(RngStream& rng) const { return static_cast<int>(rng.next_int(0, n_classes() - 1)); }

  int sample_next_class(int prev_class, RngStream& rng) const {
    const auto& row = trans_[static_cast<size_t>(prev_class)];
    double u = rng.next_unit();
    for (size_t d = 0; d < row.size(); ++d) {
      u -= row[d];
      if (u < 0.0) return static_cast<int>(d);
    }
    return n_classes() - 1;
  }

  int sample_token_of_class(int c, RngStream& rng) const {
    const auto& toks = tokens_of_class(c);
    return toks[static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(toks.size()) - 1))];
  }

  std::vector<int> sample_sentence(int64_t len, RngStream& rng) const {
    check(len >= 1, "bigram language: sentence length must be >= 1");
    std::vector<int> out;
    out.reserve(static_cast<size_t>(len));
    int cls = sample_class(rng);
    out.push_back(sample_token_of_class(cls, rng));
    for (int64_t i = 1; i < len; ++i) {
      cls = sample_next_class(cls, rng);
      out.push_back(sample_token_of_class(cls, rng));
    }
    return out;
  }

 private:
  Vocabulary vocab_;
  std::vector<std::vector<int>> class_tokens_;
  std::vector<int> class_of_;
  std::vector<std::vector<double>> trans_;
};

}  // namespace xmal
