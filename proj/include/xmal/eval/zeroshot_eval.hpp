#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

struct ZeroShotReport {
  std::string kind;
  int64_t n = 0;
  double accuracy = 0.0;
  int64_t n_classes = 0;
  std::vector<int64_t> confusion;  // [true * k + predicted]
  bool duplicate_label_warning = false;
  double mean_pairwise_label_cosine = 0.0;
};

// Nearest-label-by-cosine classification; ties break to the lowest label
// index. Exactly duplicated label embeddings are flagged (the embedding
// overlap phenomenon) but classification proceeds.
inline ZeroShotReport zero_shot_classify(const Tensor& speech_embs, const Tensor& label_embs,
                                         const std::vector<int>& true_labels,
                                         const std::string& kind = "") {
  check(speech_embs.rank() == 2 && label_embs.rank() == 2, "zero-shot: embeddings must be rank-2");
  const int64_t n = speech_embs.size(0), d = speech_embs.size(1), k = label_embs.size(0);
  check(k >= 2, cat("zero-shot: need at least 2 labels, got ", k));
  check(label_embs.size(1) == d, "zero-shot: label dim mismatch");
  check(static_cast<int64_t>(true_labels.size()) == n, "zero-shot: truth length mismatch");
  for (int t : true_labels) check(t >= 0 && t < k, cat("zero-shot: bad true label ", t));

  ZeroShotReport rep;
  rep.kind = kind;
  rep.n = n;
  rep.n_classes = k;
  rep.confusion.assign(static_cast<size_t>(k * k), 0);

  double cos_sum = 0.0;
  int64_t cos_pairs = 0;
  for (int64_t a = 0; a < k; ++a) {
    for (int64_t b = a + 1; b < k; ++b) {
      double cosv = 0.0;
      bool identical = true;
      for (int64_t j = 0; j < d; ++j) {
        const double va = label_embs.data()[a * d + j], vb = label_embs.data()[b * d + j];
        cosv += va * vb;
        identical = identical && va == vb;
      }
      cos_sum += cosv;
      ++cos_pairs;
      rep.duplicate_label_warning = rep.duplicate_label_warning || identical;
    }
  }
  rep.mean_pairwise_label_cosine = cos_sum / static_cast<double>(cos_pairs);

  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double* q = speech_embs.data().data() + i * d;
    int64_t best = 0;
    double best_v = -2.0;
    for (int64_t c = 0; c < k; ++c) {
      const double* l = label_embs.data().data() + c * d;
      double cosv = 0.0;
      for (int64_t j = 0; j < d; ++j) cosv += q[j] * l[j];
      if (cosv > best_v) {
        best_v = cosv;
        best = c;
      }
    }
    rep.confusion[static_cast<size_t>(true_labels[static_cast<size_t>(i)] * k + best)]++;
    hits += best == true_labels[static_cast<size_t>(i)] ? 1 : 0;
  }
  rep.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  return rep;
}

}  // namespace xmal
