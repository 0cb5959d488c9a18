#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xmal/core/tensor.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

enum class RetrievalDirection { kTextToSpeech, kSpeechToText };

struct RetrievalDirectionResult {
  double accuracy = 0.0;
  double mean_margin = 0.0;  // mean top1 - top2 cosine gap over queries
};

struct RetrievalReport {
  std::string dataset_id;
  int64_t n = 0;
  RetrievalDirectionResult t2s;
  RetrievalDirectionResult s2t;
};

namespace retrieval_detail {

inline void check_embeddings(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "retrieval: embeddings must be rank-2 [n x dim]");
  check(a.size(0) == b.size(0) && a.size(1) == b.size(1),
        cat("retrieval: shape mismatch ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  check(a.size(0) > 0, "retrieval: empty embedding set");
  for (const Tensor* t : {&a, &b}) {
    for (int64_t i = 0; i < t->size(0); ++i) {
      double nrm = 0.0;
      for (int64_t j = 0; j < t->size(1); ++j) {
        const double v = t->data()[i * t->size(1) + j];
        nrm += v * v;
      }
      check(std::abs(std::sqrt(nrm) - 1.0) < 1e-6,
            cat("retrieval: row ", i, " is not unit norm (", std::sqrt(nrm), ")"));
    }
  }
}

}  // namespace retrieval_detail

// Exact argmax-cosine retrieval over the whole pool. Queries come from the
// source modality; success when the nearest target row is the query's own
// pair. Ties break to the lowest index.
inline RetrievalDirectionResult retrieval_accuracy(const Tensor& speech_embs, const Tensor& text_embs,
                                                   RetrievalDirection direction) {
  retrieval_detail::check_embeddings(speech_embs, text_embs);
  const int64_t n = speech_embs.size(0), d = speech_embs.size(1);
  const Tensor& queries = direction == RetrievalDirection::kTextToSpeech ? text_embs : speech_embs;
  const Tensor& targets = direction == RetrievalDirection::kTextToSpeech ? speech_embs : text_embs;
  int64_t hits = 0;
  double margin_sum = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* q = queries.data().data() + i * d;
    int64_t best = -1;
    double best_v = -2.0, second_v = -2.0;
    for (int64_t j = 0; j < n; ++j) {
      const double* t = targets.data().data() + j * d;
      double cosv = 0.0;
      for (int64_t k = 0; k < d; ++k) cosv += q[k] * t[k];
      if (cosv > best_v) {
        second_v = best_v;
        best_v = cosv;
        best = j;
      } else if (cosv > second_v) {
        second_v = cosv;
      }
    }
    hits += best == i ? 1 : 0;
    if (n > 1) margin_sum += best_v - second_v;
  }
  RetrievalDirectionResult res;
  res.accuracy = static_cast<double>(hits) / static_cast<double>(n);
  res.mean_margin = n > 1 ? margin_sum / static_cast<double>(n) : 0.0;
  return res;
}

inline RetrievalReport retrieval_report(const Tensor& speech_embs, const Tensor& text_embs,
                                        const std::string& dataset_id) {
  RetrievalReport rep;
  rep.dataset_id = dataset_id;
  rep.n = speech_embs.size(0);
  rep.t2s = retrieval_accuracy(speech_embs, text_embs, RetrievalDirection::kTextToSpeech);
  rep.s2t = retrieval_accuracy(speech_embs, text_embs, RetrievalDirection::kSpeechToText);
  return rep;
}

}  // namespace xmal
