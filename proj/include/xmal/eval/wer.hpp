#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "xmal/util/error.hpp"

namespace xmal {

// Edit distance (substitutions + insertions + deletions).
inline int64_t levenshtein(const std::vector<int>& a, const std::vector<int>& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

// Word error rate: edits / reference length. May exceed 1. Symmetric under
// swapping arguments only when lengths are equal.
inline double wer(const std::vector<int>& reference, const std::vector<int>& hypothesis) {
  check(!reference.empty(), "wer: empty reference");
  return static_cast<double>(levenshtein(reference, hypothesis)) /
         static_cast<double>(reference.size());
}

}  // namespace xmal
