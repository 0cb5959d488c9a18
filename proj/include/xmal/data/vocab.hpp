#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmal/util/error.hpp"

namespace xmal {

// Token id space shared by every component. Ids below content_begin are
// specials and never appear inside generated sentences.
struct Vocabulary {
  int size = 64;
  int pad = 0;
  int bos = 1;
  int eos = 2;
  int mask = 3;

  int content_begin() const { return 4; }
  int n_content() const { return size - content_begin(); }

  void validate() const {
    check(size > content_begin(), cat("vocabulary: size ", size, " leaves no content tokens"));
    check(pad != bos && pad != eos && pad != mask && bos != eos && bos != mask && eos != mask,
          "vocabulary: special ids must be distinct");
    check(pad < size && bos < size && eos < size && mask < size,
          "vocabulary: special ids must be < size");
  }
};

inline std::vector<int> wrap_sentence(const std::vector<int>& content, const Vocabulary& vocab) {
  std::vector<int> out;
  out.reserve(content.size() + 2);
  out.push_back(vocab.bos);
  out.insert(out.end(), content.begin(), content.end());
  out.push_back(vocab.eos);
  return out;
}

}  // namespace xmal
