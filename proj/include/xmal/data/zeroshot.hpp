#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "xmal/data/acoustic.hpp"
#include "xmal/data/bigram.hpp"
#include "xmal/data/corpus.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

// The three behavioral kinds of zero-shot label sets:
//   digit-like    single-token labels from one bigram context class, which a
//                 context-driven teacher embeds nearly on top of each other
//   word-like     single-token labels from distinct context classes
//   sentence-like full-sentence labels, several speakers per class
enum class ZeroShotKind { kDigitLike, kWordLike, kSentenceLike };

inline const char* zeroshot_kind_name(ZeroShotKind k) {
  switch (k) {
    case ZeroShotKind::kDigitLike: return "digit-like";
    case ZeroShotKind::kWordLike: return "word-like";
    case ZeroShotKind::kSentenceLike: return "sentence-like";
  }
  return "?";
}

inline ZeroShotKind zeroshot_kind_from(const std::string& s) {
  if (s == "digit-like") return ZeroShotKind::kDigitLike;
  if (s == "word-like") return ZeroShotKind::kWordLike;
  if (s == "sentence-like") return ZeroShotKind::kSentenceLike;
  fail(cat("zero-shot: unknown kind '", s, "' (digit-like|word-like|sentence-like)"));
}

struct ZeroShotDataset {
  ZeroShotKind kind;
  std::vector<std::vector<int>> label_tokens;  // k label sentences (content tokens)
  struct Item {
    Tensor frames;
    int true_label;
    int speaker;
  };
  std::vector<Item> items;
};

// Labels and utterances for one kind. Single-token kinds render with a
// duration law long enough to clear the conv receptive field; sentence-like
// uses the corpus law and n_per_class distinct speakers per label.
inline ZeroShotDataset gen_zeroshot_dataset(const BigramLanguage& lang, const AcousticModel& base_am,
                                            ZeroShotKind kind, int n_classes, int n_per_class,
                                            uint64_t seed,
                                            const std::set<std::string>* excluded_sentences = nullptr) {
  check(n_classes >= 2, cat("zero-shot: need at least 2 classes, got ", n_classes));
  check(n_per_class >= 1, "zero-shot: need at least one utterance per class");
  ZeroShotDataset ds;
  ds.kind = kind;
  RngStream rng(mix_key({seed, fnv1a("zeroshot"), fnv1a(zeroshot_kind_name(kind))}));

  if (kind == ZeroShotKind::kDigitLike) {
    const auto& cls0 = lang.tokens_of_class(0);
    check(n_classes <= static_cast<int>(cls0.size()),
          cat("zero-shot digit-like: ", n_classes, " classes > ", cls0.size(), " same-class tokens"));
    for (int i = 0; i < n_classes; ++i) ds.label_tokens.push_back({cls0[static_cast<size_t>(i)]});
  } else if (kind == ZeroShotKind::kWordLike) {
    check(n_classes <= lang.n_classes() - 1,
          cat("zero-shot word-like: ", n_classes, " classes > ", lang.n_classes() - 1,
              " distinct context classes"));
    for (int c = 1; c <= n_classes; ++c) ds.label_tokens.push_back({lang.tokens_of_class(c)[0]});
  } else {
    std::set<std::string> used;
    int64_t attempts = 0;
    while (static_cast<int>(ds.label_tokens.size()) < n_classes) {
      check(++attempts < 10000, "zero-shot sentence-like: cannot sample distinct label sentences");
      std::vector<int> sent = lang.sample_sentence(rng.next_int(6, 10), rng);
      std::string key = token_string(sent);
      if (used.count(key)) continue;
      if (excluded_sentences && excluded_sentences->count(key)) continue;
      used.insert(std::move(key));
      ds.label_tokens.push_back(std::move(sent));
    }
  }

  // single-token utterances need >= receptive-field frames
  const AcousticModel am = (kind == ZeroShotKind::kSentenceLike)
                               ? base_am
                               : base_am.with_variant(4, 8, base_am.noise_sigma());
  int speaker_base = 1000;
  for (int c = 0; c < n_classes; ++c) {
    for (int r = 0; r < n_per_class; ++r) {
      ZeroShotDataset::Item item;
      item.true_label = c;
      item.speaker = speaker_base++;  // distinct speaker per rendering
      item.frames = am.render(ds.label_tokens[static_cast<size_t>(c)], item.speaker);
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

}  // namespace xmal
