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

// Five probing tasks over the synthetic language:
//   LEN      sentence-length bucket, 6 classes
//   CONTENT  which of 20 designated tokens occurs (exactly one does)
//   SHIFT    whether one adjacent token pair was swapped
//   MARKER   which of 2 marker tokens appears (exactly one does)
//   PARITY   parity of the count of designated-class tokens (counts 1 or 2)
enum class ProbeTask { kLen, kContent, kShift, kMarker, kParity };

inline const char* probe_task_name(ProbeTask t) {
  switch (t) {
    case ProbeTask::kLen: return "LEN";
    case ProbeTask::kContent: return "CONTENT";
    case ProbeTask::kShift: return "SHIFT";
    case ProbeTask::kMarker: return "MARKER";
    case ProbeTask::kParity: return "PARITY";
  }
  return "?";
}

inline ProbeTask probe_task_from(const std::string& s) {
  for (ProbeTask t : {ProbeTask::kLen, ProbeTask::kContent, ProbeTask::kShift, ProbeTask::kMarker,
                      ProbeTask::kParity})
    if (s == probe_task_name(t)) return t;
  fail(cat("probing: unknown task '", s, "' (LEN|CONTENT|SHIFT|MARKER|PARITY)"));
}

inline std::vector<ProbeTask> all_probe_tasks() {
  return {ProbeTask::kLen, ProbeTask::kContent, ProbeTask::kShift, ProbeTask::kMarker, ProbeTask::kParity};
}

struct ProbingExample {
  std::vector<int> tokens;
  Tensor frames;
  int label = 0;
  int speaker = 0;
  std::vector<int> source_tokens;  // SHIFT positives: the sentence before the swap
};

struct ProbingSplits {
  ProbeTask task;
  int n_classes = 0;
  std::vector<ProbingExample> train, valid, test;
};

namespace probe_detail {

constexpr int kLenBuckets = 6;
constexpr int kLenMin = 4;   // buckets {4,5} {6,7} ... {14,15}
constexpr int kLenMax = 15;
constexpr int kContentClasses = 20;
constexpr int kParityClass = 7;   // designated token class for PARITY
constexpr int kMarkerClassA = 5;  // marker tokens come from two distinct classes
constexpr int kMarkerClassB = 6;

inline int len_bucket(int64_t len) {
  check(len >= kLenMin && len <= kLenMax, cat("probing LEN: length ", len, " outside bucket range"));
  return static_cast<int>((len - kLenMin) / 2);
}

// 20 designated tokens for CONTENT: first tokens of classes 1..10, second
// tokens of classes 1..10 (all outside the wide class 0).
inline std::vector<int> content_tokens(const BigramLanguage& lang) {
  std::vector<int> out;
  for (int c = 1; c <= 10; ++c) out.push_back(lang.tokens_of_class(c)[0]);
  for (int c = 1; c <= 10; ++c) out.push_back(lang.tokens_of_class(c)[1]);
  return out;
}

inline std::pair<int, int> marker_tokens(const BigramLanguage& lang) {
  return {lang.tokens_of_class(kMarkerClassA)[2], lang.tokens_of_class(kMarkerClassB)[2]};
}

// Replace any occurrence of `banned` tokens with a same-class substitute.
inline void scrub(std::vector<int>& sent, const std::set<int>& banned, const BigramLanguage& lang,
                  RngStream& rng) {
  for (int& t : sent) {
    while (banned.count(t)) {
      const auto& cls = lang.tokens_of_class(lang.class_of(t));
      int alt = cls[static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(cls.size()) - 1))];
      if (!banned.count(alt)) {
        t = alt;
        break;
      }
      // class fully banned: move to the wide class
      t = lang.tokens_of_class(0)[static_cast<size_t>(rng.next_int(0, 9))];
    }
  }
}

}  // namespace probe_detail

struct ProbeSizes {
  int64_t train = 10000;
  int64_t valid = 1000;
  int64_t test = 1000;
};

// Generates one task with class balance enforced per split and split
// sentences disjoint from each other and from `excluded_sentences`. The test
// split is rendered with `tts_am` (the degraded "TTS-error" variant); train
// and valid renderings use the base model.
inline ProbingSplits gen_probing_task(const BigramLanguage& lang, const AcousticModel& am,
                                      const AcousticModel& tts_am, ProbeTask task,
                                      const ProbeSizes& sizes, uint64_t seed,
                                      const std::set<std::string>* excluded_sentences = nullptr) {
  using namespace probe_detail;
  ProbingSplits out;
  out.task = task;
  switch (task) {
    case ProbeTask::kLen: out.n_classes = kLenBuckets; break;
    case ProbeTask::kContent: out.n_classes = kContentClasses; break;
    case ProbeTask::kShift: out.n_classes = 2; break;
    case ProbeTask::kMarker: out.n_classes = 2; break;
    case ProbeTask::kParity: out.n_classes = 2; break;
  }

  RngStream rng(mix_key({seed, fnv1a("probing"), fnv1a(probe_task_name(task))}));
  std::set<std::string> seen;
  if (excluded_sentences) seen = *excluded_sentences;

  const std::vector<int> designated = content_tokens(lang);
  const std::set<int> designated_set(designated.begin(), designated.end());
  const auto [marker_a, marker_b] = marker_tokens(lang);
  const std::set<int> marker_set = {marker_a, marker_b};
  std::set<int> parity_set;
  for (int t : lang.tokens_of_class(kParityClass)) parity_set.insert(t);

  std::vector<int> last_shift_source;

  // Builds one candidate (tokens, label) for the task.
  auto make_example = [&](int want_label) -> std::vector<int> {
    switch (task) {
      case ProbeTask::kLen: {
        const int64_t len = kLenMin + 2 * want_label + rng.next_int(0, 1);
        return lang.sample_sentence(len, rng);
      }
      case ProbeTask::kContent: {
        std::vector<int> s = lang.sample_sentence(rng.next_int(5, 12), rng);
        scrub(s, designated_set, lang, rng);
        s[static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(s.size()) - 1))] =
            designated[static_cast<size_t>(want_label)];
        return s;
      }
      case ProbeTask::kShift: {
        std::vector<int> s = lang.sample_sentence(rng.next_int(5, 12), rng);
        last_shift_source.clear();
        if (want_label == 1) {
          // swap one random adjacent pair with distinct tokens
          for (int tries = 0; tries < 32; ++tries) {
            const int64_t i = rng.next_int(0, static_cast<int64_t>(s.size()) - 2);
            if (s[static_cast<size_t>(i)] != s[static_cast<size_t>(i + 1)]) {
              last_shift_source = s;
              std::swap(s[static_cast<size_t>(i)], s[static_cast<size_t>(i + 1)]);
              return s;
            }
          }
          return {};  // degenerate sentence, resample
        }
        return s;
      }
      case ProbeTask::kMarker: {
        std::vector<int> s = lang.sample_sentence(rng.next_int(5, 12), rng);
        scrub(s, marker_set, lang, rng);
        s[static_cast<size_t>(rng.next_int(0, static_cast<int64_t>(s.size()) - 1))] =
            want_label == 0 ? marker_a : marker_b;
        return s;
      }
      case ProbeTask::kParity: {
        std::vector<int> s = lang.sample_sentence(rng.next_int(5, 12), rng);
        scrub(s, parity_set, lang, rng);
        // odd label -> one designated-class token, even label -> two
        const int want_count = want_label == 1 ? 1 : 2;
        check(static_cast<int>(s.size()) >= want_count + 1, "probing PARITY: sentence too short");
        std::set<int64_t> positions;
        while (static_cast<int>(positions.size()) < want_count)
          positions.insert(rng.next_int(0, static_cast<int64_t>(s.size()) - 1));
        for (int64_t pos : positions)
          s[static_cast<size_t>(pos)] = lang.sample_token_of_class(kParityClass, rng);
        return s;
      }
    }
    return {};
  };

  auto ground_truth = [&](const std::vector<int>& s) -> int {
    switch (task) {
      case ProbeTask::kLen: return len_bucket(static_cast<int64_t>(s.size()));
      case ProbeTask::kContent: {
        int found = -1;
        for (int t : s) {
          for (size_t d = 0; d < designated.size(); ++d) {
            if (t == designated[d]) {
              check(found < 0, "probing CONTENT: more than one designated token");
              found = static_cast<int>(d);
            }
          }
        }
        check(found >= 0, "probing CONTENT: no designated token");
        return found;
      }
      case ProbeTask::kShift: return -1;  // label is by construction, not content-computable
      case ProbeTask::kMarker: {
        int found = -1;
        for (int t : s) {
          if (t == marker_a || t == marker_b) {
            check(found < 0, "probing MARKER: more than one marker");
            found = t == marker_a ? 0 : 1;
          }
        }
        check(found >= 0, "probing MARKER: no marker");
        return found;
      }
      case ProbeTask::kParity: {
        int count = 0;
        for (int t : s) count += parity_set.count(t) ? 1 : 0;
        return count % 2;
      }
    }
    return -1;
  };

  auto fill = [&](std::vector<ProbingExample>& split, int64_t n, const AcousticModel& render_am) {
    check(n >= out.n_classes,
          cat("probing: split size ", n, " below one example per class (", out.n_classes, ")"));
    std::vector<int64_t> quota(static_cast<size_t>(out.n_classes), n / out.n_classes);
    for (int64_t i = 0; i < n % out.n_classes; ++i) ++quota[static_cast<size_t>(i)];
    int64_t attempts = 0;
    for (int c = 0; c < out.n_classes; ++c) {
      while (quota[static_cast<size_t>(c)] > 0) {
        check(++attempts < 200 * n + 10000,
              cat("probing ", probe_task_name(task), ": exceeded sampling budget; sizes too large"));
        std::vector<int> s = make_example(c);
        if (s.empty()) continue;
        std::string key = token_string(s);
        if (seen.count(key)) continue;
        if (task != ProbeTask::kShift) check(ground_truth(s) == c, "probing: label rule violated");
        seen.insert(std::move(key));
        ProbingExample ex;
        ex.tokens = std::move(s);
        ex.label = c;
        ex.speaker = static_cast<int>(rng.next_int(0, 15));
        ex.frames = render_am.render(ex.tokens, ex.speaker);
        ex.source_tokens = last_shift_source;
        split.push_back(std::move(ex));
        --quota[static_cast<size_t>(c)];
      }
    }
  };

  fill(out.train, sizes.train, am);
  fill(out.valid, sizes.valid, am);
  fill(out.test, sizes.test, tts_am);
  return out;
}

}  // namespace xmal
