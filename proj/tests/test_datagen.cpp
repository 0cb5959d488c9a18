#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <set>

#include "xmal/data/augment.hpp"
#include "xmal/data/corpus.hpp"
#include "xmal/data/probing.hpp"
#include "xmal/data/zeroshot.hpp"

using namespace xmal;
using Catch::Approx;

namespace {
CorpusConfig tiny_corpus_cfg() {
  CorpusConfig cfg;
  cfg.seed = 99;
  cfg.n_train = 60;
  cfg.n_valid = 12;
  cfg.n_test = 12;
  return cfg;
}

bool same_frames(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}
}  // namespace

TEST_CASE("corpus generation is deterministic and splits are disjoint") {
  PairedCorpus a = gen_corpus(tiny_corpus_cfg());
  PairedCorpus b = gen_corpus(tiny_corpus_cfg());
  REQUIRE(a.train.size() == 60);
  for (size_t i = 0; i < a.train.size(); ++i) {
    REQUIRE(a.train[i].tokens == b.train[i].tokens);
    REQUIRE(a.train[i].speaker == b.train[i].speaker);
    REQUIRE(same_frames(a.train[i].frames, b.train[i].frames));
  }
  std::set<std::string> all;
  for (const auto* split : {&a.train, &a.valid, &a.test})
    for (const auto& p : *split) {
      std::string key = token_string(p.tokens);
      REQUIRE(all.count(key) == 0);
      all.insert(key);
      REQUIRE(static_cast<int>(p.tokens.size()) >= a.cfg.len_min);
      REQUIRE(static_cast<int>(p.tokens.size()) <= a.cfg.len_max);
    }
}

TEST_CASE("re-rendering stored tokens reproduces frames bit-exactly") {
  PairedCorpus c = gen_corpus(tiny_corpus_cfg());
  for (const auto& p : c.train) {
    Tensor again = c.am.render(p.tokens, p.speaker);
    REQUIRE(same_frames(p.frames, again));
  }
}

TEST_CASE("render: sigma=0, unit durations, identity channel reproduces prototype rows") {
  AcousticModel am = AcousticModel::make(16, 8, 7, 1, 1, 0.0);
  std::vector<int> tokens = {3, 1, 4};
  Tensor frames = am.render(tokens, /*speaker=*/0);
  REQUIRE(frames.size(0) == 3);
  const double* proto = am.prototypes().data().data();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 8; ++j)
      REQUIRE(frames.data()[i * 8 + j] == proto[tokens[static_cast<size_t>(i)] * 8 + j]);
}

TEST_CASE("render: total frames within [len*d_min, len*d_max]") {
  AcousticModel am = AcousticModel::make(16, 8, 11, 2, 5, 0.1);
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> tokens;
    const int64_t len = rng.next_int(1, 9);
    for (int64_t i = 0; i < len; ++i) tokens.push_back(static_cast<int>(rng.next_int(0, 15)));
    Tensor frames = am.render(tokens, static_cast<int>(trial));
    REQUIRE(frames.size(0) >= len * 2);
    REQUIRE(frames.size(0) <= len * 5);
  }
}

TEST_CASE("render: channel distortion is invertible back to prototypes") {
  // two speakers, same sentence, sigma=0: frames differ, but undoing the
  // affine map recovers the prototype of each token (nearest-prototype).
  const int f = 8;
  AcousticModel am = AcousticModel::make(16, f, 5, 1, 1, 0.0);
  std::vector<int> tokens = {2, 9, 6};
  Tensor fr1 = am.render(tokens, 1);
  Tensor fr2 = am.render(tokens, 2);
  REQUIRE_FALSE(same_frames(fr1, fr2));

  for (int speaker : {1, 2}) {
    auto ch = am.channel_of(speaker);
    Tensor frames = speaker == 1 ? fr1 : fr2;
    for (size_t row = 0; row < tokens.size(); ++row) {
      // solve ch.matrix * x = frames[row] - bias by gaussian elimination
      std::vector<double> a(ch.matrix);
      std::vector<double> rhs(f);
      for (int j = 0; j < f; ++j) rhs[j] = frames.data()[static_cast<int64_t>(row) * f + j] - ch.bias[j];
      for (int col = 0; col < f; ++col) {
        int piv = col;
        for (int r = col + 1; r < f; ++r)
          if (std::abs(a[r * f + col]) > std::abs(a[piv * f + col])) piv = r;
        for (int j = 0; j < f; ++j) std::swap(a[piv * f + j], a[col * f + j]);
        std::swap(rhs[piv], rhs[col]);
        for (int r = 0; r < f; ++r) {
          if (r == col) continue;
          const double m = a[r * f + col] / a[col * f + col];
          for (int j = 0; j < f; ++j) a[r * f + j] -= m * a[col * f + j];
          rhs[r] -= m * rhs[col];
        }
      }
      for (int j = 0; j < f; ++j) rhs[j] /= a[j * f + j];
      // nearest prototype should be the true token
      int best = -1;
      double best_d = 1e300;
      for (int tok = 0; tok < 16; ++tok) {
        double d = 0;
        for (int j = 0; j < f; ++j) {
          const double diff = rhs[j] - am.prototypes().data()[tok * f + j];
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = tok;
        }
      }
      REQUIRE(best == tokens[row]);
    }
  }
}

TEST_CASE("spec_augment: identity at zero maxima, shape preserved") {
  RngStream rng(4);
  Tensor frames = Tensor::randn({12, 6}, rng, 1.0);
  Tensor same = spec_augment_like(frames, 0, 0, 1);
  REQUIRE(same.id() == frames.id());
  Tensor masked = spec_augment_like(frames, 4, 2, 17);
  REQUIRE(masked.shape() == frames.shape());
  REQUIRE_THROWS(spec_augment_like(frames, 13, 0, 1));
}

TEST_CASE("spec_augment: expected zeroed fraction matches the closed form within 2%") {
  const int64_t t = 16, c = 10;
  const int tmax = 6, cmax = 4;
  Tensor frames = Tensor::zeros({t, c});
  for (double& v : frames.data()) v = 1.0;
  double zero_frac_sum = 0.0;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    Tensor m = spec_augment_like(frames, tmax, cmax, mix_key({static_cast<uint64_t>(i), 5}));
    int64_t zeros = 0;
    for (double v : m.data()) zeros += v == 0.0 ? 1 : 0;
    zero_frac_sum += static_cast<double>(zeros) / static_cast<double>(t * c);
  }
  const double measured = zero_frac_sum / n;
  const double et = tmax / 2.0, ec = cmax / 2.0;
  const double expected = et / t + ec / c - (et * ec) / (t * c);
  REQUIRE(measured == Approx(expected).margin(0.02));
}

TEST_CASE("zero-shot datasets have the advertised construction") {
  PairedCorpus c = gen_corpus(tiny_corpus_cfg());
  auto excluded = c.train_sentence_set();

  SECTION("digit-like: 10 single-token labels from one context class") {
    auto ds = gen_zeroshot_dataset(c.lang, c.am, ZeroShotKind::kDigitLike, 10, 3, 1, &excluded);
    REQUIRE(ds.label_tokens.size() == 10);
    for (const auto& l : ds.label_tokens) {
      REQUIRE(l.size() == 1);
      REQUIRE(c.lang.class_of(l[0]) == 0);
    }
    REQUIRE(ds.items.size() == 30);
    for (const auto& item : ds.items) {
      REQUIRE(item.true_label >= 0);
      REQUIRE(item.true_label < 10);
      REQUIRE(item.frames.size(0) >= 4);  // clears the conv receptive field
    }
    REQUIRE_THROWS(gen_zeroshot_dataset(c.lang, c.am, ZeroShotKind::kDigitLike, 11, 1, 1));
  }
  SECTION("word-like: labels from distinct context classes") {
    auto ds = gen_zeroshot_dataset(c.lang, c.am, ZeroShotKind::kWordLike, 10, 2, 1);
    std::set<int> classes;
    for (const auto& l : ds.label_tokens) classes.insert(c.lang.class_of(l[0]));
    REQUIRE(classes.size() == 10);
  }
  SECTION("sentence-like: pairwise distinct multi-token labels, distinct speakers") {
    auto ds = gen_zeroshot_dataset(c.lang, c.am, ZeroShotKind::kSentenceLike, 10, 7, 1, &excluded);
    std::set<std::string> keys;
    for (const auto& l : ds.label_tokens) {
      REQUIRE(l.size() >= 2);
      keys.insert(token_string(l));
      REQUIRE(excluded.count(token_string(l)) == 0);  // no leakage
    }
    REQUIRE(keys.size() == 10);
    REQUIRE(ds.items.size() == 70);
    std::set<int> speakers;
    for (const auto& item : ds.items) speakers.insert(item.speaker);
    REQUIRE(speakers.size() == 70);
  }
}

TEST_CASE("probing tasks obey their label rules, balance and leakage contracts") {
  PairedCorpus c = gen_corpus(tiny_corpus_cfg());
  auto excluded = c.train_sentence_set();
  AcousticModel tts = c.am.with_variant(c.cfg.d_min, c.cfg.d_max, c.cfg.probe_noise_sigma);
  ProbeSizes sizes{120, 24, 24};

  for (ProbeTask task : all_probe_tasks()) {
    INFO("task " << probe_task_name(task));
    ProbingSplits splits = gen_probing_task(c.lang, c.am, tts, task, sizes, 3, &excluded);
    REQUIRE(splits.train.size() == 120);
    REQUIRE(splits.valid.size() == 24);
    REQUIRE(splits.test.size() == 24);

    // class balance per split (quota construction makes it near-exact)
    for (const auto* split : {&splits.train, &splits.valid, &splits.test}) {
      std::vector<int> counts(static_cast<size_t>(splits.n_classes), 0);
      for (const auto& ex : *split) counts[static_cast<size_t>(ex.label)]++;
      const int expect = static_cast<int>(split->size()) / splits.n_classes;
      for (int cnt : counts) REQUIRE(std::abs(cnt - expect) <= 1);
    }
    // no leakage into the training corpus
    for (const auto& ex : splits.test) REQUIRE(excluded.count(token_string(ex.tokens)) == 0);
  }

  SECTION("LEN label equals the bucket of the exact length") {
    ProbingSplits splits = gen_probing_task(c.lang, c.am, tts, ProbeTask::kLen, sizes, 4);
    for (const auto& ex : splits.train)
      REQUIRE(ex.label == (static_cast<int>(ex.tokens.size()) - 4) / 2);
  }
  SECTION("SHIFT positives differ from source by exactly one adjacent transposition") {
    ProbingSplits splits = gen_probing_task(c.lang, c.am, tts, ProbeTask::kShift, sizes, 5);
    for (const auto& ex : splits.train) {
      if (ex.label == 0) {
        REQUIRE(ex.source_tokens.empty());
        continue;
      }
      REQUIRE(ex.source_tokens.size() == ex.tokens.size());
      int diff_at = -1;
      int n_diff = 0;
      for (size_t i = 0; i < ex.tokens.size(); ++i) {
        if (ex.tokens[i] != ex.source_tokens[i]) {
          ++n_diff;
          if (diff_at < 0) diff_at = static_cast<int>(i);
        }
      }
      REQUIRE(n_diff == 2);
      REQUIRE(ex.tokens[static_cast<size_t>(diff_at)] == ex.source_tokens[static_cast<size_t>(diff_at) + 1]);
      REQUIRE(ex.tokens[static_cast<size_t>(diff_at) + 1] == ex.source_tokens[static_cast<size_t>(diff_at)]);
    }
  }
  SECTION("MARKER examples contain exactly one marker; PARITY counts are 1 or 2") {
    auto [ma, mb] = probe_detail::marker_tokens(c.lang);
    ProbingSplits marker = gen_probing_task(c.lang, c.am, tts, ProbeTask::kMarker, sizes, 6);
    for (const auto& ex : marker.train) {
      int n = 0;
      for (int t : ex.tokens) n += (t == ma || t == mb) ? 1 : 0;
      REQUIRE(n == 1);
      REQUIRE(ex.label == ((std::count(ex.tokens.begin(), ex.tokens.end(), mb) > 0) ? 1 : 0));
    }
    ProbingSplits parity = gen_probing_task(c.lang, c.am, tts, ProbeTask::kParity, sizes, 7);
    for (const auto& ex : parity.train) {
      int n = 0;
      for (int t : ex.tokens)
        n += (c.lang.class_of(t) == probe_detail::kParityClass) ? 1 : 0;
      REQUIRE((n == 1 || n == 2));
      REQUIRE(ex.label == n % 2);
    }
  }
}

TEST_CASE("corpus disk round trip preserves tokens, speakers and fp32 frames") {
  namespace fs = std::filesystem;
  PairedCorpus c = gen_corpus(tiny_corpus_cfg());
  const std::string dir = (fs::temp_directory_path() / "xmal_corpus_test").string();
  fs::remove_all(dir);
  write_corpus_dir(c, dir);
  for (const std::string split : {"train", "valid", "test"}) {
    auto loaded = read_corpus_split(dir + "/" + split);
    const auto& orig = c.split(split);
    REQUIRE(loaded.size() == orig.size());
    for (size_t i = 0; i < loaded.size(); ++i) {
      REQUIRE(loaded[i].tokens == orig[i].tokens);
      REQUIRE(loaded[i].speaker == orig[i].speaker);
      REQUIRE(loaded[i].frames.shape() == orig[i].frames.shape());
      for (int64_t j = 0; j < loaded[i].frames.numel(); ++j)
        REQUIRE(loaded[i].frames.data()[j] ==
                static_cast<double>(static_cast<float>(orig[i].frames.data()[j])));
    }
  }
  fs::remove_all(dir);
}
