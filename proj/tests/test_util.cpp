#include <catch2/catch_amalgamated.hpp>

#include "xmal/util/config_text.hpp"
#include "xmal/util/rng.hpp"
#include "xmal/util/sha1.hpp"
#include "xmal/util/threadpool.hpp"

using namespace xmal;

TEST_CASE("rng streams are deterministic and key-separated") {
  RngStream a(mix_key({1, 2, 3}));
  RngStream b(mix_key({1, 2, 3}));
  RngStream c(mix_key({1, 2, 4}));
  for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
  bool differs = false;
  RngStream a2(mix_key({1, 2, 3}));
  for (int i = 0; i < 100; ++i) differs |= a2.next_u64() != c.next_u64();
  REQUIRE(differs);
}

TEST_CASE("rng uniform and normal have sane moments") {
  RngStream r(42);
  double sum = 0, sum2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = r.next_normal();
    sum += x;
    sum2 += x * x;
  }
  REQUIRE(std::abs(sum / n) < 0.01);
  REQUIRE(std::abs(sum2 / n - 1.0) < 0.02);
  for (int i = 0; i < 1000; ++i) {
    double u = r.next_unit();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    int64_t k = r.next_int(3, 7);
    REQUIRE(k >= 3);
    REQUIRE(k <= 7);
  }
}

TEST_CASE("sha1 matches known vectors") {
  REQUIRE(sha1_hex(std::string("abc")) == "a9993e364706816aba3e25717850c26c9cd0d89d");
  REQUIRE(sha1_hex(std::string("")) == "da39a3ee5e6b4b0d3255bfef95601890afd80709");
  // git hash-object of an empty blob
  REQUIRE(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  // git hash-object of "hello\n"
  REQUIRE(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("config text round trips and rejects unknown keys") {
  const std::string text =
      "[corpus]\n"
      "seed = 7\n"
      "n_train = 100\n"
      "\n"
      "[teacher]\n"
      "dim = 64\n";
  ConfigText cfg = ConfigText::parse(text);
  SectionReader corpus(cfg, "corpus");
  REQUIRE(corpus.get_int("seed", 0) == 7);
  REQUIRE(corpus.get_int("n_train", 0) == 100);
  corpus.finish();

  SectionReader teacher(cfg, "teacher");
  REQUIRE(teacher.get_int("dim", 0) == 64);
  teacher.finish();

  // unknown key is rejected at finish
  ConfigText cfg2 = ConfigText::parse("[corpus]\nseed = 1\nbogus = 2\n");
  SectionReader r2(cfg2, "corpus");
  r2.get_int("seed", 0);
  REQUIRE_THROWS_WITH(r2.finish(), Catch::Matchers::ContainsSubstring("unknown key 'bogus'"));

  // canonical emission is stable under reparse
  std::string emitted = cfg.emit();
  REQUIRE(ConfigText::parse(emitted).emit() == emitted);

  REQUIRE_THROWS(ConfigText::parse("[a]\nx = 1\n[a]\ny = 2\n"));
  REQUIRE_THROWS(ConfigText::parse("key_without_section = 1\n"));
  REQUIRE_THROWS(ConfigText::parse("[a]\nnot a pair\n"));
}

TEST_CASE("config typed getters validate") {
  ConfigText cfg = ConfigText::parse("[s]\nx = nope\nls = 1,2,3\nb = true\n");
  SectionReader r(cfg, "s");
  REQUIRE_THROWS(r.get_int("x", 0));
  REQUIRE(r.get_int_list("ls", {}) == std::vector<int64_t>{1, 2, 3});
  REQUIRE(r.get_bool("b", false));
}

TEST_CASE("parallel_for covers every index exactly once") {
  std::vector<std::atomic<int>> hits(257);
  parallel_for(257, 4, [&](int64_t i) { hits[static_cast<size_t>(i)]++; });
  for (auto& h : hits) REQUIRE(h.load() == 1);
}
