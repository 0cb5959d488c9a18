#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "xmal/data/acoustic.hpp"
#include "xmal/data/bigram.hpp"
#include "xmal/data/vocab.hpp"
#include "xmal/util/config_text.hpp"
#include "xmal/util/csv.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

struct CorpusConfig {
  uint64_t seed = 20240801;
  int vocab_size = 64;
  int64_t n_train = 2000;
  int64_t n_valid = 200;
  int64_t n_test = 200;
  int len_min = 4;
  int len_max = 12;
  int n_speakers = 16;
  int frame_dim = 16;
  int d_min = 2;
  int d_max = 4;
  double noise_sigma = 0.1;
  double probe_noise_sigma = 0.3;  // "TTS-error" rendering variant

  void validate() const {
    check(n_train > 0 && n_valid > 0 && n_test > 0, "corpus: split sizes must be positive");
    check(len_min >= 1 && len_max >= len_min, cat("corpus: empty length range [", len_min, ",", len_max, "]"));
    check(n_speakers >= 1, "corpus: need at least one speaker");
  }

  static CorpusConfig from_config(const ConfigText& cfg) {
    SectionReader r(cfg, "corpus");
    CorpusConfig c;
    c.seed = static_cast<uint64_t>(r.get_int("seed", static_cast<int64_t>(c.seed)));
    c.vocab_size = static_cast<int>(r.get_int("vocab_size", c.vocab_size));
    c.n_train = r.get_int("n_train", c.n_train);
    c.n_valid = r.get_int("n_valid", c.n_valid);
    c.n_test = r.get_int("n_test", c.n_test);
    c.len_min = static_cast<int>(r.get_int("len_min", c.len_min));
    c.len_max = static_cast<int>(r.get_int("len_max", c.len_max));
    c.n_speakers = static_cast<int>(r.get_int("n_speakers", c.n_speakers));
    c.frame_dim = static_cast<int>(r.get_int("frame_dim", c.frame_dim));
    c.d_min = static_cast<int>(r.get_int("d_min", c.d_min));
    c.d_max = static_cast<int>(r.get_int("d_max", c.d_max));
    c.noise_sigma = r.get_double("noise_sigma", c.noise_sigma);
    c.probe_noise_sigma = r.get_double("probe_noise_sigma", c.probe_noise_sigma);
    r.finish();
    c.validate();
    return c;
  }

  void to_config(ConfigText& cfg) const {
    cfg.set("corpus", "seed", std::to_string(seed));
    cfg.set("corpus", "vocab_size", std::to_string(vocab_size));
    cfg.set("corpus", "n_train", std::to_string(n_train));
    cfg.set("corpus", "n_valid", std::to_string(n_valid));
    cfg.set("corpus", "n_test", std::to_string(n_test));
    cfg.set("corpus", "len_min", std::to_string(len_min));
    cfg.set("corpus", "len_max", std::to_string(len_max));
    cfg.set("corpus", "n_speakers", std::to_string(n_speakers));
    cfg.set("corpus", "frame_dim", std::to_string(frame_dim));
    cfg.set("corpus", "d_min", std::to_string(d_min));
    cfg.set("corpus", "d_max", std::to_string(d_max));
    cfg.set("corpus", "noise_sigma", format_double(noise_sigma));
    cfg.set("corpus", "probe_noise_sigma", format_double(probe_noise_sigma));
  }
};

// One training example: a content-token sentence and its rendered frames.
struct UtterancePair {
  int64_t id = 0;
  std::vector<int> tokens;
  Tensor frames;
  int speaker = 0;
};

inline std::string token_string(const std::vector<int>& tokens) {
  std::string s;
  for (int t : tokens) {
    s += std::to_string(t);
    s += ',';
  }
  return s;
}

struct PairedCorpus {
  CorpusConfig cfg;
  Vocabulary vocab;
  BigramLanguage lang;
  AcousticModel am;
  std::vector<UtterancePair> train, valid, test;

  const std::vector<UtterancePair>& split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "valid") return valid;
    if (name == "test") return test;
    fail(cat("corpus: unknown split '", name, "'"));
  }

  std::set<std::string> train_sentence_set() const {
    std::set<std::string> s;
    for (const auto& p : train) s.insert(token_string(p.tokens));
    return s;
  }
};

// Sentences are sampled from the seeded bigram chain; the three splits are
// disjoint as token strings by construction.
inline PairedCorpus gen_corpus(const CorpusConfig& cfg) {
  cfg.validate();
  PairedCorpus corpus;
  corpus.cfg = cfg;
  corpus.vocab.size = cfg.vocab_size;
  corpus.vocab.validate();
  corpus.lang = BigramLanguage::make(corpus.vocab, cfg.seed);
  corpus.am = AcousticModel::make(cfg.vocab_size, cfg.frame_dim, cfg.seed, cfg.d_min, cfg.d_max,
                                  cfg.noise_sigma);

  std::set<std::string> seen;
  RngStream rng(mix_key({cfg.seed, fnv1a("corpus-sentences")}));
  int64_t next_id = 0;
  auto fill = [&](std::vector<UtterancePair>& out, int64_t n) {
    out.reserve(static_cast<size_t>(n));
    int64_t attempts = 0;
    while (static_cast<int64_t>(out.size()) < n) {
      check(++attempts < 100 * n + 1000,
            "corpus: cannot sample enough distinct sentences; enlarge length range or vocabulary");
      const int64_t len = rng.next_int(cfg.len_min, cfg.len_max);
      std::vector<int> tokens = corpus.lang.sample_sentence(len, rng);
      std::string key = token_string(tokens);
      if (seen.count(key)) continue;
      seen.insert(std::move(key));
      UtterancePair pair;
      pair.id = next_id++;
      pair.tokens = std::move(tokens);
      pair.speaker = static_cast<int>(rng.next_int(0, cfg.n_speakers - 1));
      pair.frames = corpus.am.render(pair.tokens, pair.speaker);
      out.push_back(std::move(pair));
    }
  };
  fill(corpus.train, cfg.n_train);
  fill(corpus.valid, cfg.n_valid);
  fill(corpus.test, cfg.n_test);
  return corpus;
}

// ---------------------------------------------------------------------------
// Disk layout: one directory per split; tokens as newline-delimited integer
// CSV, frames as raw little-endian fp32 plus a sidecar shape index, and a
// manifest (id, speaker, paths, lengths).
// ---------------------------------------------------------------------------

inline void write_corpus_split(const std::vector<UtterancePair>& pairs, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream tokens(dir + "/tokens.csv");
  std::ofstream frames(dir + "/frames.bin", std::ios::binary);
  CsvWriter index(dir + "/frames.idx", {"id", "offset", "n_frames", "frame_dim"});
  CsvWriter manifest(dir + "/manifest.csv",
                     {"id", "speaker", "tokens_path", "frames_path", "n_tokens", "n_frames"});
  int64_t offset = 0;
  for (const auto& p : pairs) {
    for (size_t i = 0; i < p.tokens.size(); ++i) {
      if (i) tokens << ',';
      tokens << p.tokens[i];
    }
    tokens << '\n';
    const int64_t t = p.frames.size(0), f = p.frames.size(1);
    std::vector<float> buf(static_cast<size_t>(t * f));
    for (int64_t i = 0; i < t * f; ++i) buf[static_cast<size_t>(i)] = static_cast<float>(p.frames.data()[i]);
    frames.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    index.write_row({std::to_string(p.id), std::to_string(offset), std::to_string(t), std::to_string(f)});
    manifest.write_row({std::to_string(p.id), std::to_string(p.speaker), "tokens.csv", "frames.bin",
                        std::to_string(p.tokens.size()), std::to_string(t)});
    offset += t * f * 4;
  }
  check(tokens.good() && frames.good(), cat("corpus: write failed under ", dir));
}

inline void write_corpus_dir(const PairedCorpus& corpus, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  ConfigText cfg;
  corpus.cfg.to_config(cfg);
  std::ofstream cfg_out(dir + "/config");
  cfg_out << cfg.emit();
  write_corpus_split(corpus.train, dir + "/train");
  write_corpus_split(corpus.valid, dir + "/valid");
  write_corpus_split(corpus.test, dir + "/test");
}

inline std::vector<UtterancePair> read_corpus_split(const std::string& dir) {
  std::vector<UtterancePair> pairs;
  std::ifstream tokens(dir + "/tokens.csv");
  check(tokens.good(), cat("corpus: cannot open ", dir, "/tokens.csv"));
  std::string line;
  std::vector<std::vector<int>> token_rows;
  while (std::getline(tokens, line)) {
    if (line.empty()) continue;
    std::vector<int> row;
    for (const auto& cell : split_csv_line(line)) row.push_back(std::stoi(cell));
    token_rows.push_back(std::move(row));
  }
  auto index = read_csv(dir + "/frames.idx");
  auto manifest = read_csv(dir + "/manifest.csv");
  check(index.size() == token_rows.size() + 1 && manifest.size() == token_rows.size() + 1,
        cat("corpus: inconsistent split files under ", dir));
  std::ifstream frames(dir + "/frames.bin", std::ios::binary);
  check(frames.good(), cat("corpus: cannot open ", dir, "/frames.bin"));
  for (size_t i = 0; i < token_rows.size(); ++i) {
    UtterancePair p;
    p.id = std::stoll(index[i + 1][0]);
    p.tokens = token_rows[i];
    p.speaker = std::stoi(manifest[i + 1][1]);
    const int64_t offset = std::stoll(index[i + 1][1]);
    const int64_t t = std::stoll(index[i + 1][2]);
    const int64_t f = std::stoll(index[i + 1][3]);
    frames.seekg(offset);
    std::vector<float> buf(static_cast<size_t>(t * f));
    frames.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 4));
    check(frames.good(), cat("corpus: truncated frames.bin under ", dir));
    p.frames = Tensor::zeros({t, f});
    for (int64_t j = 0; j < t * f; ++j) p.frames.data()[j] = static_cast<double>(buf[static_cast<size_t>(j)]);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace xmal
