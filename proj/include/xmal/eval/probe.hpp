#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "xmal/core/losses.hpp"
#include "xmal/core/optim.hpp"
#include "xmal/data/probing.hpp"
#include "xmal/models/bundle.hpp"
#include "xmal/train/pretrain.hpp"
#include "xmal/util/config_text.hpp"
#include "xmal/util/sha1.hpp"

namespace xmal {

struct ProbeClassifierConfig {
  int hidden_dim = 64;
  double dropout_rate = 0.1;
  int64_t epochs = 10;
  double lr = 1e-3;
  int64_t batch_size = 64;
  uint64_t seed = 1;

  static ProbeClassifierConfig from_config(const ConfigText& cfg) {
    SectionReader r(cfg, "probe");
    ProbeClassifierConfig c;
    c.hidden_dim = static_cast<int>(r.get_int("hidden_dim", c.hidden_dim));
    c.dropout_rate = r.get_double("dropout_rate", c.dropout_rate);
    c.epochs = r.get_int("epochs", c.epochs);
    c.lr = r.get_double("lr", c.lr);
    c.batch_size = r.get_int("batch_size", c.batch_size);
    c.seed = static_cast<uint64_t>(r.get_int("seed", static_cast<int64_t>(c.seed)));
    r.finish();
    check(c.epochs >= 1, "probe: epochs must be >= 1");
    return c;
  }

  void to_config(ConfigText& cfg) const {
    cfg.set("probe", "hidden_dim", std::to_string(hidden_dim));
    cfg.set("probe", "dropout_rate", format_double(dropout_rate));
    cfg.set("probe", "epochs", std::to_string(epochs));
    cfg.set("probe", "lr", format_double(lr));
    cfg.set("probe", "batch_size", std::to_string(batch_size));
    cfg.set("probe", "seed", std::to_string(seed));
  }
};

// Two linear layers with a tanh activation and dropout; trained on frozen
// text embeddings, then reused as-is to score speech embeddings.
struct ProbeClassifier {
  Tensor w1, b1, w2, b2;
  int n_classes = 0;

  std::string content_hash() const {
    Sha1 h;
    for (const Tensor* t : {&w1, &b1, &w2, &b2})
      h.update(t->data().data(), static_cast<size_t>(t->numel()) * 8);
    return h.hex_digest();
  }
};

inline Tensor probe_logits(const ProbeClassifier& clf, const Tensor& embs, double dropout_rate,
                           const RunCtx& ctx) {
  Tensor h = ops::tanh_op(ops::linear(embs, clf.w1, clf.b1));
  h = ops::dropout(h, dropout_rate, ctx.dropout_key("probe/drop"), ctx.training);
  return ops::linear(h, clf.w2, clf.b2);
}

inline double probe_accuracy(const ProbeClassifier& clf, const Tensor& embs,
                             const std::vector<int>& labels) {
  TapeScope no_tape(nullptr);
  Tensor logits = probe_logits(clf, embs, 0.0, kEvalCtx);
  const int64_t n = embs.size(0), k = clf.n_classes;
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    int best = 0;
    double best_v = logits.data()[i * k];
    for (int c = 1; c < k; ++c) {
      if (logits.data()[i * k + c] > best_v) {
        best_v = logits.data()[i * k + c];
        best = c;
      }
    }
    hits += best == labels[static_cast<size_t>(i)] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

struct ProbeTrainResult {
  ProbeClassifier classifier;  // best validation epoch
  int64_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
};

inline ProbeTrainResult train_probe_classifier(const Tensor& train_embs,
                                               const std::vector<int>& train_labels,
                                               const Tensor& valid_embs,
                                               const std::vector<int>& valid_labels, int n_classes,
                                               const ProbeClassifierConfig& cfg) {
  check(train_embs.rank() == 2, "probe: embeddings must be rank-2");
  check(static_cast<int64_t>(train_labels.size()) == train_embs.size(0), "probe: label count mismatch");
  std::set<int> distinct(train_labels.begin(), train_labels.end());
  check(distinct.size() >= 2, "probe: class collapse in training data (fewer than 2 labels present)");

  const int64_t dim = train_embs.size(1);
  ProbeClassifier clf;
  clf.n_classes = n_classes;
  ParamGroup group("probe");
  ParamFactory f(group, cfg.seed);
  clf.w1 = f.xavier("w1", dim, cfg.hidden_dim);
  clf.b1 = f.zeros("b1", {cfg.hidden_dim});
  clf.w2 = f.xavier("w2", cfg.hidden_dim, n_classes);
  clf.b2 = f.zeros("b2", {n_classes});

  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto& p : group.params()) params.emplace_back(p.name, p.value);
  Adam opt(params);

  ProbeTrainResult res;
  res.best_valid_accuracy = -1.0;
  const int64_t n = train_embs.size(0);
  int64_t step = 0;
  for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto order = loop_detail::shuffled_indices(cfg.seed, epoch - 1, n);
    for (int64_t start = 0; start < n; start += cfg.batch_size) {
      ++step;
      const int64_t end = std::min(n, start + cfg.batch_size);
      Tensor batch = Tensor::zeros({end - start, dim});
      std::vector<int> batch_labels;
      for (int64_t i = start; i < end; ++i) {
        const int64_t src = order[static_cast<size_t>(i)];
        for (int64_t j = 0; j < dim; ++j)
          batch.data()[(i - start) * dim + j] = train_embs.data()[src * dim + j];
        batch_labels.push_back(train_labels[static_cast<size_t>(src)]);
      }
      Tape tape;
      {
        TapeScope scope(&tape);
        RunCtx ctx{true, cfg.seed, static_cast<uint64_t>(step), 0};
        Tensor logits = probe_logits(clf, batch, cfg.dropout_rate, ctx);
        Tensor loss = cross_entropy_label_smoothed(logits, batch_labels, 0.0);
        loop_detail::guard_finite(loss, step);
        backward(loss, tape);
      }
      opt.step(cfg.lr);
      opt.zero_grads();
    }
    const double val_acc = probe_accuracy(clf, valid_embs, valid_labels);
    if (val_acc > res.best_valid_accuracy) {  // strict: ties keep the earliest epoch
      res.best_valid_accuracy = val_acc;
      res.best_epoch = epoch;
      res.classifier.n_classes = n_classes;
      res.classifier.w1 = clf.w1.detached_clone();
      res.classifier.b1 = clf.b1.detached_clone();
      res.classifier.w2 = clf.w2.detached_clone();
      res.classifier.b2 = clf.b2.detached_clone();
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// embedding stacks and the on-disk cache
// ---------------------------------------------------------------------------

inline Tensor stack_embeddings(const std::vector<Tensor>& embs) {
  check(!embs.empty(), "stack_embeddings: empty set");
  const int64_t d = embs[0].size(0);
  Tensor out = Tensor::zeros({static_cast<int64_t>(embs.size()), d});
  for (size_t i = 0; i < embs.size(); ++i) {
    check(embs[i].rank() == 1 && embs[i].size(0) == d, "stack_embeddings: inconsistent dims");
    for (int64_t j = 0; j < d; ++j) out.data()[static_cast<int64_t>(i) * d + j] = embs[i].data()[j];
  }
  return out;
}

inline void write_embeddings(const Tensor& embs, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  check(out.good(), cat("embeddings: cannot write ", path));
  const uint64_t rows = static_cast<uint64_t>(embs.size(0)), cols = static_cast<uint64_t>(embs.size(1));
  out.write(reinterpret_cast<const char*>(&rows), 8);
  out.write(reinterpret_cast<const char*>(&cols), 8);
  out.write(reinterpret_cast<const char*>(embs.data().data()),
            static_cast<std::streamsize>(embs.numel() * 8));
}

inline Tensor read_embeddings(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), cat("embeddings: cannot read ", path));
  uint64_t rows = 0, cols = 0;
  in.read(reinterpret_cast<char*>(&rows), 8);
  in.read(reinterpret_cast<char*>(&cols), 8);
  Tensor out = Tensor::zeros({static_cast<int64_t>(rows), static_cast<int64_t>(cols)});
  in.read(reinterpret_cast<char*>(out.data().data()), static_cast<std::streamsize>(out.numel() * 8));
  check(in.good(), cat("embeddings: truncated file ", path));
  return out;
}

// ---------------------------------------------------------------------------
// full probing instrument for one task
// ---------------------------------------------------------------------------

struct ProbingReportEntry {
  std::string task;
  int n_classes = 0;
  double text_acc = 0.0;
  double speech_acc_before = 0.0;
  double speech_acc_after = 0.0;
  double delta_after_minus_before = 0.0;
  double delta_text_minus_after = 0.0;
  int64_t best_epoch = 0;
  double best_valid_accuracy = 0.0;
  std::string classifier_hash;      // hash at training end
  std::string classifier_hash_after_eval;  // re-hash after scoring both modalities
};

inline std::vector<int> probe_labels(const std::vector<ProbingExample>& split) {
  std::vector<int> out;
  out.reserve(split.size());
  for (const auto& ex : split) out.push_back(ex.label);
  return out;
}

// Embeddings of a probing split; text via the frozen teacher, speech via a
// bundle's student pipeline. Cached on disk when cache_dir is given.
inline Tensor text_split_embeddings(const ModelBundle& teacher_bundle,
                                    const std::vector<ProbingExample>& split,
                                    const std::string& cache_path = "") {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) return read_embeddings(cache_path);
  TapeScope no_tape(nullptr);
  std::vector<Tensor> embs;
  embs.reserve(split.size());
  for (const auto& ex : split) embs.push_back(teacher_bundle.text_embedding(ex.tokens));
  Tensor out = stack_embeddings(embs);
  if (!cache_path.empty()) write_embeddings(out, cache_path);
  return out;
}

inline Tensor speech_split_embeddings(const ModelBundle& bundle,
                                      const std::vector<ProbingExample>& split,
                                      const std::string& cache_path = "") {
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) return read_embeddings(cache_path);
  TapeScope no_tape(nullptr);
  std::vector<Tensor> embs;
  embs.reserve(split.size());
  for (const auto& ex : split) embs.push_back(bundle.speech_embedding(ex.frames));
  Tensor out = stack_embeddings(embs);
  if (!cache_path.empty()) write_embeddings(out, cache_path);
  return out;
}

// Train on text-train, pick the best-validation epoch, then score text-test
// and the speech renderings of the same test sentences with one and the same
// classifier; the hash pair in the report proves reuse.
inline ProbingReportEntry probe_task_report(const ProbingSplits& task,
                                            const ModelBundle& teacher_bundle,
                                            const ModelBundle& speech_before,
                                            const ModelBundle& speech_after,
                                            const ProbeClassifierConfig& cfg,
                                            const std::string& cache_dir = "") {
  std::string prefix;
  if (!cache_dir.empty()) {
    std::filesystem::create_directories(cache_dir);
    prefix = cache_dir + "/" + probe_task_name(task.task);
  }
  Tensor train_text = text_split_embeddings(teacher_bundle, task.train,
                                            prefix.empty() ? "" : prefix + "_train_text.emb");
  Tensor valid_text = text_split_embeddings(teacher_bundle, task.valid,
                                            prefix.empty() ? "" : prefix + "_valid_text.emb");
  Tensor test_text = text_split_embeddings(teacher_bundle, task.test,
                                           prefix.empty() ? "" : prefix + "_test_text.emb");

  ProbeTrainResult trained = train_probe_classifier(train_text, probe_labels(task.train), valid_text,
                                                    probe_labels(task.valid), task.n_classes, cfg);

  ProbingReportEntry entry;
  entry.task = probe_task_name(task.task);
  entry.n_classes = task.n_classes;
  entry.best_epoch = trained.best_epoch;
  entry.best_valid_accuracy = trained.best_valid_accuracy;
  entry.classifier_hash = trained.classifier.content_hash();

  const auto test_labels = probe_labels(task.test);
  entry.text_acc = probe_accuracy(trained.classifier, test_text, test_labels);
  entry.speech_acc_before =
      probe_accuracy(trained.classifier, speech_split_embeddings(speech_before, task.test), test_labels);
  entry.speech_acc_after =
      probe_accuracy(trained.classifier, speech_split_embeddings(speech_after, task.test), test_labels);
  entry.delta_after_minus_before = entry.speech_acc_after - entry.speech_acc_before;
  entry.delta_text_minus_after = entry.text_acc - entry.speech_acc_after;
  entry.classifier_hash_after_eval = trained.classifier.content_hash();
  check(entry.classifier_hash == entry.classifier_hash_after_eval,
        "probe: classifier parameters changed between modality evaluations");
  return entry;
}

}  // namespace xmal
