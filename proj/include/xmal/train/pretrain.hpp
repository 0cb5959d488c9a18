#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "xmal/core/losses.hpp"
#include "xmal/core/optim.hpp"
#include "xmal/data/augment.hpp"
#include "xmal/data/corpus.hpp"
#include "xmal/eval/wer.hpp"
#include "xmal/models/bundle.hpp"
#include "xmal/train/history.hpp"
#include "xmal/util/config_text.hpp"

namespace xmal {

namespace loop_detail {

inline std::vector<int64_t> shuffled_indices(uint64_t seed, int64_t epoch, int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  RngStream rng(mix_key({seed, fnv1a("shuffle"), static_cast<uint64_t>(epoch)}));
  rng.shuffle(idx);
  return idx;
}

inline uint64_t augment_key(uint64_t seed, int64_t step, int64_t pair_id) {
  return mix_key({seed, fnv1a("augment"), static_cast<uint64_t>(step), static_cast<uint64_t>(pair_id)});
}

// Teacher-forced CE of one utterance: decoder input (bos, y...), targets
// (y..., eos).
inline Tensor asr_ce_loss(const ModelBundle& bundle, const Tensor& enc_states,
                          const std::vector<int>& tokens, double label_smoothing, const RunCtx& ctx) {
  std::vector<int> dec_in;
  dec_in.reserve(tokens.size() + 1);
  dec_in.push_back(bundle.vocab.bos);
  dec_in.insert(dec_in.end(), tokens.begin(), tokens.end());
  std::vector<int> targets = tokens;
  targets.push_back(bundle.vocab.eos);
  Tensor logits = decoder_logits(*bundle.decoder_model, enc_states, dec_in, ctx);
  return cross_entropy_label_smoothed(logits, targets, label_smoothing);
}

inline void guard_finite(const Tensor& loss, int64_t step) {
  check(std::isfinite(loss.item()), cat("training diverged: non-finite loss at step ", step));
}

}  // namespace loop_detail

// ---------------------------------------------------------------------------
// teacher masked-token pretraining
// ---------------------------------------------------------------------------

struct TeacherPretrainConfig {
  int64_t epochs = 15;
  int64_t batch_size = 32;
  LrSchedule schedule{1e-3, 200};
  double mask_rate = 0.15;
  uint64_t seed = 20240801;

  static TeacherPretrainConfig from_config(const ConfigText& cfg) {
    SectionReader r(cfg, "teacher_pretrain");
    TeacherPretrainConfig c;
    c.epochs = r.get_int("epochs", c.epochs);
    c.batch_size = r.get_int("batch_size", c.batch_size);
    c.schedule.peak_lr = r.get_double("peak_lr", c.schedule.peak_lr);
    c.schedule.warmup_steps = r.get_int("warmup_steps", c.schedule.warmup_steps);
    c.mask_rate = r.get_double("mask_rate", c.mask_rate);
    c.seed = static_cast<uint64_t>(r.get_int("seed", static_cast<int64_t>(c.seed)));
    r.finish();
    return c;
  }

  void to_config(ConfigText& cfg) const {
    cfg.set("teacher_pretrain", "epochs", std::to_string(epochs));
    cfg.set("teacher_pretrain", "batch_size", std::to_string(batch_size));
    cfg.set("teacher_pretrain", "peak_lr", format_double(schedule.peak_lr));
    cfg.set("teacher_pretrain", "warmup_steps", std::to_string(schedule.warmup_steps));
    cfg.set("teacher_pretrain", "mask_rate", format_double(mask_rate));
    cfg.set("teacher_pretrain", "seed", std::to_string(seed));
  }
};

struct TeacherPretrainResult {
  TextEncoderConfig cfg;
  Vocabulary vocab;
  TeacherModel model;
  ParamGroup group{"teacher"};
  History history;
  double valid_masked_accuracy = 0.0;
  double chance_accuracy = 0.0;
};

namespace loop_detail {

// Mask positions (within the wrapped sequence) for one sentence; content
// positions only, at least one.
inline std::vector<int64_t> mlm_positions(size_t content_len, double rate, uint64_t key) {
  RngStream rng(key);
  std::vector<int64_t> pos;
  for (size_t i = 0; i < content_len; ++i)
    if (rng.next_unit() < rate) pos.push_back(static_cast<int64_t>(i) + 1);  // +1 skips bos
  if (pos.empty()) pos.push_back(1 + rng.next_int(0, static_cast<int64_t>(content_len) - 1));
  return pos;
}

inline double masked_accuracy(const TeacherModel& model, const Vocabulary& vocab, const MlmHead& head,
                              const std::vector<UtterancePair>& split, double rate, uint64_t seed) {
  TapeScope no_tape(nullptr);
  int64_t correct = 0, total = 0;
  for (const auto& pair : split) {
    auto positions = mlm_positions(pair.tokens.size(), rate,
                                   mix_key({seed, fnv1a("mlm-mask-valid"), static_cast<uint64_t>(pair.id)}));
    std::vector<int> wrapped = wrap_sentence(pair.tokens, vocab);
    std::vector<int> original;
    for (int64_t p : positions) {
      original.push_back(wrapped[static_cast<size_t>(p)]);
      wrapped[static_cast<size_t>(p)] = vocab.mask;
    }
    Tensor states = teacher_states(model, wrapped, kEvalCtx);
    Tensor picked = ops::gather_rows(states, std::vector<int>(positions.begin(), positions.end()));
    Tensor logits = ops::linear(picked, head.w, head.b);
    for (size_t i = 0; i < positions.size(); ++i) {
      int best = 0;
      double best_v = logits.data()[static_cast<int64_t>(i) * vocab.size];
      for (int v = 1; v < vocab.size; ++v) {
        const double x = logits.data()[static_cast<int64_t>(i) * vocab.size + v];
        if (x > best_v) {
          best_v = x;
          best = v;
        }
      }
      correct += best == original[i] ? 1 : 0;
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace loop_detail

// Masked-token prediction training of the teacher; returns the encoder ready
// to freeze plus the achieved validation masked accuracy.
inline TeacherPretrainResult pretrain_teacher(const PairedCorpus& corpus, const TextEncoderConfig& cfg,
                                              const TeacherPretrainConfig& tp) {
  TeacherPretrainResult res;
  res.cfg = cfg;
  res.vocab = corpus.vocab;
  ParamFactory teacher_factory(res.group, tp.seed);
  res.model = TeacherModel::make(cfg, teacher_factory);
  ParamGroup mlm_group("mlm");
  ParamFactory mlm_factory(mlm_group, tp.seed);
  MlmHead head = MlmHead::make(cfg, mlm_factory);

  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto* g : {&res.group, &mlm_group})
    for (const auto& p : g->params()) params.emplace_back(p.name, p.value);
  Adam opt(params);

  const int64_t n = static_cast<int64_t>(corpus.train.size());
  int64_t step = 0;
  for (int64_t epoch = 0; epoch < tp.epochs; ++epoch) {
    auto order = loop_detail::shuffled_indices(tp.seed, epoch, n);
    for (int64_t start = 0; start < n; start += tp.batch_size) {
      ++step;
      const int64_t end = std::min(n, start + tp.batch_size);
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(&tape);
        std::vector<Tensor> losses;
        for (int64_t i = start; i < end; ++i) {
          const auto& pair = corpus.train[static_cast<size_t>(order[static_cast<size_t>(i)])];
          RunCtx ctx{true, tp.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(pair.id)};
          auto positions = loop_detail::mlm_positions(
              pair.tokens.size(), tp.mask_rate,
              mix_key({tp.seed, fnv1a("mlm-mask"), static_cast<uint64_t>(epoch),
                       static_cast<uint64_t>(pair.id)}));
          std::vector<int> wrapped = wrap_sentence(pair.tokens, corpus.vocab);
          std::vector<int> targets;
          for (int64_t p : positions) {
            targets.push_back(wrapped[static_cast<size_t>(p)]);
            wrapped[static_cast<size_t>(p)] = corpus.vocab.mask;
          }
          Tensor states = teacher_states(res.model, wrapped, ctx);
          Tensor picked =
              ops::gather_rows(states, std::vector<int>(positions.begin(), positions.end()));
          Tensor logits = ops::linear(picked, head.w, head.b);
          losses.push_back(cross_entropy_label_smoothed(logits, targets, 0.0));
        }
        loss = ops::mean_scalars(losses);
        loop_detail::guard_finite(loss, step);
        backward(loss, tape);
      }
      const double lr = tp.schedule.at(step);
      opt.step(lr);
      opt.zero_grads();
      res.history.push_back({step, epoch, lr, loss.item(), 0.0, loss.item(), "train"});
    }
  }
  res.valid_masked_accuracy =
      loop_detail::masked_accuracy(res.model, corpus.vocab, head, corpus.valid, tp.mask_rate, tp.seed);
  res.chance_accuracy = 1.0 / static_cast<double>(corpus.vocab.size);
  return res;
}

// ---------------------------------------------------------------------------
// student ASR pretraining (encoder-decoder CE with label smoothing)
// ---------------------------------------------------------------------------

struct AsrPretrainConfig {
  int64_t epochs = 30;
  int64_t batch_size = 32;
  LrSchedule schedule{1e-3, 300};
  double label_smoothing = 0.1;
  uint64_t seed = 20240801;
  bool augment = true;
  int time_mask_max = 4;
  int channel_mask_max = 3;
  std::vector<int64_t> snapshot_epochs;  // e.g. {2, 5, 12}; final always kept

  static AsrPretrainConfig from_config(const ConfigText& cfg) {
    SectionReader r(cfg, "asr_pretrain");
    AsrPretrainConfig c;
    c.epochs = r.get_int("epochs", c.epochs);
    c.batch_size = r.get_int("batch_size", c.batch_size);
    c.schedule.peak_lr = r.get_double("peak_lr", c.schedule.peak_lr);
    c.schedule.warmup_steps = r.get_int("warmup_steps", c.schedule.warmup_steps);
    c.label_smoothing = r.get_double("label_smoothing", c.label_smoothing);
    c.seed = static_cast<uint64_t>(r.get_int("seed", static_cast<int64_t>(c.seed)));
    c.augment = r.get_bool("augment", c.augment);
    c.time_mask_max = static_cast<int>(r.get_int("time_mask_max", c.time_mask_max));
    c.channel_mask_max = static_cast<int>(r.get_int("channel_mask_max", c.channel_mask_max));
    c.snapshot_epochs = r.get_int_list("snapshot_epochs", c.snapshot_epochs);
    r.finish();
    return c;
  }

  void to_config(ConfigText& cfg) const {
    cfg.set("asr_pretrain", "epochs", std::to_string(epochs));
    cfg.set("asr_pretrain", "batch_size", std::to_string(batch_size));
    cfg.set("asr_pretrain", "peak_lr", format_double(schedule.peak_lr));
    cfg.set("asr_pretrain", "warmup_steps", std::to_string(schedule.warmup_steps));
    cfg.set("asr_pretrain", "label_smoothing", format_double(label_smoothing));
    cfg.set("asr_pretrain", "seed", std::to_string(seed));
    cfg.set("asr_pretrain", "augment", augment ? "true" : "false");
    cfg.set("asr_pretrain", "time_mask_max", std::to_string(time_mask_max));
    cfg.set("asr_pretrain", "channel_mask_max", std::to_string(channel_mask_max));
    std::string snaps;
    for (size_t i = 0; i < snapshot_epochs.size(); ++i)
      snaps += (i ? "," : "") + std::to_string(snapshot_epochs[i]);
    if (!snaps.empty()) cfg.set("asr_pretrain", "snapshot_epochs", snaps);
  }
};

// Greedy-decode word error rate over a split: total edits / total ref length.
inline double asr_corpus_wer(const ModelBundle& bundle, const std::vector<UtterancePair>& split) {
  TapeScope no_tape(nullptr);
  int64_t edits = 0, ref_len = 0;
  for (const auto& pair : split) {
    Tensor enc = student_states(bundle.student_model, pair.frames, kEvalCtx);
    auto decoded = greedy_decode(*bundle.decoder_model, enc, bundle.vocab, 2 * pair.frames.size(0));
    edits += levenshtein(pair.tokens, decoded.tokens);
    ref_len += static_cast<int64_t>(pair.tokens.size());
  }
  return static_cast<double>(edits) / static_cast<double>(ref_len);
}

struct AsrSnapshot {
  int64_t epochs_trained = 0;
  std::vector<Param> params;  // student + decoder deep copy
  double valid_wer = 0.0;
};

struct AsrPretrainResult {
  ModelBundle bundle;
  History history;
  std::vector<AsrSnapshot> snapshots;  // at snapshot_epochs and at the end
  double final_valid_wer = 0.0;
};

inline std::vector<Param> deep_copy_params(const std::vector<Param>& params) {
  std::vector<Param> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back({p.name, p.value.detached_clone()});
  return out;
}

inline AsrPretrainResult pretrain_asr(const PairedCorpus& corpus, const ModelConfigs& model_cfg,
                                      const AsrPretrainConfig& ap) {
  AsrPretrainResult res{init_bundle(model_cfg, corpus.vocab, ap.seed, /*with_decoder=*/true)};
  ModelBundle& bundle = res.bundle;
  bundle.teacher.set_frozen(true);
  bundle.projection.set_frozen(true);

  std::vector<std::pair<std::string, Tensor>> params;
  for (const auto* g : {&bundle.student, &bundle.decoder})
    for (const auto& p : g->params()) params.emplace_back(p.name, p.value);
  Adam opt(params);

  auto take_snapshot = [&](int64_t epochs_done) {
    AsrSnapshot snap;
    snap.epochs_trained = epochs_done;
    std::vector<Param> all;
    for (const auto* g : {&bundle.student, &bundle.decoder})
      all.insert(all.end(), g->params().begin(), g->params().end());
    snap.params = deep_copy_params(all);
    snap.valid_wer = asr_corpus_wer(bundle, corpus.valid);
    res.snapshots.push_back(std::move(snap));
  };

  const int64_t n = static_cast<int64_t>(corpus.train.size());
  int64_t step = 0;
  for (int64_t epoch = 0; epoch < ap.epochs; ++epoch) {
    auto order = loop_detail::shuffled_indices(ap.seed, epoch, n);
    for (int64_t start = 0; start < n; start += ap.batch_size) {
      ++step;
      const int64_t end = std::min(n, start + ap.batch_size);
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(&tape);
        std::vector<Tensor> losses;
        for (int64_t i = start; i < end; ++i) {
          const auto& pair = corpus.train[static_cast<size_t>(order[static_cast<size_t>(i)])];
          RunCtx ctx{true, ap.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(pair.id)};
          Tensor frames = ap.augment
                              ? spec_augment_like(pair.frames, ap.time_mask_max, ap.channel_mask_max,
                                                  loop_detail::augment_key(ap.seed, step, pair.id))
                              : pair.frames;
          Tensor enc = student_states(bundle.student_model, frames, ctx);
          losses.push_back(loop_detail::asr_ce_loss(bundle, enc, pair.tokens, ap.label_smoothing, ctx));
        }
        loss = ops::mean_scalars(losses);
        loop_detail::guard_finite(loss, step);
        backward(loss, tape);
      }
      const double lr = ap.schedule.at(step);
      opt.step(lr);
      opt.zero_grads();
      res.history.push_back({step, epoch, lr, loss.item(), 0.0, loss.item(), "train"});
    }
    for (int64_t snap_at : ap.snapshot_epochs)
      if (snap_at == epoch + 1) take_snapshot(epoch + 1);
  }
  take_snapshot(ap.epochs);
  res.final_valid_wer = res.snapshots.back().valid_wer;
  return res;
}

}  // namespace xmal
