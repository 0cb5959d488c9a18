#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "xmal/train/pretrain.hpp"
#include "xmal/train/scenario.hpp"

namespace xmal {

struct EpochLosses {
  int64_t epoch = 0;
  double ce = 0.0;
  double l2 = 0.0;
  double total = 0.0;
};

struct JointTrainResult {
  ModelBundle bundle;              // final state after the last epoch
  std::vector<Param> best_params;  // deep copy of all groups at the best epoch
  EpochLosses best;
  EpochLosses at_init;
  History history;
  std::vector<EpochLosses> valid_by_epoch;
};

namespace loop_detail {

inline Tensor speech_embedding_from_states(const ModelBundle& bundle, const Tensor& enc,
                                           const RunCtx& ctx) {
  Tensor proj = projection_forward(bundle.projection_model, enc, ctx);
  std::vector<uint8_t> mask(static_cast<size_t>(proj.size(0)), 1);
  return ops::l2_normalize(ops::mean_pool_masked(proj, mask));
}

}  // namespace loop_detail

// Joint teacher-student training: per step, encode both modalities, take the
// L2 alignment loss (plus gamma-weighted CE through the decoder in multitask
// scenarios), and update only the permitted parameter groups. The teacher is
// frozen throughout; its per-sentence embeddings are computed once up front
// (frozen + eval mode makes them constants of the run). Returns the
// checkpoint with the smallest validation total (ties -> earliest epoch).
inline JointTrainResult train_joint(const TrainScenario& scenario, const PairedCorpus& corpus,
                                    const ModelConfigs& model_cfg,
                                    const std::vector<Param>& teacher_params,
                                    const std::vector<Param>* asr_params) {
  scenario.validate();
  check(scenario.student_init == StudentInit::kRandom || asr_params != nullptr,
        cat("scenario ", scenario.id, ": pretrained init requires an ASR checkpoint"));

  JointTrainResult res{init_bundle(model_cfg, corpus.vocab, scenario.seed,
                                   /*with_decoder=*/scenario.needs_decoder())};
  ModelBundle& bundle = res.bundle;
  load_group_values(bundle.teacher, teacher_params);
  if (scenario.student_init == StudentInit::kPretrained) {
    load_group_values(bundle.student, *asr_params);
    if (scenario.needs_decoder()) load_group_values(bundle.decoder, *asr_params);
  }
  bundle.teacher.set_frozen(true);
  if (scenario.trainable == TrainableSet::kProjectionOnly) bundle.student.set_frozen(true);

  const uint64_t teacher_hash_before = bundle.teacher.content_hash();
  const uint64_t student_hash_before = bundle.student.content_hash();

  // Frozen teacher: text embeddings are constants of the run.
  std::vector<Tensor> train_text_embs, valid_text_embs;
  {
    TapeScope no_tape(nullptr);
    train_text_embs.reserve(corpus.train.size());
    for (const auto& p : corpus.train) train_text_embs.push_back(bundle.text_embedding(p.tokens));
    valid_text_embs.reserve(corpus.valid.size());
    for (const auto& p : corpus.valid) valid_text_embs.push_back(bundle.text_embedding(p.tokens));
  }

  std::vector<std::pair<std::string, Tensor>> params;
  if (scenario.trainable == TrainableSet::kAllStudent)
    for (const auto& p : bundle.student.params()) params.emplace_back(p.name, p.value);
  for (const auto& p : bundle.projection.params()) params.emplace_back(p.name, p.value);
  if (scenario.needs_decoder())
    for (const auto& p : bundle.decoder.params()) params.emplace_back(p.name, p.value);
  Adam opt(params);

  auto evaluate_valid = [&](int64_t epoch) {
    TapeScope no_tape(nullptr);
    EpochLosses ep;
    ep.epoch = epoch;
    for (size_t i = 0; i < corpus.valid.size(); ++i) {
      const auto& pair = corpus.valid[i];
      Tensor enc = student_states(bundle.student_model, pair.frames, kEvalCtx);
      ep.l2 += l2_pair_loss(loop_detail::speech_embedding_from_states(bundle, enc, kEvalCtx),
                            valid_text_embs[i])
                   .item();
      if (scenario.multitask)
        ep.ce += loop_detail::asr_ce_loss(bundle, enc, pair.tokens, 0.1, kEvalCtx).item();
    }
    ep.ce /= static_cast<double>(corpus.valid.size());
    ep.l2 /= static_cast<double>(corpus.valid.size());
    ep.total = scenario.multitask ? scenario.weights.gamma * ep.ce + scenario.weights.beta * ep.l2
                                  : scenario.weights.beta * ep.l2;
    check(std::isfinite(ep.total), cat("scenario ", scenario.id, ": non-finite validation loss"));
    return ep;
  };

  auto snapshot_all = [&] { return deep_copy_params(bundle.all_params()); };

  res.at_init = evaluate_valid(0);
  res.best = res.at_init;
  res.best.epoch = 0;
  res.best_params = snapshot_all();
  res.valid_by_epoch.push_back(res.at_init);
  res.history.push_back({0, 0, 0.0, res.at_init.ce, res.at_init.l2, res.at_init.total, "valid"});

  const int64_t n = static_cast<int64_t>(corpus.train.size());
  int64_t step = 0;
  for (int64_t epoch = 1; epoch <= scenario.epochs; ++epoch) {
    auto order = loop_detail::shuffled_indices(scenario.seed, epoch - 1, n);
    for (int64_t start = 0; start < n; start += scenario.batch_size) {
      ++step;
      const int64_t end = std::min(n, start + scenario.batch_size);
      Tape tape;
      Tensor ce_term, l2_term, loss;
      {
        TapeScope scope(&tape);
        std::vector<Tensor> l2s, ces;
        for (int64_t i = start; i < end; ++i) {
          const int64_t idx = order[static_cast<size_t>(i)];
          const auto& pair = corpus.train[static_cast<size_t>(idx)];
          RunCtx ctx{true, scenario.seed, static_cast<uint64_t>(step), static_cast<uint64_t>(pair.id)};
          Tensor frames =
              scenario.augment
                  ? spec_augment_like(pair.frames, scenario.time_mask_max, scenario.channel_mask_max,
                                      loop_detail::augment_key(scenario.seed, step, pair.id))
                  : pair.frames;
          Tensor enc = student_states(bundle.student_model, frames, ctx);
          if (scenario.multitask)
            ces.push_back(loop_detail::asr_ce_loss(bundle, enc, pair.tokens, 0.1, ctx));
          l2s.push_back(l2_pair_loss(loop_detail::speech_embedding_from_states(bundle, enc, ctx),
                                     train_text_embs[static_cast<size_t>(idx)]));
        }
        l2_term = ops::mean_scalars(l2s);
        if (scenario.multitask) {
          ce_term = ops::mean_scalars(ces);
          loss = total_loss(ce_term, l2_term, scenario.weights);
        } else {
          ce_term = Tensor::scalar(0.0);
          loss = ops::scale(l2_term, scenario.weights.beta);
        }
        loop_detail::guard_finite(loss, step);
        backward(loss, tape);
      }
      const double lr = scenario.schedule.at(step);
      opt.step(lr);
      opt.zero_grads();
      res.history.push_back({step, epoch, lr, ce_term.item(), l2_term.item(), loss.item(), "train"});
    }

    EpochLosses ep = evaluate_valid(epoch);
    res.valid_by_epoch.push_back(ep);
    res.history.push_back({step, epoch, 0.0, ep.ce, ep.l2, ep.total, "valid"});
    if (ep.total < res.best.total) {  // strict: ties keep the earliest epoch
      res.best = ep;
      res.best_params = snapshot_all();
    }

    check(bundle.teacher.content_hash() == teacher_hash_before,
          cat("scenario ", scenario.id, ": frozen teacher parameters drifted"));
    if (scenario.trainable == TrainableSet::kProjectionOnly)
      check(bundle.student.content_hash() == student_hash_before,
            cat("scenario ", scenario.id, ": frozen speech encoder drifted in projection-only mode"));
  }
  return res;
}

// Rebuild a bundle from checkpointed parameters (e.g. the best ones).
inline ModelBundle bundle_from_params(const ModelConfigs& cfg, const Vocabulary& vocab,
                                      const std::vector<Param>& params, bool with_decoder) {
  ModelBundle b = init_bundle(cfg, vocab, /*seed=*/0, with_decoder);
  load_group_values(b.teacher, params);
  load_group_values(b.student, params);
  load_group_values(b.projection, params);
  if (with_decoder) load_group_values(b.decoder, params);
  b.teacher.set_frozen(true);
  return b;
}

}  // namespace xmal
