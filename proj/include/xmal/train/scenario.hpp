#pragma once

#include <cstdint>
#include <string>

#include "xmal/core/losses.hpp"
#include "xmal/core/optim.hpp"
#include "xmal/util/config_text.hpp"
#include "xmal/util/error.hpp"

namespace xmal {

enum class StudentInit { kRandom, kPretrained };
enum class TrainableSet { kAllStudent, kProjectionOnly };

// One row of the experiment matrix.
struct TrainScenario {
  std::string id = "B";
  StudentInit student_init = StudentInit::kPretrained;
  TrainableSet trainable = TrainableSet::kAllStudent;
  bool multitask = false;
  LossWeights weights{0.0, 1.0};
  int64_t epochs = 30;
  int64_t batch_size = 32;
  LrSchedule schedule{1e-3, 300};
  uint64_t seed = 1;
  bool augment = true;
  int time_mask_max = 4;
  int channel_mask_max = 3;

  void validate() const {
    weights.validate();
    check(!multitask || weights.gamma > 0.0, cat("scenario ", id, ": multitask requires gamma > 0"));
    check(trainable != TrainableSet::kProjectionOnly || !multitask,
          cat("scenario ", id, ": projection-only excludes the multitask CE term"));
    check(epochs >= 0 && batch_size >= 1, cat("scenario ", id, ": bad epochs/batch"));
  }

  bool needs_decoder() const { return multitask; }

  std::string student_init_str() const {
    return student_init == StudentInit::kRandom ? "random" : "pretrained";
  }
  std::string trainable_str() const {
    return trainable == TrainableSet::kAllStudent ? "all-student" : "projection-only";
  }

  void to_config(ConfigText& cfg) const {
    cfg.set("scenario", "id", id);
    cfg.set("scenario", "student_init", student_init_str());
    cfg.set("scenario", "trainable", trainable_str());
    cfg.set("scenario", "multitask", multitask ? "true" : "false");
    cfg.set("scenario", "gamma", format_double(weights.gamma));
    cfg.set("scenario", "beta", format_double(weights.beta));
    cfg.set("scenario", "epochs", std::to_string(epochs));
    cfg.set("scenario", "batch_size", std::to_string(batch_size));
    cfg.set("scenario", "peak_lr", format_double(schedule.peak_lr));
    cfg.set("scenario", "warmup_steps", std::to_string(schedule.warmup_steps));
    cfg.set("scenario", "seed", std::to_string(seed));
    cfg.set("scenario", "augment", augment ? "true" : "false");
    cfg.set("scenario", "time_mask_max", std::to_string(time_mask_max));
    cfg.set("scenario", "channel_mask_max", std::to_string(channel_mask_max));
  }

  static TrainScenario from_config(const ConfigText& cfg) {
    SectionReader r(cfg, "scenario");
    TrainScenario s;
    s.id = r.get_str("id", s.id);
    const std::string init = r.get_str("student_init", s.student_init_str());
    if (init == "random")
      s.student_init = StudentInit::kRandom;
    else if (init == "pretrained")
      s.student_init = StudentInit::kPretrained;
    else
      fail(cat("scenario: unknown student_init '", init, "'"));
    const std::string tr = r.get_str("trainable", s.trainable_str());
    if (tr == "all-student")
      s.trainable = TrainableSet::kAllStudent;
    else if (tr == "projection-only")
      s.trainable = TrainableSet::kProjectionOnly;
    else
      fail(cat("scenario: unknown trainable set '", tr, "'"));
    s.multitask = r.get_bool("multitask", s.multitask);
    s.weights.gamma = r.get_double("gamma", s.weights.gamma);
    s.weights.beta = r.get_double("beta", s.weights.beta);
    s.epochs = r.get_int("epochs", s.epochs);
    s.batch_size = r.get_int("batch_size", s.batch_size);
    s.schedule.peak_lr = r.get_double("peak_lr", s.schedule.peak_lr);
    s.schedule.warmup_steps = r.get_int("warmup_steps", s.schedule.warmup_steps);
    s.seed = static_cast<uint64_t>(r.get_int("seed", static_cast<int64_t>(s.seed)));
    s.augment = r.get_bool("augment", s.augment);
    s.time_mask_max = static_cast<int>(r.get_int("time_mask_max", s.time_mask_max));
    s.channel_mask_max = static_cast<int>(r.get_int("channel_mask_max", s.channel_mask_max));
    r.finish();
    s.validate();
    return s;
  }
};

// The canonical matrix rows. A-F train; G/H are the untrained references.
inline TrainScenario scenario_from_id(const std::string& id, uint64_t seed) {
  TrainScenario s;
  s.id = id;
  s.seed = seed;
  if (id == "A") {
    s.student_init = StudentInit::kRandom;
  } else if (id == "B") {
    s.student_init = StudentInit::kPretrained;
  } else if (id == "C") {
    s.student_init = StudentInit::kPretrained;
    s.trainable = TrainableSet::kProjectionOnly;
  } else if (id == "D") {
    s.student_init = StudentInit::kRandom;
    s.multitask = true;
    s.weights = {1.0, 1.0};
  } else if (id == "E") {
    s.student_init = StudentInit::kRandom;
    s.multitask = true;
    s.weights = {1.0, 10.0};
  } else if (id == "F") {
    s.student_init = StudentInit::kPretrained;
    s.multitask = true;
    s.weights = {1.0, 100.0};
  } else if (id == "G") {
    s.student_init = StudentInit::kRandom;
    s.epochs = 0;
  } else if (id == "H") {
    s.student_init = StudentInit::kPretrained;
    s.epochs = 0;
  } else {
    fail(cat("scenario: unknown id '", id, "' (A-H)"));
  }
  s.validate();
  return s;
}

}  // namespace xmal
