#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "xmal/data/vocab.hpp"
#include "xmal/models/decoder.hpp"
#include "xmal/models/encoders.hpp"

namespace xmal {

// The two pipelines plus their parameter groups. Group tensors and model
// tensors are the same handles; groups exist for freezing, optimization and
// serialization.
struct ModelBundle {
  ModelConfigs cfg;
  Vocabulary vocab;

  TeacherModel teacher_model;
  StudentModel student_model;
  ProjectionHead projection_model;
  std::optional<DecoderModel> decoder_model;

  ParamGroup teacher{"teacher"};
  ParamGroup student{"student"};
  ParamGroup projection{"projection"};
  ParamGroup decoder{"decoder"};

  bool has_decoder() const { return decoder_model.has_value(); }

  std::vector<Param> all_params() const {
    std::vector<Param> out;
    for (const auto& g : {&teacher, &student, &projection, &decoder})
      out.insert(out.end(), g->params().begin(), g->params().end());
    return out;
  }

  Tensor text_embedding(const std::vector<int>& tokens, const RunCtx& ctx = kEvalCtx) const {
    return encode_text(teacher_model, vocab, tokens, ctx);
  }

  Tensor speech_embedding(const Tensor& frames, const RunCtx& ctx = kEvalCtx) const {
    return encode_speech(student_model, projection_model, frames, ctx);
  }
};

// Deterministic construction from (configs, seed): every parameter is keyed
// by (seed, its full name), so the same seed always yields bit-identical
// bundles regardless of which optional parts exist.
inline ModelBundle init_bundle(const ModelConfigs& cfg, const Vocabulary& vocab, uint64_t seed,
                               bool with_decoder) {
  cfg.validate();
  vocab.validate();
  check(cfg.teacher.vocab_size == vocab.size,
        cat("init_bundle: teacher vocab ", cfg.teacher.vocab_size, " != vocabulary size ", vocab.size));
  ModelBundle b;
  b.cfg = cfg;
  b.vocab = vocab;
  {
    ParamFactory f(b.teacher, seed);
    b.teacher_model = TeacherModel::make(cfg.teacher, f);
  }
  {
    ParamFactory f(b.student, seed);
    b.student_model = StudentModel::make(cfg.student, f);
  }
  {
    ParamFactory f(b.projection, seed);
    b.projection_model = ProjectionHead::make(cfg.projection, f);
  }
  if (with_decoder) {
    ParamFactory f(b.decoder, seed);
    b.decoder_model = DecoderModel::make(cfg.decoder, cfg.teacher.vocab_size, f);
  }
  return b;
}

}  // namespace xmal
