#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <filesystem>
#include <set>

#include "common/gradcheck.hpp"
#include "xmal/core/losses.hpp"
#include "xmal/data/acoustic.hpp"
#include "xmal/models/bundle.hpp"
#include "xmal/models/checkpoint.hpp"

using namespace xmal;
using Catch::Approx;

namespace {
ModelConfigs desk_configs() { return ModelConfigs{}; }

Vocabulary desk_vocab() { return Vocabulary{}; }

double vec_norm(const Tensor& t) {
  double s = 0;
  for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

double vec_dist(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    s += d * d;
  }
  return std::sqrt(s);
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (int64_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}
}  // namespace

TEST_CASE("init_bundle is deterministic in the seed") {
  ModelBundle a = init_bundle(desk_configs(), desk_vocab(), 7, true);
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 7, true);
  ModelBundle c = init_bundle(desk_configs(), desk_vocab(), 8, true);
  auto pa = a.all_params(), pb = b.all_params(), pc = c.all_params();
  REQUIRE(pa.size() == pb.size());
  bool any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].name == pb[i].name);
    REQUIRE(bit_identical(pa[i].value, pb[i].value));
    any_diff |= !bit_identical(pa[i].value, pc[i].value);
  }
  REQUIRE(any_diff);
}

TEST_CASE("parameter names are unique across groups") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 1, true);
  std::set<std::string> names;
  for (const auto& p : b.all_params()) {
    REQUIRE(names.count(p.name) == 0);
    names.insert(p.name);
  }
}

TEST_CASE("encode_text: determinism, unit norm, order sensitivity, limits") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 3, false);
  std::vector<int> tokens = {5, 9, 14, 22, 7};
  Tensor e1 = b.text_embedding(tokens);
  Tensor e2 = b.text_embedding(tokens);
  REQUIRE(bit_identical(e1, e2));
  REQUIRE(e1.size(0) == 64);
  REQUIRE(vec_norm(e1) == Approx(1.0).margin(1e-9));

  // permuting two tokens changes the embedding (positional encoding active)
  std::vector<int> permuted = {9, 5, 14, 22, 7};
  Tensor e3 = b.text_embedding(permuted);
  REQUIRE(vec_dist(e1, e3) > 1e-6);

  std::vector<int> overlong(70, 5);
  REQUIRE_THROWS_WITH(b.text_embedding(overlong), Catch::Matchers::ContainsSubstring("max_len"));
  REQUIRE_THROWS(b.text_embedding({}));
  REQUIRE_THROWS(b.text_embedding({64}));
}

TEST_CASE("encode_speech: output dim/norm contract and length arithmetic") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 4, false);
  AcousticModel am = AcousticModel::make(64, 16, 2);
  std::vector<int> tokens = {10, 11, 12, 13};
  Tensor frames = am.render(tokens, 3);
  Tensor emb = b.speech_embedding(frames);
  REQUIRE(emb.size(0) == 64);  // dim_t, comparable with the teacher space
  REQUIRE(vec_norm(emb) == Approx(1.0).margin(1e-9));

  // too-short input fails with the receptive-field message
  Tensor tiny = Tensor::zeros({3, 16});
  REQUIRE_THROWS_WITH(b.speech_embedding(tiny),
                      Catch::Matchers::ContainsSubstring("receptive field"));

  // doubling the input length doubles the downsampled length (ceil arithmetic)
  const auto& cfg = b.cfg.student;
  for (int64_t t : {8, 9, 16, 33}) {
    REQUIRE(cfg.downsampled_len(t) == (static_cast<int64_t>(std::ceil(t / 2.0)) + 1) / 2);
    Tensor fr = Tensor::zeros({t, 16});
    for (double& v : fr.data()) v = 0.5;
    Tensor e = b.speech_embedding(fr);
    REQUIRE(vec_norm(e) == Approx(1.0).margin(1e-9));
  }
}

TEST_CASE("embedding-space comparability: both pipelines emit dim_t") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 5, false);
  AcousticModel am = AcousticModel::make(64, 16, 2);
  Tensor te = b.text_embedding({4, 5, 6, 7});
  Tensor se = b.speech_embedding(am.render({4, 5, 6, 7}, 0));
  REQUIRE(te.shape() == se.shape());
}

TEST_CASE("decoder: causality, empty-prefix validity, missing-decoder error") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 6, true);
  AcousticModel am = AcousticModel::make(64, 16, 2);
  Tensor frames = am.render({20, 21, 22, 23, 24}, 1);
  Tensor enc = student_states(b.student_model, frames, kEvalCtx);

  // logits for position t unchanged when suffix tokens after t are altered
  std::vector<int> prefix_a = {1, 10, 11, 12, 13};
  std::vector<int> prefix_b = {1, 10, 11, 55, 60};
  Tensor la = decoder_logits(*b.decoder_model, enc, prefix_a, kEvalCtx);
  Tensor lb = decoder_logits(*b.decoder_model, enc, prefix_b, kEvalCtx);
  for (int64_t j = 0; j < la.size(1); ++j) {
    REQUIRE(la.data()[0 * la.size(1) + j] == lb.data()[0 * la.size(1) + j]);
    REQUIRE(la.data()[1 * la.size(1) + j] == lb.data()[1 * la.size(1) + j]);
    REQUIRE(la.data()[2 * la.size(1) + j] == lb.data()[2 * la.size(1) + j]);
  }

  // bos-only prefix gives a valid logits vector over the vocabulary
  Tensor step = decode_asr_step(*b.decoder_model, enc, {1});
  REQUIRE(step.size(0) == 64);
  for (double v : step.data()) REQUIRE(std::isfinite(v));

  ModelBundle nodec = init_bundle(desk_configs(), desk_vocab(), 6, false);
  REQUIRE_FALSE(nodec.has_decoder());
}

TEST_CASE("checkpoint save/load round trip is bit-exact") {
  namespace fs = std::filesystem;
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 11, true);
  const std::string path = (fs::temp_directory_path() / "xmal_ckpt_test.ckpt").string();
  save_checkpoint(path, "[meta]\nkind = test\n", b.all_params());

  LoadedCheckpoint loaded = load_checkpoint(path);
  REQUIRE(loaded.config_text == "[meta]\nkind = test\n");
  auto orig = b.all_params();
  REQUIRE(loaded.params.size() == orig.size());
  for (size_t i = 0; i < orig.size(); ++i) {
    REQUIRE(loaded.params[i].name == orig[i].name);
    REQUIRE(bit_identical(loaded.params[i].value, orig[i].value));
  }

  // loading back into a fresh bundle restores bit-exact parameters
  ModelBundle fresh = init_bundle(desk_configs(), desk_vocab(), 999, true);
  load_group_values(fresh.teacher, loaded.params);
  load_group_values(fresh.student, loaded.params);
  for (size_t i = 0; i < fresh.teacher.params().size(); ++i)
    REQUIRE(bit_identical(fresh.teacher.params()[i].value, b.teacher.params()[i].value));

  // shape mismatch reports the first offending parameter
  ModelConfigs other = desk_configs();
  other.teacher.ffn_dim = 96;
  ModelBundle wrong = init_bundle(other, desk_vocab(), 1, false);
  REQUIRE_THROWS_WITH(load_group_values(wrong.teacher, loaded.params),
                      Catch::Matchers::ContainsSubstring("teacher/enc/l0/ffn/w1"));
  fs::remove(path);
}

TEST_CASE("frozen teacher receives no gradient through the joint loss") {
  ModelBundle b = init_bundle(desk_configs(), desk_vocab(), 13, false);
  b.teacher.set_frozen(true);
  AcousticModel am = AcousticModel::make(64, 16, 2);
  std::vector<int> tokens = {30, 31, 32, 33, 34};
  Tensor frames = am.render(tokens, 2);

  Tape tape;
  Tensor loss;
  {
    TapeScope scope(&tape);
    Tensor te = b.text_embedding(tokens);
    Tensor se = b.speech_embedding(frames);
    loss = l2_pair_loss(se, te);
  }
  backward(loss, tape);

  double teacher_grad_abs = 0.0;
  for (const auto& p : b.teacher.params())
    for (double g : p.value.grad_view()) teacher_grad_abs += std::abs(g);
  REQUIRE(teacher_grad_abs == 0.0);

  double student_grad_abs = 0.0;
  for (const auto& p : b.student.params())
    for (double g : p.value.grad_view()) student_grad_abs += std::abs(g);
  REQUIRE(student_grad_abs > 0.0);
}

TEST_CASE("full joint pipeline matches finite differences") {
  // end-to-end: speech encoder + projection + decoder CE + alignment L2;
  // a thin but complete configuration keeps the check fast.
  ModelConfigs cfg;
  cfg.teacher.n_layers_t = 1;
  cfg.teacher.ffn_dim = 32;
  cfg.student.n_layers_s = 1;
  cfg.student.ffn_dim = 24;
  cfg.decoder.n_layers_d = 1;
  cfg.decoder.ffn_dim = 24;
  Vocabulary vocab;

  for (uint64_t seed : {1, 2, 3}) {
    ModelBundle b = init_bundle(cfg, vocab, seed, true);
    b.teacher.set_frozen(true);
    AcousticModel am = AcousticModel::make(64, 16, seed);
    std::vector<int> tokens = {8, 9, 10, 11};
    Tensor frames = am.render(tokens, 1);
    Tensor text_emb;
    {
      TapeScope no_tape(nullptr);
      text_emb = b.text_embedding(tokens);
    }
    RunCtx ctx;
    ctx.training = true;  // dropout active, keyed -> still deterministic
    ctx.seed = seed;

    auto fwd = [&] {
      Tensor enc = student_states(b.student_model, frames, ctx);
      Tensor proj = projection_forward(b.projection_model, enc, ctx);
      std::vector<uint8_t> mask(static_cast<size_t>(proj.size(0)), 1);
      Tensor se = ops::l2_normalize(ops::mean_pool_masked(proj, mask));
      Tensor l2 = l2_pair_loss(se, text_emb);
      std::vector<int> dec_in = {vocab.bos, 8, 9, 10, 11};
      std::vector<int> dec_tg = {8, 9, 10, 11, vocab.eos};
      Tensor logits = decoder_logits(*b.decoder_model, enc, dec_in, ctx);
      Tensor ce = cross_entropy_label_smoothed(logits, dec_tg, 0.1);
      return total_loss(ce, l2, {1.0, 10.0});
    };

    std::vector<std::pair<std::string, Tensor>> leaves;
    for (const auto& g : {&b.student, &b.projection, &b.decoder})
      for (const auto& p : g->params()) leaves.emplace_back(p.name, p.value);

    auto rep = xmal::testing::finite_difference_check(fwd, leaves, 1e-5, /*max_coords_per_leaf=*/4,
                                                      /*pick_seed=*/seed);
    INFO("seed " << seed << " worst at " << rep.worst_site << " err " << rep.max_rel_err);
    REQUIRE(rep.max_rel_err < 1e-4);
  }
}
