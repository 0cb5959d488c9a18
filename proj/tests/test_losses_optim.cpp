#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "xmal/core/losses.hpp"
#include "xmal/core/optim.hpp"

using namespace xmal;
using Catch::Approx;

TEST_CASE("l2_pair_loss on unit vectors") {
  Tensor e1 = Tensor::from({3}, {1, 0, 0});
  Tensor e2 = Tensor::from({3}, {0, 1, 0});
  Tensor neg_e1 = Tensor::from({3}, {-1, 0, 0});
  REQUIRE(l2_pair_loss(e1, e1).item() == 0.0);
  REQUIRE(l2_pair_loss(e1, neg_e1).item() == Approx(4.0));
  REQUIRE(l2_pair_loss(e1, e2).item() == Approx(2.0));
  REQUIRE_THROWS(l2_pair_loss(e1, Tensor::zeros({4})));
}

TEST_CASE("l2_pair_loss batch form averages over rows") {
  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {0, 0, 0, 0});
  REQUIRE(l2_pair_loss(a, b).item() == Approx(1.0));  // (1 + 1) / 2
}

TEST_CASE("cross entropy examples") {
  SECTION("uniform logits give ln V for any target and epsilon") {
    for (double eps : {0.0, 0.1, 0.3}) {
      Tensor logits = Tensor::zeros({1, 6});
      Tensor loss = cross_entropy_label_smoothed(logits, {3}, eps);
      REQUIRE(loss.item() == Approx(std::log(6.0)).epsilon(1e-12));
    }
  }
  SECTION("loss decreases monotonically as the correct logit grows") {
    double prev = 1e300;
    for (double boost : {0.0, 1.0, 2.0, 4.0, 8.0, 16.0}) {
      Tensor logits = Tensor::from({1, 3}, {boost, 0, 0});
      double li = cross_entropy_label_smoothed(logits, {0}, 0.0).item();
      REQUIRE(li < prev);
      prev = li;
    }
    REQUIRE(prev < 1e-6);  // -> 0 in the limit
  }
  SECTION("V=2, logits [0,0], eps=0.2 gives ln 2") {
    Tensor logits = Tensor::zeros({1, 2});
    REQUIRE(cross_entropy_label_smoothed(logits, {1}, 0.2).item() == Approx(std::log(2.0)));
  }
  SECTION("target outside vocab fails") {
    Tensor logits = Tensor::zeros({1, 4});
    REQUIRE_THROWS_WITH(cross_entropy_label_smoothed(logits, {4}, 0.0),
                        Catch::Matchers::ContainsSubstring(">= vocab"));
  }
  SECTION("padding positions excluded via mask") {
    Tensor logits = Tensor::from({2, 3}, {5, 0, 0, 0, 0, 0});
    std::vector<uint8_t> valid = {1, 0};
    double with_mask = cross_entropy_label_smoothed(logits, {0, 1}, 0.0, &valid).item();
    Tensor row0 = Tensor::from({1, 3}, {5, 0, 0});
    REQUIRE(with_mask == Approx(cross_entropy_label_smoothed(row0, {0}, 0.0).item()));
  }
}

TEST_CASE("total_loss composition") {
  Tensor ce = Tensor::scalar(2.0);
  Tensor l2 = Tensor::scalar(0.5);
  REQUIRE(total_loss(ce, l2, {1.0, 1.0}).item() == Approx(2.5));
  REQUIRE(total_loss(ce, l2, {0.0, 3.0}).item() == Approx(1.5));  // pure alignment
  REQUIRE(total_loss(Tensor::scalar(2.0), Tensor::scalar(0.01), {1.0, 100.0}).item() == Approx(3.0));
  REQUIRE_THROWS_WITH(total_loss(Tensor::scalar(std::nan("")), l2, {1.0, 1.0}),
                      Catch::Matchers::ContainsSubstring("non-finite loss"));
  REQUIRE_THROWS(total_loss(ce, l2, {0.0, 0.0}));  // gamma + beta > 0
}

TEST_CASE("total_loss is linear in each term") {
  RngStream rng(5);
  for (int i = 0; i < 10; ++i) {
    const double ce = rng.next_unit() * 4, l2v = rng.next_unit(), g = rng.next_unit() * 2,
                 b = rng.next_unit() * 100;
    const double base = total_loss(Tensor::scalar(ce), Tensor::scalar(l2v), {g, b}).item();
    const double double_ce = total_loss(Tensor::scalar(2 * ce), Tensor::scalar(l2v), {g, b}).item();
    REQUIRE(double_ce - base == Approx(g * ce).margin(1e-12));
  }
}

TEST_CASE("lr schedule: ramp, peak, inverse square root") {
  LrSchedule sched{1e-3, 10000};
  REQUIRE(sched.at(10000) == Approx(1e-3));                // peak at warmup
  REQUIRE(sched.at(40000) == Approx(0.5e-3));              // s = 4*warmup -> peak/2
  REQUIRE(sched.at(5000) == Approx(0.5e-3));               // on the ramp
  REQUIRE(sched.at(10001) < sched.at(10000));              // decays after warmup
  REQUIRE(sched.at(9999) < sched.at(10000));               // still ramping before
  REQUIRE(sched.at(10000) == Approx(sched.at(10000 + 1)).epsilon(2e-4));  // continuous
  REQUIRE_THROWS(sched.at(0));
}

TEST_CASE("lr schedule monotone: strictly up to warmup, strictly down after") {
  LrSchedule sched{2e-3, 50};
  for (int64_t s = 2; s <= 50; ++s) REQUIRE(sched.at(s) > sched.at(s - 1));
  for (int64_t s = 51; s <= 200; ++s) REQUIRE(sched.at(s) < sched.at(s - 1));
}

TEST_CASE("adam: zero gradient leaves parameters unchanged but counts the step") {
  Tensor p = Tensor::from({3}, {1, 2, 3}, true);
  Adam opt({{"p", p}});
  p.grad();  // allocated, all zero
  opt.step(0.1);
  REQUIRE(opt.step_count() == 1);
  REQUIRE(p.data()[0] == 1.0);
  REQUIRE(p.data()[1] == 2.0);
  REQUIRE(p.data()[2] == 3.0);
}

TEST_CASE("adam: first step with g=1 moves the parameter by about -lr") {
  // bias-corrected first step: m_hat = 1, v_hat = 1 => delta = -lr / (1 + eps)
  Tensor p = Tensor::from({1}, {0.5}, true);
  Adam opt({{"p", p}});
  p.grad()[0] = 1.0;
  opt.step(0.01);
  REQUIRE(p.data()[0] == Approx(0.5 - 0.01).epsilon(1e-6));
}

TEST_CASE("adam: identical state and gradients give identical updates") {
  auto run = [] {
    Tensor p = Tensor::from({2}, {1.0, -1.0}, true);
    Adam opt({{"p", p}});
    for (int s = 1; s <= 5; ++s) {
      p.grad()[0] = 0.3 * s;
      p.grad()[1] = -0.1 * s;
      opt.step(0.05);
      opt.zero_grads();
    }
    return std::vector<double>(p.data().begin(), p.data().end());
  };
  REQUIRE(run() == run());
}

TEST_CASE("adam: non-finite gradient fails with the parameter name") {
  Tensor p = Tensor::from({1}, {0.0}, true);
  Adam opt({{"weights/conv0", p}});
  p.grad()[0] = std::numeric_limits<double>::infinity();
  REQUIRE_THROWS_WITH(opt.step(0.1), Catch::Matchers::ContainsSubstring("weights/conv0"));
}

TEST_CASE("adam moment arrays are shape-congruent with parameters") {
  Tensor p = Tensor::zeros({4, 3}, true);
  Adam opt({{"p", p}});
  REQUIRE(opt.slots()[0].m.size() == 12);
  REQUIRE(opt.slots()[0].v.size() == 12);
}
