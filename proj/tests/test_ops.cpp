#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "xmal/core/ops.hpp"
#include "xmal/core/primitive.hpp"

using namespace xmal;
using Catch::Approx;

TEST_CASE("softmax of all-zero vector is uniform") {
  Tensor x = Tensor::zeros({4});
  Tensor y = ops::softmax_rows(x);
  for (double v : y.data()) REQUIRE(v == Approx(0.25).epsilon(1e-12));
}

TEST_CASE("gelu and tanh fix zero") {
  Tensor x = Tensor::zeros({3});
  REQUIRE(ops::gelu(x).data()[0] == 0.0);
  REQUIRE(ops::tanh_op(x).data()[1] == 0.0);
}

TEST_CASE("layer_norm of [1,3] with unit gain, zero bias") {
  // hand-computed: mean 2, population variance 1
  Tensor x = Tensor::from({2}, {1, 3});
  Tensor g = Tensor::from({2}, {1, 1});
  Tensor b = Tensor::zeros({2});
  Tensor y = ops::layer_norm(x, g, b, 1e-5);
  REQUIRE(y.data()[0] == Approx(-1.0).margin(1e-5));
  REQUIRE(y.data()[1] == Approx(1.0).margin(1e-5));
}

TEST_CASE("shape mismatch errors name the primitive and dimensions") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  REQUIRE_THROWS_WITH(ops::matmul(a, b), Catch::Matchers::ContainsSubstring("matmul") &&
                                             Catch::Matchers::ContainsSubstring("[2x3]"));
  REQUIRE_THROWS_WITH(ops::add(a, Tensor::zeros({3, 2})),
                      Catch::Matchers::ContainsSubstring("add"));
}

TEST_CASE("mean_pool_masked examples") {
  SECTION("identical rows, full mask") {
    Tensor s = Tensor::from({3, 2}, {5, 7, 5, 7, 5, 7});
    Tensor p = ops::mean_pool_masked(s, {1, 1, 1});
    REQUIRE(p.data()[0] == 5.0);
    REQUIRE(p.data()[1] == 7.0);
  }
  SECTION("two rows averaged") {
    Tensor s = Tensor::from({2, 2}, {1, 0, 3, 0});
    Tensor p = ops::mean_pool_masked(s, {1, 1});
    REQUIRE(p.data()[0] == 2.0);
    REQUIRE(p.data()[1] == 0.0);
  }
  SECTION("padding excluded") {
    Tensor s = Tensor::from({3, 2}, {1, 0, 3, 0, 9, 9});
    Tensor p = ops::mean_pool_masked(s, {1, 1, 0});
    REQUIRE(p.data()[0] == 2.0);
    REQUIRE(p.data()[1] == 0.0);
  }
  SECTION("all-false mask fails") {
    Tensor s = Tensor::zeros({2, 2});
    REQUIRE_THROWS_WITH(ops::mean_pool_masked(s, {0, 0}),
                        Catch::Matchers::ContainsSubstring("empty pooling window"));
  }
}

TEST_CASE("l2_normalize examples") {
  Tensor v = Tensor::from({2}, {3, 4});
  Tensor u = ops::l2_normalize(v);
  REQUIRE(u.data()[0] == Approx(0.6).epsilon(1e-12));
  REQUIRE(u.data()[1] == Approx(0.8).epsilon(1e-12));

  // idempotence on unit vectors
  Tensor uu = ops::l2_normalize(u);
  REQUIRE(uu.data()[0] == Approx(u.data()[0]).epsilon(1e-12));

  double norm = 0;
  for (double x : u.data()) norm += x * x;
  REQUIRE(std::sqrt(norm) == Approx(1.0).margin(1e-12));

  REQUIRE_THROWS_WITH(ops::l2_normalize(Tensor::zeros({2})),
                      Catch::Matchers::ContainsSubstring("degenerate embedding"));
}

TEST_CASE("dropout is identity in eval mode and rescales in train mode") {
  Tensor x = Tensor::from({8}, {1, 1, 1, 1, 1, 1, 1, 1});
  Tensor eval_y = ops::dropout(x, 0.5, 123, false);
  REQUIRE(eval_y.id() == x.id());

  Tensor y1 = ops::dropout(x, 0.5, 123, true);
  Tensor y2 = ops::dropout(x, 0.5, 123, true);
  for (int i = 0; i < 8; ++i) {
    REQUIRE(y1.data()[i] == y2.data()[i]);  // same key -> same mask
    REQUIRE((y1.data()[i] == 0.0 || y1.data()[i] == 2.0));
  }
  Tensor y3 = ops::dropout(x, 0.5, 124, true);
  bool differs = false;
  for (int i = 0; i < 8; ++i) differs |= y1.data()[i] != y3.data()[i];
  REQUIRE(differs);
  REQUIRE_THROWS(ops::dropout(x, 1.0, 1, true));
}

TEST_CASE("masked softmax zeroes masked entries and renormalizes") {
  Tensor x = Tensor::from({2, 3}, {0, 0, 0, 1, 2, 3});
  std::vector<uint8_t> mask = {1, 1, 0, 1, 1, 1};
  Tensor y = ops::softmax_rows(x, &mask);
  REQUIRE(y.data()[0] == Approx(0.5));
  REQUIRE(y.data()[1] == Approx(0.5));
  REQUIRE(y.data()[2] == 0.0);
  double row1 = y.data()[3] + y.data()[4] + y.data()[5];
  REQUIRE(row1 == Approx(1.0).epsilon(1e-12));

  std::vector<uint8_t> dead = {0, 0, 0, 1, 1, 1};
  REQUIRE_THROWS_WITH(ops::softmax_rows(x, &dead), Catch::Matchers::ContainsSubstring("fully masked"));
}

TEST_CASE("im2col_1d output length follows stride arithmetic") {
  // k=3, s=2, p=1 -> ceil(T/2)
  for (int64_t t : {4, 5, 8, 9, 17}) {
    Tensor x = Tensor::zeros({t, 2});
    Tensor c = ops::im2col_1d(x, 3, 2, 1);
    REQUIRE(c.size(0) == (t + 2 - 3) / 2 + 1);
    REQUIRE(c.size(1) == 6);
  }
  REQUIRE_THROWS(ops::im2col_1d(Tensor::zeros({1, 2}), 5, 2, 0));
}

TEST_CASE("slice and concat are inverse") {
  Tensor x = Tensor::from({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  Tensor a = ops::slice_cols(x, 0, 2);
  Tensor b = ops::slice_cols(x, 2, 2);
  Tensor y = ops::concat_cols({a, b});
  for (int i = 0; i < 8; ++i) REQUIRE(y.data()[i] == x.data()[i]);
  REQUIRE_THROWS(ops::slice_cols(x, 3, 2));
}

TEST_CASE("embedding gathers rows and validates ids") {
  Tensor table = Tensor::from({3, 2}, {0, 1, 10, 11, 20, 21});
  Tensor e = ops::embedding(table, {2, 0});
  REQUIRE(e.data()[0] == 20.0);
  REQUIRE(e.data()[3] == 1.0);
  REQUIRE_THROWS(ops::embedding(table, {3}));
}

namespace {
// Reference attention out of the small primitives; the oracle for the fused op.
Tensor composed_attention(const Tensor& xq, const Tensor& xkv, const std::vector<Tensor>& p,
                          int n_heads, const std::vector<uint8_t>* mask) {
  const int64_t dim = xq.size(1);
  const int64_t hd = dim / n_heads;
  Tensor q = ops::add_rowvec(ops::matmul(xq, p[0]), p[1]);
  Tensor k = ops::add_rowvec(ops::matmul(xkv, p[2]), p[3]);
  Tensor v = ops::add_rowvec(ops::matmul(xkv, p[4]), p[5]);
  std::vector<Tensor> heads;
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = ops::slice_cols(q, h * hd, hd);
    Tensor kh = ops::slice_cols(k, h * hd, hd);
    Tensor vh = ops::slice_cols(v, h * hd, hd);
    Tensor scores = ops::scale(ops::matmul(qh, ops::transpose(kh)), 1.0 / std::sqrt(double(hd)));
    heads.push_back(ops::matmul(ops::softmax_rows(scores, mask), vh));
  }
  return ops::add_rowvec(ops::matmul(ops::concat_cols(heads), p[6]), p[7]);
}
}  // namespace

TEST_CASE("fused attention matches the composed-primitive route, values and gradients") {
  RngStream rng(314);
  for (int trial = 0; trial < 8; ++trial) {
    const int heads = trial % 2 ? 2 : 4;
    const int64_t dim = 8, tq = 3 + trial % 3, tk = 4;
    Tensor xq = Tensor::randn({tq, dim}, rng, 1.0, true);
    Tensor xkv = Tensor::randn({tk, dim}, rng, 1.0, true);
    std::vector<Tensor> p;
    for (int i = 0; i < 4; ++i) {
      p.push_back(Tensor::randn({dim, dim}, rng, 0.4, true));
      p.push_back(Tensor::randn({dim}, rng, 0.2, true));
    }
    std::vector<uint8_t> mask(static_cast<size_t>(tq * tk), 1);
    mask[static_cast<size_t>(tk - 1)] = 0;
    std::vector<double> probe;
    for (int64_t i = 0; i < tq * dim; ++i) probe.push_back(rng.next_normal());

    auto run = [&](bool fused) {
      for (auto& t : p) t.drop_grad();
      xq.drop_grad();
      xkv.drop_grad();
      Tape tape;
      Tensor loss;
      {
        TapeScope scope(&tape);
        Tensor out = fused ? ops::multi_head_attention_op(xq, xkv, p[0], p[1], p[2], p[3], p[4],
                                                          p[5], p[6], p[7], heads, &mask)
                           : composed_attention(xq, xkv, p, heads, &mask);
        loss = ops::reduce_weighted_sum(out, probe);
      }
      backward(loss, tape);
      std::vector<double> grads;
      for (const auto& t : {xq, xkv}) grads.insert(grads.end(), t.grad_view().begin(), t.grad_view().end());
      for (const auto& t : p) grads.insert(grads.end(), t.grad_view().begin(), t.grad_view().end());
      grads.push_back(loss.item());
      return grads;
    };

    auto fused = run(true);
    auto composed = run(false);
    REQUIRE(fused.size() == composed.size());
    for (size_t i = 0; i < fused.size(); ++i)
      REQUIRE(fused[i] == Catch::Approx(composed[i]).margin(1e-11));
  }
}

TEST_CASE("primitive_forward dispatches every kind") {
  for (Primitive p : all_primitives()) {
    // just pick a minimal legal call per kind; the point is the uniform door
    PrimitiveAttrs attrs;
    std::vector<Tensor> operands;
    switch (p) {
      case Primitive::kMatmul:
        operands = {Tensor::zeros({2, 3}), Tensor::zeros({3, 2})};
        break;
      case Primitive::kLinear:
        operands = {Tensor::zeros({2, 3}), Tensor::zeros({3, 2}), Tensor::zeros({2})};
        break;
      case Primitive::kMultiHeadAttention: {
        for (int i = 0; i < 2; ++i) operands.push_back(Tensor::zeros({3, 4}));
        for (int i = 0; i < 4; ++i) {
          operands.push_back(Tensor::zeros({4, 4}));
          operands.push_back(Tensor::zeros({4}));
        }
        attrs.i0 = 2;  // heads
        break;
      }
      case Primitive::kTranspose:
      case Primitive::kGelu:
      case Primitive::kTanh:
      case Primitive::kSoftmaxRows:
        operands = {Tensor::zeros({2, 2})};
        break;
      case Primitive::kAdd:
      case Primitive::kMul:
        operands = {Tensor::zeros({2, 2}), Tensor::zeros({2, 2})};
        break;
      case Primitive::kAddRowvec:
        operands = {Tensor::zeros({2, 2}), Tensor::zeros({2})};
        break;
      case Primitive::kScale:
        operands = {Tensor::zeros({2})};
        attrs.scalar = 2.0;
        break;
      case Primitive::kLayerNorm:
        operands = {Tensor::zeros({2, 2}), Tensor::from({2}, {1, 1}), Tensor::zeros({2})};
        break;
      case Primitive::kDropout:
        operands = {Tensor::zeros({2})};
        attrs.scalar = 0.1;
        attrs.training = false;
        break;
      case Primitive::kEmbedding:
        operands = {Tensor::zeros({3, 2})};
        attrs.ids = {0, 2};
        break;
      case Primitive::kIm2col1d:
        operands = {Tensor::zeros({4, 2})};
        attrs.i0 = 3;
        attrs.i1 = 2;
        attrs.i2 = 1;
        break;
      case Primitive::kSliceCols:
        operands = {Tensor::zeros({2, 4})};
        attrs.i0 = 1;
        attrs.i1 = 2;
        break;
      case Primitive::kConcatCols:
        operands = {Tensor::zeros({2, 2}), Tensor::zeros({2, 1})};
        break;
      case Primitive::kMeanPoolMasked:
        operands = {Tensor::zeros({3, 2})};
        attrs.mask = {1, 1, 0};
        break;
      case Primitive::kL2Normalize:
        operands = {Tensor::from({2}, {3, 4})};
        break;
      case Primitive::kSquaredDistance:
        operands = {Tensor::zeros({3}), Tensor::zeros({3})};
        break;
      case Primitive::kCrossEntropy:
        operands = {Tensor::zeros({2, 5})};
        attrs.ids = {1, 2};
        attrs.scalar = 0.1;
        break;
      case Primitive::kReduceWeightedSum:
        operands = {Tensor::zeros({3})};
        attrs.weights = {1, 2, 3};
        break;
      case Primitive::kSumScalars:
        operands = {Tensor::scalar(1), Tensor::scalar(2)};
        break;
    }
    Tensor out = primitive_forward(p, operands, attrs);
    REQUIRE(out.defined());
  }
}
