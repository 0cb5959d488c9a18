#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "xmal/core/losses.hpp"
#include "xmal/core/ops.hpp"

namespace xmal {

// Uniform handle over the recorded primitives, so harnesses (notably the
// finite-difference oracle) can enumerate and invoke every op through one
// door. Models call the named functions directly.
enum class Primitive {
  kMatmul,
  kLinear,
  kMultiHeadAttention,
  kTranspose,
  kAdd,
  kAddRowvec,
  kMul,
  kScale,
  kGelu,
  kTanh,
  kSoftmaxRows,
  kLayerNorm,
  kDropout,
  kEmbedding,
  kIm2col1d,
  kSliceCols,
  kConcatCols,
  kMeanPoolMasked,
  kL2Normalize,
  kSquaredDistance,
  kCrossEntropy,
  kReduceWeightedSum,
  kSumScalars,
};

struct PrimitiveAttrs {
  double scalar = 0.0;            // scale factor, dropout rate, ce epsilon, ln eps
  int64_t i0 = 0, i1 = 0, i2 = 0; // kernel/stride/pad or col0/width
  uint64_t key = 0;               // dropout stream key
  bool training = false;
  std::vector<uint8_t> mask;
  std::vector<int> ids;
  std::vector<double> weights;
};

inline const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::kMatmul: return "matmul";
    case Primitive::kLinear: return "linear";
    case Primitive::kMultiHeadAttention: return "multi_head_attention";
    case Primitive::kTranspose: return "transpose";
    case Primitive::kAdd: return "add";
    case Primitive::kAddRowvec: return "add_rowvec";
    case Primitive::kMul: return "mul";
    case Primitive::kScale: return "scale";
    case Primitive::kGelu: return "gelu";
    case Primitive::kTanh: return "tanh";
    case Primitive::kSoftmaxRows: return "softmax_rows";
    case Primitive::kLayerNorm: return "layer_norm";
    case Primitive::kDropout: return "dropout";
    case Primitive::kEmbedding: return "embedding";
    case Primitive::kIm2col1d: return "im2col_1d";
    case Primitive::kSliceCols: return "slice_cols";
    case Primitive::kConcatCols: return "concat_cols";
    case Primitive::kMeanPoolMasked: return "mean_pool_masked";
    case Primitive::kL2Normalize: return "l2_normalize";
    case Primitive::kSquaredDistance: return "squared_distance";
    case Primitive::kCrossEntropy: return "cross_entropy";
    case Primitive::kReduceWeightedSum: return "reduce_weighted_sum";
    case Primitive::kSumScalars: return "sum_scalars";
  }
  return "?";
}

inline std::vector<Primitive> all_primitives() {
  return {Primitive::kMatmul,        Primitive::kLinear,      Primitive::kMultiHeadAttention,
          Primitive::kTranspose,     Primitive::kAdd,
          Primitive::kAddRowvec,     Primitive::kMul,         Primitive::kScale,
          Primitive::kGelu,          Primitive::kTanh,        Primitive::kSoftmaxRows,
          Primitive::kLayerNorm,     Primitive::kDropout,     Primitive::kEmbedding,
          Primitive::kIm2col1d,      Primitive::kSliceCols,   Primitive::kConcatCols,
          Primitive::kMeanPoolMasked, Primitive::kL2Normalize, Primitive::kSquaredDistance,
          Primitive::kCrossEntropy,  Primitive::kReduceWeightedSum, Primitive::kSumScalars};
}

inline Tensor primitive_forward(Primitive kind, const std::vector<Tensor>& operands,
                                const PrimitiveAttrs& attrs = {}) {
  auto want = [&](size_t n) {
    check(operands.size() == n,
          cat(primitive_name(kind), ": expected ", n, " operands, got ", operands.size()));
  };
  switch (kind) {
    case Primitive::kMatmul: want(2); return ops::matmul(operands[0], operands[1]);
    case Primitive::kLinear: want(3); return ops::linear(operands[0], operands[1], operands[2]);
    case Primitive::kMultiHeadAttention:
      want(10);
      return ops::multi_head_attention_op(operands[0], operands[1], operands[2], operands[3],
                                          operands[4], operands[5], operands[6], operands[7],
                                          operands[8], operands[9], static_cast<int>(attrs.i0),
                                          attrs.mask.empty() ? nullptr : &attrs.mask);
    case Primitive::kTranspose: want(1); return ops::transpose(operands[0]);
    case Primitive::kAdd: want(2); return ops::add(operands[0], operands[1]);
    case Primitive::kAddRowvec: want(2); return ops::add_rowvec(operands[0], operands[1]);
    case Primitive::kMul: want(2); return ops::mul(operands[0], operands[1]);
    case Primitive::kScale: want(1); return ops::scale(operands[0], attrs.scalar);
    case Primitive::kGelu: want(1); return ops::gelu(operands[0]);
    case Primitive::kTanh: want(1); return ops::tanh_op(operands[0]);
    case Primitive::kSoftmaxRows:
      want(1);
      return ops::softmax_rows(operands[0], attrs.mask.empty() ? nullptr : &attrs.mask);
    case Primitive::kLayerNorm:
      want(3);
      return ops::layer_norm(operands[0], operands[1], operands[2],
                             attrs.scalar > 0.0 ? attrs.scalar : 1e-5);
    case Primitive::kDropout:
      want(1);
      return ops::dropout(operands[0], attrs.scalar, attrs.key, attrs.training);
    case Primitive::kEmbedding: want(1); return ops::embedding(operands[0], attrs.ids);
    case Primitive::kIm2col1d:
      want(1);
      return ops::im2col_1d(operands[0], attrs.i0, attrs.i1, attrs.i2);
    case Primitive::kSliceCols: want(1); return ops::slice_cols(operands[0], attrs.i0, attrs.i1);
    case Primitive::kConcatCols: return ops::concat_cols(operands);
    case Primitive::kMeanPoolMasked: want(1); return ops::mean_pool_masked(operands[0], attrs.mask);
    case Primitive::kL2Normalize: want(1); return ops::l2_normalize(operands[0]);
    case Primitive::kSquaredDistance: want(2); return ops::squared_distance(operands[0], operands[1]);
    case Primitive::kCrossEntropy:
      want(1);
      return cross_entropy_label_smoothed(operands[0], attrs.ids, attrs.scalar,
                                          attrs.mask.empty() ? nullptr : &attrs.mask);
    case Primitive::kReduceWeightedSum:
      want(1);
      return ops::reduce_weighted_sum(operands[0], attrs.weights);
    case Primitive::kSumScalars: return ops::sum_scalars(operands);
  }
  fail("primitive_forward: unknown primitive");
}

}  // namespace xmal
