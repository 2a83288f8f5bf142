#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "vitca/tensor.hpp"

// Differentiable operations. Binary elementwise ops accept an identical
// shape or a right operand whose shape is a suffix of the left operand's
// (bias vectors, positional tables, scalars); that operand's gradient is
// summed over the repeated leading dimensions.
namespace vitca {

// a: [..., k] (leading dims flattened into rows), b: [k, n] -> [..., n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// d|x|/dx is taken as 0 at x == 0.
Tensor abs(const Tensor& x);
// Gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);
// Exact-erf GELU, x * Phi(x).
Tensor gelu(const Tensor& x);

Tensor softmax_lastdim(const Tensor& x);

inline constexpr double kLayerNormEps = 1e-5;
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// x: [R, d], index: [N, M] with entries in [0, R) -> [N, M, d].
Tensor gather_rows(const Tensor& x, const IndexTensor& index);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor concat_lastdim(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t end);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor transpose(const Tensor& x);

// x: [B, H, W, C]. Mean over non-overlapping 2x2 blocks (stride 2).
Tensor avg_pool2x2(const Tensor& x);
// x: [B, H, W, C] -> [B, 2H, 2W, C]; each site copied to its 2x2 block.
Tensor duplicate2x2(const Tensor& x);

// logits: [n, classes]; mean negative log-likelihood of the labels.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace vitca
