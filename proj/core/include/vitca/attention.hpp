#pragma once

#include <cstddef>
#include <vector>

#include "vitca/tensor.hpp"

namespace vitca {

struct AttentionOptions {
  std::size_t heads = 1;
  // Logits are divided by this. 0 selects sqrt(d / heads).
  double temperature = 0.0;
  // head_mask[h] == true zeroes head h's output (and its gradients).
  std::vector<bool> head_mask;
};

// Multi-head attention restricted to each cell's neighbourhood.
// q, k, v: [N, d] or [B, N, d]; head h owns columns [h*d/heads, (h+1)*d/heads).
// index: [N, M]; entries of -1 stand for a zero key and zero value.
// Returns the concatenated head outputs with the shape of q. When `weights`
// is given it receives A* as [B, heads, N, M].
Tensor localized_attention(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                           const AttentionOptions& options = {}, Tensor* weights = nullptr);

// Same result via dense N x N attention with an additive mask that is 0 inside
// each neighbourhood and -inf elsewhere, composed from generic ops. O(N^2 d).
Tensor masked_global_attention(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                               const AttentionOptions& options = {});

}  // namespace vitca
