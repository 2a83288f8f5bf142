#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vitca/attention.hpp"
#include "vitca/cell_grid.hpp"
#include "vitca/neighborhood.hpp"
#include "vitca/rng.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

enum class AttentionBackend { local, global };
enum class AttentionScale {
  per_head,  // sqrt(d / heads)
  full,      // sqrt(d)
};

struct ModelConfig {
  CellLayout layout;
  std::size_t embed_dim = 128;
  std::size_t heads = 4;
  std::size_t mlp_dim = 128;
  // Encoder blocks. Anything but 1 is experimental.
  std::size_t depth = 1;
  std::size_t window_h = 3;
  std::size_t window_w = 3;
  BorderMode border = BorderMode::wrap;
  AttentionScale attention_scale = AttentionScale::per_head;
  AttentionBackend backend = AttentionBackend::local;

  std::size_t head_dim() const { return heads ? embed_dim / heads : 0; }
  double attention_temperature() const;
  // Throws ContractError/DimensionError on inconsistent settings.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct EncoderBlockParams {
  Tensor ln1_gain, ln1_bias;
  Tensor w_q, w_k, w_v;  // [d, d]; head h uses columns [h*d/heads, (h+1)*d/heads)
  Tensor w_o, b_o;       // [d, d], [d]
  Tensor ln2_gain, ln2_bias;
  Tensor mlp_w1, mlp_b1;  // [d, m], [m]
  Tensor mlp_w2, mlp_b2;  // [m, d], [d]
};

struct UpdateRuleParams {
  Tensor embed_w, embed_b;  // [L, d], [d]
  Tensor pos_table;         // [N, d], learned positional kind only
  std::vector<EncoderBlockParams> blocks;
  Tensor ln_head_gain, ln_head_bias;
  Tensor head_w, head_b;  // [d, L_out], [L_out]; zero at initialization

  // Stable (name, tensor) listing used by optimizers and serialization.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;
  std::size_t parameter_count() const;
  void zero_grad();
  // Independent copy of every value.
  UpdateRuleParams clone() const;
};

struct Model {
  ModelConfig config;
  UpdateRuleParams params;
};

// He-normal weights, zero biases, unit LN gains, zero head. `cells` sizes the
// learned positional table (ignored otherwise).
UpdateRuleParams init_params(const ModelConfig& config, std::size_t cells, Rng& rng);

struct StepOptions {
  std::vector<bool> head_mask;
  // Receives A* of the first block, [B, heads, N, M].
  Tensor* attention_weights = nullptr;
};

// Flattened cells times E plus bias, plus the added positional term. [B, N, d].
Tensor tokenize(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config);

// Per-head attention on x W_Q, x W_K, x W_V, concatenated, then projected by
// W_o (+ b_o). x: [B, N, d].
Tensor mhsa_localized(const Tensor& x, const EncoderBlockParams& block, const IndexTensor& index,
                      const ModelConfig& config, const StepOptions& options = {});

// Update vectors for every cell, [B, N, update_length].
Tensor update_deltas(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                     const StepOptions& options = {});

// Adds delta to the output and hidden slabs of the cells whose mask entry is
// nonzero (mask has B*N entries). Other slabs pass through untouched.
CellGrid apply_cell_updates(const CellGrid& grid, const Tensor& delta, std::span<const std::uint8_t> mask);

// One stochastic step: each cell is updated iff an independent Bernoulli(sigma)
// draw succeeds (draws in batch-major, row-major cell order).
CellGrid apply_update_rule(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                           double sigma, Rng& rng, const StepOptions& options = {});

// Same step with an explicit per-cell mask.
CellGrid apply_update_rule_masked(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                                  std::span<const std::uint8_t> mask, const StepOptions& options = {});

}  // namespace vitca
