#pragma once

#include <cstddef>
#include <string>

#include "vitca/cell_grid.hpp"
#include "vitca/rng.hpp"
#include "vitca/update_rule.hpp"

namespace vitca {

enum class RolloutMode { plain, checkpointed, fusion_mitosis };

const char* rollout_name(RolloutMode mode);
RolloutMode parse_rollout(const std::string& text);

struct RolloutOptions {
  RolloutMode mode = RolloutMode::plain;
  // Checkpointed mode; 0 selects floor(T / 2).
  std::size_t segments = 0;
  // Fusion/mitosis mode: full-resolution steps before fusion and after mitosis.
  std::size_t fusion_pre = 2;
  std::size_t fusion_post = 2;
  StepOptions step;
};

// T applications of the update rule.
//
// checkpointed: the steps are split into `segments` chunks of floor(T/segments)
// steps with the remainder in the last chunk. Every chunk but the last runs
// without recording a graph and keeps only its input; on the backward pass it
// is replayed with the same random stream and differentiated. Forward values
// match plain mode exactly.
CellGrid rollout(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config, std::size_t steps,
                 double sigma, Rng& rng, const RolloutOptions& options = {});

// 2x2 stride-2 mean over every channel of the cell grid.
CellGrid fuse_cells(const CellGrid& grid);
// Each cell copied to its right, bottom-right and bottom neighbours.
CellGrid mitosis(const CellGrid& grid);

// fusion_pre steps, stash the input slab, fuse, T - pre - post half-resolution
// steps, mitosis, re-inject the stash (and positional slab), fusion_post steps.
CellGrid fusion_mitosis_rollout(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                                std::size_t steps, double sigma, Rng& rng, std::size_t fusion_pre = 2,
                                std::size_t fusion_post = 2, const StepOptions& step = {});

}  // namespace vitca
