#pragma once

#include "vitca/cell_grid.hpp"
#include "vitca/images.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

// All terms already carry the 1/(b*H*W) factor; total = alpha*rec +
// beta*(output_overflow + hidden_overflow).
struct LossTerms {
  Tensor total;
  double rec = 0.0;
  double output_overflow = 0.0;
  double hidden_overflow = 0.0;
};

// rec             = |Z_o - X|_1 / C_o
// output_overflow = |Z_o - clamp(Z_o, 0, 1)|_1 / C_o
// hidden_overflow = |Z_h - clamp(Z_h, -1, 1)|_1 / C_h
// summed over the batch, then scaled by 1/(b*H*W).
LossTerms compute_loss(const CellGrid& grid, const ImageBatch& truth, double alpha = 1.0, double beta = 1.0);

}  // namespace vitca
