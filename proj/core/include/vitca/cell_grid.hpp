#pragma once

#include <cstddef>

#include "vitca/images.hpp"
#include "vitca/positional.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

// Channel layout of one cell:
//   [input C_i*P | output C_o*P | positional C_pe*P | hidden C_h]
// where P = patch_h * patch_w. Within a pixel slab the order is
// channel-major, then patch row, then patch column.
struct CellLayout {
  std::size_t input_channels = 1;
  std::size_t output_channels = 1;
  std::size_t hidden_channels = 32;
  std::size_t patch_h = 1;
  std::size_t patch_w = 1;
  PositionalKind positional = PositionalKind::none;

  std::size_t patch_area() const { return patch_h * patch_w; }
  std::size_t pe_channels() const { return positional_channels(positional); }

  std::size_t input_offset() const { return 0; }
  std::size_t input_length() const { return input_channels * patch_area(); }
  std::size_t output_offset() const { return input_length(); }
  std::size_t output_length() const { return output_channels * patch_area(); }
  std::size_t pe_offset() const { return output_offset() + output_length(); }
  std::size_t pe_length() const { return pe_channels() * patch_area(); }
  std::size_t hidden_offset() const { return pe_offset() + pe_length(); }
  std::size_t hidden_length() const { return hidden_channels; }
  std::size_t cell_length() const { return hidden_offset() + hidden_length(); }
  // Entries written by an update: output slab followed by hidden slab.
  std::size_t update_length() const { return output_length() + hidden_length(); }

  bool operator==(const CellLayout&) const = default;
};

// Batch of cell grids. state is [batch, rows*cols, cell_length], cells in
// row-major order.
struct CellGrid {
  CellLayout layout;
  std::size_t batch = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  Tensor state;

  std::size_t cells() const { return rows * cols; }
  std::size_t height() const { return rows * layout.patch_h; }
  std::size_t width() const { return cols * layout.patch_w; }

  // Same grid with the state cut from any graph.
  CellGrid detached() const;
};

// Output slab 0.5, hidden slab 0, input slab 0, positional slab filled.
CellGrid seed_cells(const CellLayout& layout, std::size_t batch, std::size_t height, std::size_t width);

// Overwrites the input slab with img (B x C_i x H x W). Gradients flow to the
// remaining slabs of the incoming state.
CellGrid inject_input(const CellGrid& grid, const ImageBatch& img);

// Rewrites the positional slab for the grid's current resolution.
CellGrid refill_positional(const CellGrid& grid);

// Output slab as a differentiable [B, C_o, H, W] tensor.
Tensor extract_output(const CellGrid& grid);
// Hidden slab, [B, N, C_h].
Tensor extract_hidden(const CellGrid& grid);

// Value-only copies of slabs in image layout.
ImageBatch output_image(const CellGrid& grid);
ImageBatch input_image(const CellGrid& grid);
// [C_pe x H x W] for batch item n.
ImageBatch positional_image(const CellGrid& grid);

// Stacks grids (same layout and resolution) along the batch axis.
CellGrid stack_grids(const std::vector<CellGrid>& grids);
// Batch item n as a single-item grid.
CellGrid grid_item(const CellGrid& grid, std::size_t n);

}  // namespace vitca
