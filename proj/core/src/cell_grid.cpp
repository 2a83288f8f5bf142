#include "vitca/cell_grid.hpp"

#include <string>

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"

namespace vitca {

namespace {

// Flat offset of pixel (c, y, x) of a slab starting at `offset`, relative to
// the start of batch item 0.
struct SlabAddress {
  const CellLayout& layout;
  std::size_t cols;
  std::size_t offset;

  std::size_t operator()(std::size_t c, std::size_t y, std::size_t x) const {
    const std::size_t ph = layout.patch_h, pw = layout.patch_w;
    const std::size_t cell = (y / ph) * cols + x / pw;
    const std::size_t within = c * layout.patch_area() + (y % ph) * pw + x % pw;
    return cell * layout.cell_length() + offset + within;
  }
};

void check_image(const CellGrid& grid, const ImageBatch& img) {
  if (img.batch != grid.batch || img.channels != grid.layout.input_channels || img.height != grid.height() ||
      img.width != grid.width()) {
    throw DimensionError("input images [" + std::to_string(img.batch) + "x" + std::to_string(img.channels) + "x" +
                         std::to_string(img.height) + "x" + std::to_string(img.width) + "] do not match grid [" +
                         std::to_string(grid.batch) + "x" + std::to_string(grid.layout.input_channels) + "x" +
                         std::to_string(grid.height()) + "x" + std::to_string(grid.width()) + "]");
  }
}

// state with entries [offset, offset+length) of every cell replaced by
// `slab` (batch*cells*length values, or cells*length when shared_across_batch).
Tensor overwrite_slab(const Tensor& state, std::size_t offset, std::size_t length, const std::vector<double>& slab,
                      bool shared_across_batch) {
  const std::size_t b = state.dim(0), n = state.dim(1), l = state.dim(2);
  std::vector<double> out(state.values().begin(), state.values().end());
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < n; ++c) {
      const std::size_t src = ((shared_across_batch ? 0 : i) * n + c) * length;
      std::copy_n(slab.data() + src, length, out.data() + (i * n + c) * l + offset);
    }
  }
  return make_op_result(state.shape(), std::move(out), {state}, [offset, length, l](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gs = ctx.input_grad(0);
    if (gs.empty()) return;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const std::size_t k = i % l;
      if (k < offset || k >= offset + length) gs[i] += g[i];
    }
  });
}

// Per-cell slab values for one image stack laid out [batch][C][H][W].
std::vector<double> patchify(const CellGrid& grid, std::span<const double> pixels, std::size_t batch,
                             std::size_t channels) {
  const CellLayout& lay = grid.layout;
  const std::size_t h = grid.height(), w = grid.width();
  const std::size_t length = channels * lay.patch_area();
  std::vector<double> slab(batch * grid.cells() * length);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t cell = (y / lay.patch_h) * grid.cols + x / lay.patch_w;
          const std::size_t within = c * lay.patch_area() + (y % lay.patch_h) * lay.patch_w + x % lay.patch_w;
          slab[(i * grid.cells() + cell) * length + within] = pixels[((i * channels + c) * h + y) * w + x];
        }
  return slab;
}

ImageBatch slab_image(const CellGrid& grid, std::size_t offset, std::size_t channels) {
  const std::size_t h = grid.height(), w = grid.width();
  ImageBatch out(grid.batch, channels, h, w);
  const SlabAddress addr{grid.layout, grid.cols, offset};
  const auto sv = grid.state.values();
  const std::size_t item = grid.cells() * grid.layout.cell_length();
  for (std::size_t i = 0; i < grid.batch; ++i)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) out.at(i, c, y, x) = sv[i * item + addr(c, y, x)];
  return out;
}

}  // namespace

CellGrid CellGrid::detached() const {
  CellGrid g = *this;
  g.state = state.detach();
  return g;
}

CellGrid seed_cells(const CellLayout& layout, std::size_t batch, std::size_t height, std::size_t width) {
  if (layout.patch_h == 0 || layout.patch_w == 0) throw ContractError("patch dimensions must be positive");
  if (height == 0 || width == 0 || height % layout.patch_h || width % layout.patch_w) {
    throw DimensionError("grid " + std::to_string(height) + "x" + std::to_string(width) +
                         " is not divisible into " + std::to_string(layout.patch_h) + "x" +
                         std::to_string(layout.patch_w) + " patches");
  }
  CellGrid grid;
  grid.layout = layout;
  grid.batch = batch;
  grid.rows = height / layout.patch_h;
  grid.cols = width / layout.patch_w;
  const std::size_t l = layout.cell_length();
  std::vector<double> values(batch * grid.cells() * l, 0.0);
  const std::vector<double> pe =
      layout.pe_length() ? patchify(grid, concat_encoding(layout.positional, height, width), 1, layout.pe_channels())
                         : std::vector<double>{};
  for (std::size_t i = 0; i < batch; ++i) {
    for (std::size_t c = 0; c < grid.cells(); ++c) {
      double* cell = values.data() + (i * grid.cells() + c) * l;
      std::fill_n(cell + layout.output_offset(), layout.output_length(), 0.5);
      if (!pe.empty()) std::copy_n(pe.data() + c * layout.pe_length(), layout.pe_length(), cell + layout.pe_offset());
    }
  }
  grid.state = Tensor::from_values({batch, grid.cells(), l}, std::move(values));
  return grid;
}

CellGrid inject_input(const CellGrid& grid, const ImageBatch& img) {
  check_image(grid, img);
  CellGrid out = grid;
  out.state = overwrite_slab(grid.state, grid.layout.input_offset(), grid.layout.input_length(),
                             patchify(grid, img.values, img.batch, img.channels), false);
  return out;
}

CellGrid refill_positional(const CellGrid& grid) {
  if (grid.layout.pe_length() == 0) return grid;
  CellGrid out = grid;
  const auto pe = patchify(grid, concat_encoding(grid.layout.positional, grid.height(), grid.width()), 1,
                           grid.layout.pe_channels());
  out.state = overwrite_slab(grid.state, grid.layout.pe_offset(), grid.layout.pe_length(), pe, true);
  return out;
}

Tensor extract_output(const CellGrid& grid) {
  const CellLayout& lay = grid.layout;
  const std::size_t b = grid.batch, c_o = lay.output_channels, h = grid.height(), w = grid.width();
  const std::size_t item = grid.cells() * lay.cell_length();
  const SlabAddress addr{lay, grid.cols, lay.output_offset()};
  // Source offset of every output pixel, shared by forward and backward.
  std::vector<std::size_t> src(b * c_o * h * w);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t c = 0; c < c_o; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) src[((i * c_o + c) * h + y) * w + x] = i * item + addr(c, y, x);
  const auto sv = grid.state.values();
  std::vector<double> out(src.size());
  for (std::size_t k = 0; k < src.size(); ++k) out[k] = sv[src[k]];
  return make_op_result({b, c_o, h, w}, std::move(out), {grid.state}, [src = std::move(src)](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gs = ctx.input_grad(0);
    if (gs.empty()) return;
    for (std::size_t k = 0; k < src.size(); ++k) gs[src[k]] += g[k];
  });
}

Tensor extract_hidden(const CellGrid& grid) {
  return slice_lastdim(grid.state, grid.layout.hidden_offset(), grid.layout.cell_length());
}

ImageBatch output_image(const CellGrid& grid) {
  return slab_image(grid, grid.layout.output_offset(), grid.layout.output_channels);
}

ImageBatch input_image(const CellGrid& grid) {
  return slab_image(grid, grid.layout.input_offset(), grid.layout.input_channels);
}

ImageBatch positional_image(const CellGrid& grid) {
  ImageBatch all = slab_image(grid, grid.layout.pe_offset(), grid.layout.pe_channels());
  return all.range(0, std::min<std::size_t>(1, all.batch));
}

CellGrid stack_grids(const std::vector<CellGrid>& grids) {
  if (grids.empty()) throw ContractError("stack_grids: nothing to stack");
  CellGrid out = grids.front();
  std::vector<Tensor> states;
  std::size_t batch = 0;
  for (const CellGrid& g : grids) {
    if (!(g.layout == out.layout) || g.rows != out.rows || g.cols != out.cols) {
      throw DimensionError("stack_grids: grids differ in layout or resolution");
    }
    states.push_back(g.state);
    batch += g.batch;
  }
  out.batch = batch;
  out.state = states.size() == 1 ? states.front() : concat(states, 0);
  return out;
}

CellGrid grid_item(const CellGrid& grid, std::size_t n) {
  CellGrid out = grid;
  out.batch = 1;
  out.state = slice(grid.state, 0, n, n + 1);
  return out;
}

}  // namespace vitca
