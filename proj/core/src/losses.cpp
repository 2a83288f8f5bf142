#include "vitca/losses.hpp"

#include <string>

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"

namespace vitca {

LossTerms compute_loss(const CellGrid& grid, const ImageBatch& truth, double alpha, double beta) {
  const CellLayout& lay = grid.layout;
  if (truth.batch != grid.batch || truth.channels != lay.output_channels || truth.height != grid.height() ||
      truth.width != grid.width()) {
    throw DimensionError("ground truth [" + std::to_string(truth.batch) + "x" + std::to_string(truth.channels) + "x" +
                         std::to_string(truth.height) + "x" + std::to_string(truth.width) +
                         "] does not match the grid's output slab");
  }
  const double norm = 1.0 / static_cast<double>(grid.batch * grid.height() * grid.width());
  const double inv_co = 1.0 / static_cast<double>(lay.output_channels);

  const Tensor z_o = extract_output(grid);
  const Tensor x = Tensor::from_values(z_o.shape(), truth.values);
  const Tensor rec = scale(sum(abs(sub(z_o, x))), inv_co * norm);
  const Tensor out_over = scale(sum(abs(sub(z_o, clamp(z_o, 0.0, 1.0)))), inv_co * norm);
  Tensor hid_over = Tensor::scalar(0.0);
  if (lay.hidden_channels > 0) {
    const Tensor z_h = extract_hidden(grid);
    hid_over = scale(sum(abs(sub(z_h, clamp(z_h, -1.0, 1.0)))), norm / static_cast<double>(lay.hidden_channels));
  }
  LossTerms terms;
  terms.total = add(scale(rec, alpha), scale(add(out_over, hid_over), beta));
  terms.rec = rec.item();
  terms.output_overflow = out_over.item();
  terms.hidden_overflow = hid_over.item();
  return terms;
}

}  // namespace vitca
