#include "vitca/sample_pool.hpp"

#include <algorithm>
#include <map>
#include <string>

#include "vitca/errors.hpp"

namespace vitca {

CellGrid SamplePool::first_grids(std::size_t b) const {
  if (b > entries_.size()) throw ContractError("pool holds " + std::to_string(entries_.size()) + " < " +
                                               std::to_string(b) + " entries");
  std::vector<CellGrid> grids;
  for (std::size_t i = 0; i < b; ++i) grids.push_back(entries_[i].grid);
  NoGradGuard no_grad;
  return stack_grids(grids);
}

ImageBatch SamplePool::first_truths(std::size_t b) const {
  if (b > entries_.size()) throw ContractError("pool holds fewer than " + std::to_string(b) + " entries");
  ImageBatch out;
  for (std::size_t i = 0; i < b; ++i) out.append(entries_[i].truth);
  return out;
}

void SamplePool::append(const CellGrid& grids, const ImageBatch& truths) {
  if (truths.batch != grids.batch) throw DimensionError("pool append: grid and truth batch sizes differ");
  PrecisionScope precision(grids.state.precision());
  const std::size_t item = grids.cells() * grids.layout.cell_length();
  const auto sv = grids.state.values();
  for (std::size_t n = 0; n < grids.batch; ++n) {
    PoolEntry e;
    e.grid = grids;
    e.grid.batch = 1;
    e.grid.state = Tensor::from_values({1, grids.cells(), grids.layout.cell_length()},
                                       std::vector<double>(sv.begin() + static_cast<std::ptrdiff_t>(n * item),
                                                           sv.begin() + static_cast<std::ptrdiff_t>((n + 1) * item)));
    e.truth = truths.range(n, n + 1);
    entries_.push_back(std::move(e));
  }
}

void SamplePool::maintain(Rng& rng) {
  rng.shuffle(entries_);
  if (entries_.size() > capacity_) entries_.resize(capacity_);
}

std::vector<NamedTensor> SamplePool::export_state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const Tensor& s = entries_[i].grid.state;
    out.push_back({"pool.grid." + std::to_string(i), s.precision(), s.shape(),
                   std::vector<double>(s.values().begin(), s.values().end())});
    const ImageBatch& t = entries_[i].truth;
    out.push_back({"pool.truth." + std::to_string(i), Precision::f64, {1, t.channels, t.height, t.width}, t.values});
  }
  return out;
}

void SamplePool::import_state(const std::vector<NamedTensor>& tensors, const CellLayout& layout, std::size_t rows,
                              std::size_t cols) {
  std::map<std::size_t, PoolEntry> slots;
  for (const NamedTensor& t : tensors) {
    if (t.name.rfind("pool.grid.", 0) == 0) {
      if (t.shape.size() != 3 || t.shape[1] != rows * cols || t.shape[2] != layout.cell_length()) {
        throw DataError("pool grid '" + t.name + "' has shape " + shape_str(t.shape));
      }
      PrecisionScope precision(t.dtype);
      PoolEntry& e = slots[std::stoul(t.name.substr(10))];
      e.grid.layout = layout;
      e.grid.batch = 1;
      e.grid.rows = rows;
      e.grid.cols = cols;
      e.grid.state = Tensor::from_values(t.shape, t.values);
    } else if (t.name.rfind("pool.truth.", 0) == 0) {
      if (t.shape.size() != 4) throw DataError("pool truth '" + t.name + "' has shape " + shape_str(t.shape));
      ImageBatch img(1, t.shape[1], t.shape[2], t.shape[3]);
      img.values = t.values;
      slots[std::stoul(t.name.substr(11))].truth = std::move(img);
    }
  }
  entries_.clear();
  for (auto& [i, e] : slots) {
    if (i != entries_.size() || !e.grid.state.defined() || e.truth.empty()) {
      throw DataError("pool state is missing entry " + std::to_string(entries_.size()));
    }
    entries_.push_back(std::move(e));
  }
}

}  // namespace vitca
