#pragma once

#include <cstddef>
#include <vector>

#include "vitca/cell_grid.hpp"
#include "vitca/images.hpp"
#include "vitca/rng.hpp"
#include "vitca/serialization.hpp"

namespace vitca {

// One pool slot: a single-item cell grid snapshot and its ground truth.
struct PoolEntry {
  CellGrid grid;
  ImageBatch truth;
};

class SamplePool {
 public:
  explicit SamplePool(std::size_t capacity) : capacity_(capacity) {}

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  const std::vector<PoolEntry>& entries() const { return entries_; }

  // The first b entries stacked into one batch (entries stay in the pool).
  CellGrid first_grids(std::size_t b) const;
  ImageBatch first_truths(std::size_t b) const;

  // Splits a batch into per-item entries, detached from any graph.
  void append(const CellGrid& grids, const ImageBatch& truths);
  // Shuffle, then keep the first `capacity` entries.
  void maintain(Rng& rng);

  std::vector<NamedTensor> export_state() const;
  // layout/rows/cols describe the stored grids.
  void import_state(const std::vector<NamedTensor>& tensors, const CellLayout& layout, std::size_t rows,
                    std::size_t cols);

 private:
  std::size_t capacity_;
  std::vector<PoolEntry> entries_;
};

}  // namespace vitca
