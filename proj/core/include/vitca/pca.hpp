#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace vitca {

struct PcaResult {
  std::size_t samples = 0;
  std::size_t dims = 0;
  // Components actually returned; fewer than requested when the centred data
  // has lower rank (then `degenerate` is set).
  std::size_t components = 0;
  bool degenerate = false;
  double total_variance = 0.0;           // trace of the sample covariance
  std::vector<double> variances;         // per component, descending
  std::vector<double> explained;         // variances / total_variance
  std::vector<double> axes;              // components x dims, unit rows
  std::vector<double> projections;       // samples x components
};

// Mean-centred PCA of `samples` rows of length `dims` (row-major). Each axis
// is signed so that its largest-magnitude projection is positive. Needs at
// least two samples.
PcaResult pca(const std::vector<double>& data, std::size_t samples, std::size_t dims, std::size_t components);

// sample, pc1, pc2, ... plus an optional label column.
void write_pca_csv(const std::filesystem::path& path, const PcaResult& result, const std::vector<int>& labels = {});

}  // namespace vitca
