#include "vitca/pca.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "vitca/errors.hpp"

namespace vitca {

namespace {
// Eigenvalues below this fraction of the largest count as zero.
constexpr double kRankTolerance = 1e-10;
}

PcaResult pca(const std::vector<double>& data, std::size_t samples, std::size_t dims, std::size_t components) {
  if (samples < 2) throw ContractError("pca needs at least 2 samples, got " + std::to_string(samples));
  if (dims == 0 || components == 0) throw ContractError("pca needs positive dims and components");
  if (data.size() != samples * dims) throw DimensionError("pca: data size does not match samples x dims");

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Mat x = Eigen::Map<const Mat>(data.data(), static_cast<Eigen::Index>(samples), static_cast<Eigen::Index>(dims));
  x.rowwise() -= x.colwise().mean();
  const double denom = static_cast<double>(samples - 1);

  // Work in whichever of the sample or feature space is smaller.
  const bool gram = samples <= dims;
  const Eigen::MatrixXd m = gram ? Eigen::MatrixXd(x * x.transpose()) : Eigen::MatrixXd(x.transpose() * x);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");
  const Eigen::VectorXd evals = solver.eigenvalues();  // ascending
  const Eigen::MatrixXd evecs = solver.eigenvectors();

  PcaResult r;
  r.samples = samples;
  r.dims = dims;
  r.total_variance = x.squaredNorm() / denom;
  const auto n = static_cast<std::size_t>(evals.size());
  const double top = std::max(evals(evals.size() - 1), 0.0);
  std::size_t rank = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (top > 0 && evals(static_cast<Eigen::Index>(i)) > kRankTolerance * top) ++rank;
  }
  r.components = std::min(components, rank);
  r.degenerate = r.components < components;

  r.axes.assign(r.components * dims, 0.0);
  r.projections.assign(samples * r.components, 0.0);
  for (std::size_t k = 0; k < r.components; ++k) {
    const auto col = static_cast<Eigen::Index>(n - 1 - k);
    const double lambda = evals(col);
    Eigen::VectorXd axis, proj;
    if (gram) {
      proj = evecs.col(col) * std::sqrt(lambda);
      axis = x.transpose() * evecs.col(col) / std::sqrt(lambda);
    } else {
      axis = evecs.col(col);
      proj = x * axis;
    }
    Eigen::Index arg = 0;
    proj.cwiseAbs().maxCoeff(&arg);
    if (proj(arg) < 0) {
      proj = -proj;
      axis = -axis;
    }
    r.variances.push_back(lambda / denom);
    r.explained.push_back(r.total_variance > 0 ? lambda / denom / r.total_variance : 0.0);
    for (std::size_t j = 0; j < dims; ++j) r.axes[k * dims + j] = axis(static_cast<Eigen::Index>(j));
    for (std::size_t s = 0; s < samples; ++s) r.projections[s * r.components + k] = proj(static_cast<Eigen::Index>(s));
  }
  return r;
}

void write_pca_csv(const std::filesystem::path& path, const PcaResult& result, const std::vector<int>& labels) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw DataError("cannot open " + path.string() + " for writing");
  f << "sample";
  for (std::size_t k = 0; k < result.components; ++k) f << ",pc" << k + 1;
  if (!labels.empty()) f << ",label";
  f << '\n';
  char buf[32];
  for (std::size_t s = 0; s < result.samples; ++s) {
    f << s;
    for (std::size_t k = 0; k < result.components; ++k) {
      std::snprintf(buf, sizeof buf, "%.9g", result.projections[s * result.components + k]);
      f << ',' << buf;
    }
    if (!labels.empty()) f << ',' << labels.at(s);
    f << '\n';
  }
}

}  // namespace vitca
