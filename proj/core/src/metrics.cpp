#include "vitca/metrics.hpp"

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "vitca/errors.hpp"

namespace vitca {

double psnr(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("psnr: images differ in size");
  if (a.empty()) throw DimensionError("psnr: empty images");
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  if (sq == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(static_cast<double>(a.size()) / sq);
}

double ssim(std::span<const double> a, std::span<const double> b, std::size_t channels, std::size_t height,
            std::size_t width, const SsimOptions& o) {
  if (a.size() != b.size() || a.size() != channels * height * width) {
    throw DimensionError("ssim: image sizes do not match the stated shape");
  }
  if (height < o.window || width < o.window) {
    throw DimensionError("ssim: " + std::to_string(height) + "x" + std::to_string(width) + " image is smaller than the " +
                         std::to_string(o.window) + "x" + std::to_string(o.window) + " window");
  }
  std::vector<double> kernel(o.window);
  double total = 0.0;
  const double centre = static_cast<double>(o.window - 1) / 2.0;
  for (std::size_t i = 0; i < o.window; ++i) {
    const double x = static_cast<double>(i) - centre;
    kernel[i] = std::exp(-x * x / (2.0 * o.sigma * o.sigma));
    total += kernel[i];
  }
  for (double& k : kernel) k /= total;

  const double c1 = (o.k1 * o.dynamic_range) * (o.k1 * o.dynamic_range);
  const double c2 = (o.k2 * o.dynamic_range) * (o.k2 * o.dynamic_range);
  const std::size_t oh = height - o.window + 1, ow = width - o.window + 1;

  // Separable "valid" filtering: rows first into [height][ow], then columns.
  auto filter = [&](const std::vector<double>& img) {
    std::vector<double> tmp(height * ow, 0.0), out(oh * ow, 0.0);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < o.window; ++k) s += kernel[k] * img[y * width + x + k];
        tmp[y * ow + x] = s;
      }
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t x = 0; x < ow; ++x) {
        double s = 0.0;
        for (std::size_t k = 0; k < o.window; ++k) s += kernel[k] * tmp[(y + k) * ow + x];
        out[y * ow + x] = s;
      }
    return out;
  };

  const std::size_t plane = height * width;
  double acc = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    std::vector<double> x(a.begin() + static_cast<std::ptrdiff_t>(c * plane),
                          a.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
    std::vector<double> y(b.begin() + static_cast<std::ptrdiff_t>(c * plane),
                          b.begin() + static_cast<std::ptrdiff_t>((c + 1) * plane));
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter(x), my = filter(y), sxx = filter(xx), syy = filter(yy), sxy = filter(xy);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    acc += sum / static_cast<double>(mx.size());
  }
  return acc / static_cast<double>(channels);
}

double psnr_image(const ImageBatch& a, const ImageBatch& b, std::size_t n) {
  if (!a.same_shape(b)) throw DimensionError("psnr: batches differ in shape");
  return psnr(a.image(n), b.image(n));
}

double ssim_image(const ImageBatch& a, const ImageBatch& b, std::size_t n, const SsimOptions& options) {
  if (!a.same_shape(b)) throw DimensionError("ssim: batches differ in shape");
  return ssim(a.image(n), b.image(n), a.channels, a.height, a.width, options);
}

}  // namespace vitca
