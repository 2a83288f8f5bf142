#pragma once

#include <cstddef>
#include <span>

#include "vitca/images.hpp"

namespace vitca {

// 10 * log10(1 / MSE) for images in [0, 1]; +infinity when identical.
double psnr(std::span<const double> a, std::span<const double> b);

struct SsimOptions {
  std::size_t window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;
};

// Mean SSIM over every fully contained window position (Gaussian-weighted),
// averaged over channels. Single image: [channels][height][width].
double ssim(std::span<const double> a, std::span<const double> b, std::size_t channels, std::size_t height,
            std::size_t width, const SsimOptions& options = {});

// Per-image metrics for image n of two equally shaped batches.
double psnr_image(const ImageBatch& a, const ImageBatch& b, std::size_t n);
double ssim_image(const ImageBatch& a, const ImageBatch& b, std::size_t n, const SsimOptions& options = {});

}  // namespace vitca
