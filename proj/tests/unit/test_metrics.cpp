#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <tuple>

#include "vitca/metrics.hpp"
#include "vitca/rng.hpp"

using namespace vitca;

namespace {

double psnr_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  double se = 0;
  for (std::size_t i = 0; i < a.size(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
  return -10.0 * std::log10(se / static_cast<double>(a.size()));
}

// Direct per-window SSIM: weighted moments recomputed from scratch at every position.
double ssim_oracle(const std::vector<double>& a, const std::vector<double>& b, std::size_t c, std::size_t h,
                   std::size_t w) {
  const int win = 11;
  const double sigma = 1.5, c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  std::vector<double> g(win);
  double gs = 0;
  for (int i = 0; i < win; ++i) gs += g[i] = std::exp(-(i - 5) * (i - 5) / (2 * sigma * sigma));
  double total = 0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double* pa = a.data() + ch * h * w;
    const double* pb = b.data() + ch * h * w;
    for (std::size_t y = 0; y + win <= h; ++y) {
      for (std::size_t x = 0; x + win <= w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < win; ++dy) {
          for (int dx = 0; dx < win; ++dx) {
            const double k = g[dy] * g[dx] / (gs * gs);
            const double va = pa[(y + dy) * w + x + dx], vb = pb[(y + dy) * w + x + dx];
            ma += k * va;
            mb += k * vb;
            saa += k * va * va;
            sbb += k * vb * vb;
            sab += k * va * vb;
          }
        }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

TEST(Psnr, MatchesLoopOracle) {
  Rng rng(1);
  std::vector<double> a(300), b(300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform01();
    b[i] = std::clamp(a[i] + 0.1 * rng.normal(), 0.0, 1.0);
  }
  EXPECT_NEAR(psnr(a, b), psnr_oracle(a, b), 1e-10);
  EXPECT_TRUE(std::isinf(psnr(a, a)));
  // Uniform error of 0.1 is exactly 20 dB.
  std::vector<double> c(a);
  for (double& v : c) v += 0.1;
  EXPECT_NEAR(psnr(a, c), 20.0, 1e-9);
}

TEST(Ssim, MatchesBruteForceOracle) {
  Rng rng(2);
  for (auto [c, h, w] : {std::tuple{1u, 16u, 16u}, std::tuple{3u, 13u, 20u}}) {
    std::vector<double> a(c * h * w), b(c * h * w);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = rng.uniform01();
      b[i] = std::clamp(0.7 * a[i] + 0.3 * rng.uniform01(), 0.0, 1.0);
    }
    EXPECT_NEAR(ssim(a, b, c, h, w), ssim_oracle(a, b, c, h, w), 1e-9);
  }
}

TEST(Ssim, IdentityAndBounds) {
  Rng rng(3);
  std::vector<double> a(256), b(256);
  for (double& v : a) v = rng.uniform01();
  for (double& v : b) v = rng.uniform01();
  EXPECT_NEAR(ssim(a, a, 1, 16, 16), 1.0, 1e-12);
  const double s = ssim(a, b, 1, 16, 16);
  EXPECT_LT(s, 0.5);
  EXPECT_GE(s, -1.0);
  EXPECT_NEAR(ssim(a, b, 1, 16, 16), ssim(b, a, 1, 16, 16), 1e-12);
}

TEST(Metrics, PerImageHelpers) {
  ImageBatch a(2, 1, 12, 12, 0.2), b(2, 1, 12, 12, 0.2);
  for (std::size_t i = 0; i < 144; ++i) b.values[144 + i] = 0.3;
  EXPECT_TRUE(std::isinf(psnr_image(a, b, 0)));
  EXPECT_NEAR(psnr_image(a, b, 1), 20.0, 1e-9);
  EXPECT_NEAR(ssim_image(a, b, 0), 1.0, 1e-12);
}

}  // namespace
