#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <unistd.h>

#include "golden.hpp"
#include "vitca/corruption.hpp"
#include "vitca/errors.hpp"
#include "vitca/ops.hpp"
#include "vitca/optimizer.hpp"
#include "vitca/sample_pool.hpp"

using namespace vitca;
using namespace vitca::testing;

namespace {

TEST(Curriculum, UnlockOrderAndCounts) {
  const auto order = curriculum_order();
  ASSERT_EQ(order.size(), 9u);
  const std::size_t patches[] = {1, 2, 4};
  const double coverage[] = {0.25, 0.5, 0.75};
  for (std::size_t k = 0; k < 9; ++k) {
    EXPECT_EQ(order[k].patch_h, patches[k / 3]);
    EXPECT_EQ(order[k].patch_w, patches[k / 3]);
    EXPECT_EQ(order[k].coverage, coverage[k % 3]);
  }
  const CurriculumSchedule s(10000);
  EXPECT_EQ(s.available_count(0), 1u);
  EXPECT_EQ(s.available_count(10000), 9u);
  EXPECT_EQ(s.available(10000), order);
  // Unlock k at ceil(I * (2^k - 1) / 255), computed in integers.
  for (std::size_t k = 0; k < 9; ++k) {
    const std::size_t num = 10000 * ((std::size_t{1} << k) - 1);
    const std::size_t at = (num + 254) / 255;
    EXPECT_EQ(s.unlock_iterations()[k], at);
    if (at > 0) {
      EXPECT_EQ(s.available_count(at - 1), k);
    }
    EXPECT_EQ(s.available_count(at), k + 1);
  }
  for (std::size_t i = 1; i <= 10000; ++i) ASSERT_GE(s.available_count(i), s.available_count(i - 1));
}

TEST(MaskConfig, TextRoundTrip) {
  const MaskConfig m{4, 4, 0.75, NoiseKind::gaussian};
  EXPECT_EQ(m.to_string(), "4x4@75%:gaussian");
  EXPECT_EQ(MaskConfig::parse(m.to_string()), m);
  EXPECT_EQ(MaskConfig::parse("2x2@50%").kind, NoiseKind::dropout);
  EXPECT_THROW(MaskConfig::parse("2x2@150%"), ConfigError);
  EXPECT_THROW(MaskConfig::parse("banana"), ConfigError);
}

TEST(Masking, DropoutCorruptsExactPatchCount) {
  ImageBatch img(3, 1, 16, 16, 0.8);
  Rng rng(1);
  for (const MaskConfig& cfg : curriculum_order()) {
    const MaskedImages out = apply_mask(img, cfg, rng);
    const std::size_t tiles = (16 / cfg.patch_h) * (16 / cfg.patch_w);
    const auto want = static_cast<std::size_t>(std::llround(cfg.coverage * static_cast<double>(tiles)));
    for (std::size_t n = 0; n < 3; ++n) {
      std::size_t masked = 0;
      for (std::size_t ty = 0; ty < 16 / cfg.patch_h; ++ty) {
        for (std::size_t tx = 0; tx < 16 / cfg.patch_w; ++tx) {
          // Whole tiles are masked or untouched.
          const std::uint8_t first = out.mask[(n * 16 + ty * cfg.patch_h) * 16 + tx * cfg.patch_w];
          for (std::size_t y = 0; y < cfg.patch_h; ++y) {
            for (std::size_t x = 0; x < cfg.patch_w; ++x) {
              const std::size_t py = ty * cfg.patch_h + y, px = tx * cfg.patch_w + x;
              ASSERT_EQ(out.mask[(n * 16 + py) * 16 + px], first);
              EXPECT_EQ(out.masked.at(n, 0, py, px), first ? 0.0 : 0.8);
            }
          }
          masked += first;
        }
      }
      EXPECT_EQ(masked, want) << cfg.to_string();
    }
  }
}

TEST(Masking, GaussianStaysInRangeAndSparesUnmasked) {
  ImageBatch img(2, 3, 8, 8, 0.4);
  Rng rng(2);
  const MaskedImages out = apply_mask(img, {2, 2, 0.5, NoiseKind::gaussian}, rng);
  std::size_t changed = 0;
  for (std::size_t n = 0; n < 2; ++n) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t y = 0; y < 8; ++y) {
        for (std::size_t x = 0; x < 8; ++x) {
          const double v = out.masked.at(n, c, y, x);
          EXPECT_GE(v, 0.0);
          EXPECT_LE(v, 1.0);
          if (!out.mask[(n * 8 + y) * 8 + x]) {
            EXPECT_EQ(v, 0.4);
          }
          changed += v != 0.4;
        }
      }
    }
  }
  EXPECT_GT(changed, 2u * 3u * 32u * 9u / 10u);
}

TEST(Masking, RejectsNonDividingPatches) {
  ImageBatch img(1, 1, 6, 6);
  Rng rng(0);
  EXPECT_THROW(apply_mask(img, {4, 4, 0.5, NoiseKind::dropout}, rng), DimensionError);
}

TEST(SamplePool, CapacityAndDetachment) {
  CellLayout lay;
  lay.hidden_channels = 2;
  SamplePool pool(5);
  Rng rng(3);
  for (int round = 0; round < 4; ++round) {
    CellGrid g = seed_cells(lay, 2, 2, 2);
    g.state = Tensor::full(g.state.shape(), round, true);
    pool.append(g, ImageBatch(2, 1, 2, 2, round));
    pool.maintain(rng);
    EXPECT_LE(pool.size(), 5u);
  }
  EXPECT_EQ(pool.size(), 5u);
  for (const PoolEntry& e : pool.entries()) {
    EXPECT_FALSE(e.grid.state.requires_grad());
    EXPECT_EQ(e.grid.batch, 1u);
    EXPECT_EQ(e.grid.state.value(0), e.truth.values[0]);
  }
  const CellGrid first = pool.first_grids(3);
  EXPECT_EQ(first.batch, 3u);
  EXPECT_EQ(pool.first_truths(3).batch, 3u);
  EXPECT_THROW(pool.first_grids(6), ContractError);
}

TEST(Optimizer, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3), 5e-4, 1e-18);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3), 0.0, 1e-18);
  EXPECT_NEAR(cosine_lr(25, 100, 2.0), 1.0 + std::cos(std::numbers::pi / 4), 1e-15);
}

TEST(Optimizer, NormalizeGradientsPerParameter) {
  PrecisionScope f64(Precision::f64);
  Tensor a = Tensor::from_values({2}, {1, 1}, true), b = Tensor::from_values({1}, {5}, true), c = Tensor::zeros({3}, true);
  add(sum(mul(a, Tensor::from_values({2}, {3, 4}))), sum(scale(b, -2))).backward();
  normalize_gradients({{"a", &a}, {"b", &b}, {"c", &c}});
  EXPECT_NEAR(a.grad()[0], 3.0 / (5.0 + kGradNormGuard), 1e-15);
  EXPECT_NEAR(a.grad()[1], 4.0 / (5.0 + kGradNormGuard), 1e-15);
  EXPECT_NEAR(b.grad()[0], -2.0 / (2.0 + kGradNormGuard), 1e-15);
  EXPECT_FALSE(c.has_grad() && c.grad()[0] != 0.0);
}

TEST(Optimizer, AdamWMatchesHandComputedSteps) {
  PrecisionScope f64(Precision::f64);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg);
  Tensor w = Tensor::from_values({1}, {2.0}, true);
  double x = 2.0, m = 0, v = 0;
  const double lr = 0.01;
  for (int t = 1; t <= 3; ++t) {
    w.zero_grad();
    const double g = 0.5 * t;
    sum(scale(w, g)).backward();
    opt.step({{"w", &w}}, lr);
    x -= lr * cfg.weight_decay * x;
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, t)), vh = v / (1 - std::pow(cfg.beta2, t));
    x -= lr * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(w.value(0), x, 1e-14) << t;
  }
  EXPECT_EQ(opt.steps(), 3u);
  // A parameter with no gradient buffer is not touched, not even decayed.
  Tensor idle = Tensor::from_values({1}, {1.0}, true);
  opt.step({{"idle", &idle}}, lr);
  EXPECT_EQ(idle.value(0), 1.0);
}

TEST(Optimizer, StateRoundTrip) {
  PrecisionScope f64(Precision::f64);
  AdamW a;
  Tensor w = Tensor::from_values({2}, {1.0, -1.0}, true);
  sum(mul(w, w)).backward();
  a.step({{"w", &w}}, 0.1);
  AdamW b;
  b.import_state(a.export_state());
  EXPECT_EQ(b.steps(), 1u);
  Tensor w2 = w.clone();
  w2.set_requires_grad(true);
  for (auto* opt : {&a, &b}) {
    Tensor& t = opt == &a ? w : w2;
    t.zero_grad();
    sum(mul(t, t)).backward();
    opt->step({{"w", &t}}, 0.1);
  }
  EXPECT_EQ(w.value(0), w2.value(0));
  EXPECT_EQ(w.value(1), w2.value(1));
}

TEST(Trainer, PoolBranchFollowsTheEvenIterationGuard) {
  const GoldenRun run = run_golden();
  const TrainConfig t = golden_setup().train;
  std::size_t before = 0;
  for (const IterationMetrics& m : run.metrics) {
    EXPECT_EQ(m.from_pool, before > t.batch && m.iteration % 2 == 0) << m.iteration;
    EXPECT_LE(m.pool_size, t.pool_size);
    EXPECT_GE(m.steps, t.t_min);
    EXPECT_LE(m.steps, t.t_max);
    EXPECT_DOUBLE_EQ(m.lr, cosine_lr(m.iteration - 1, t.iterations, t.lr));
    before = m.pool_size;
  }
  EXPECT_LE(run.max_pool, t.pool_size);
  EXPECT_TRUE(std::any_of(run.metrics.begin(), run.metrics.end(), [](const auto& m) { return m.from_pool; }));
}

TEST(Trainer, GoldenTraceIsBitExact) {
  const GoldenRun run = run_golden();
  if (std::getenv("VITCA_UPDATE_GOLDEN")) {
    std::ofstream(golden_path(), std::ios::binary) << run.csv;
    GTEST_SKIP() << "rewrote " << golden_path();
  }
  ASSERT_TRUE(std::filesystem::exists(golden_path()));
  EXPECT_EQ(run.csv, read_text(golden_path()));
  // And reproducible within the process.
  EXPECT_EQ(run_golden().csv, run.csv);
}

TEST(Trainer, ResumeContinuesTheSameTrajectory) {
  const GoldenSetup s = golden_setup();
  Trainer straight(s.model, s.train, s.data, 5);
  std::vector<std::string> want;
  for (int i = 0; i < 8; ++i) want.push_back(golden_row(straight.step()));

  const auto dir = std::filesystem::temp_directory_path() / ("vitca_resume_" + std::to_string(::getpid()));
  Trainer first(s.model, s.train, s.data, 5);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(golden_row(first.step()), want[i]);
  first.save_checkpoint(dir);
  Trainer second(s.model, s.train, s.data, 999);
  second.load_checkpoint(dir);
  EXPECT_EQ(second.iteration(), 4u);
  for (int i = 4; i < 8; ++i) EXPECT_EQ(golden_row(second.step()), want[i]);
  std::filesystem::remove_all(dir);
}

TEST(Trainer, NoiseDefaultsByChannelCount) {
  GoldenSetup s = golden_setup();
  EXPECT_EQ(Trainer(s.model, s.train, s.data, 1).noise_kind(), NoiseKind::gaussian);
  s.train.noise = NoiseKind::dropout;
  EXPECT_EQ(Trainer(s.model, s.train, s.data, 1).noise_kind(), NoiseKind::dropout);
}

TEST(Trainer, RejectsInconsistentSetups) {
  GoldenSetup s = golden_setup();
  TrainConfig bad = s.train;
  bad.t_min = 40;
  EXPECT_THROW(Trainer(s.model, bad, s.data, 1), ConfigError);
  bad = s.train;
  bad.batch = 32;
  EXPECT_THROW(Trainer(s.model, bad, s.data, 1), ConfigError);
  ModelConfig m = s.model;
  m.layout.patch_h = m.layout.patch_w = 3;
  EXPECT_THROW(Trainer(m, s.train, s.data, 1), ConfigError);
  m = s.model;
  m.heads = 3;
  EXPECT_THROW(Trainer(m, s.train, s.data, 1), DimensionError);
}

}  // namespace
