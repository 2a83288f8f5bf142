#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "op_cases.hpp"
#include "vitca/dataset.hpp"
#include "vitca/errors.hpp"
#include "vitca/losses.hpp"
#include "vitca/positional.hpp"

using namespace vitca;
using namespace vitca::testing;

namespace {

int wrap(int v, int n) { return ((v % n) + n) % n; }

TEST(Neighborhood, MatchesBruteForceOrdering) {
  for (BorderMode border : {BorderMode::wrap, BorderMode::zero}) {
    const IndexTensor idx = build_neighborhood_index(4, 5, 3, 5, border);
    ASSERT_EQ(idx.rows, 20u);
    ASSERT_EQ(idx.cols, 15u);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 5; ++c) {
        std::size_t m = 0;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -2; dx <= 2; ++dx, ++m) {
            int expect;
            if (border == BorderMode::wrap) {
              expect = wrap(r + dy, 4) * 5 + wrap(c + dx, 5);
            } else {
              const bool in = r + dy >= 0 && r + dy < 4 && c + dx >= 0 && c + dx < 5;
              expect = in ? (r + dy) * 5 + c + dx : -1;
            }
            EXPECT_EQ(idx(r * 5 + c, m), expect);
          }
        }
      }
    }
  }
}

TEST(Neighborhood, RejectsEvenOrOversizedWindows) {
  EXPECT_THROW(build_neighborhood_index(4, 4, 2, 3), ContractError);
  EXPECT_THROW(build_neighborhood_index(2, 2, 3, 3), ContractError);
}

// Localized attention written directly from its definition.
std::vector<double> attention_oracle(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                                     std::size_t heads) {
  const std::size_t b = q.dim(0), n = q.dim(1), d = q.dim(2), dh = d / heads;
  std::vector<double> out(b * n * d, 0.0);
  for (std::size_t bi = 0; bi < b; ++bi) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t h = 0; h < heads; ++h) {
        std::vector<double> logits(index.cols);
        for (std::size_t m = 0; m < index.cols; ++m) {
          const int j = index(i, m);
          double s = 0;
          if (j >= 0) {
            for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
              s += q.value((bi * n + i) * d + e) * k.value((bi * n + j) * d + e);
            }
          }
          logits[m] = s / std::sqrt(static_cast<double>(dh));
        }
        double mx = -INFINITY, z = 0;
        for (double l : logits) mx = std::max(mx, l);
        for (double& l : logits) z += (l = std::exp(l - mx));
        for (std::size_t m = 0; m < index.cols; ++m) {
          const int j = index(i, m);
          if (j < 0) continue;
          for (std::size_t e = h * dh; e < (h + 1) * dh; ++e) {
            out[(bi * n + i) * d + e] += logits[m] / z * v.value((bi * n + j) * d + e);
          }
        }
      }
    }
  }
  return out;
}

TEST(Attention, LocalizedMatchesLoopOracle) {
  PrecisionScope f64(Precision::f64);
  Rng rng(11);
  for (BorderMode border : {BorderMode::wrap, BorderMode::zero}) {
    for (std::size_t heads : {1u, 4u}) {
      const IndexTensor idx = build_neighborhood_index(5, 6, 3, 3, border);
      const Tensor q = random_leaf({2, 30, 8}, rng), k = random_leaf({2, 30, 8}, rng), v = random_leaf({2, 30, 8}, rng);
      AttentionOptions o;
      o.heads = heads;
      const Tensor out = localized_attention(q, k, v, idx, o);
      const auto expect = attention_oracle(q, k, v, idx, heads);
      for (std::size_t i = 0; i < expect.size(); ++i) ASSERT_NEAR(out.value(i), expect[i], 1e-12);
    }
  }
}

TEST(Attention, WeightsAreRowStochastic) {
  PrecisionScope f64(Precision::f64);
  Rng rng(2);
  const IndexTensor idx = build_neighborhood_index(4, 4, 3, 3);
  const Tensor q = random_leaf({1, 16, 8}, rng);
  AttentionOptions o;
  o.heads = 2;
  Tensor w;
  localized_attention(q, q, q, idx, o, &w);
  ASSERT_EQ(w.shape(), (Shape{1, 2, 16, 9}));
  for (std::size_t row = 0; row < 32; ++row) {
    double s = 0;
    for (std::size_t m = 0; m < 9; ++m) s += w.value(row * 9 + m);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Attention, MaskedHeadsContributeNothing) {
  PrecisionScope f64(Precision::f64);
  Rng rng(4);
  const IndexTensor idx = build_neighborhood_index(3, 3, 3, 3);
  const Tensor q = random_leaf({1, 9, 8}, rng);
  AttentionOptions o;
  o.heads = 4;
  o.head_mask = {false, true, false, true};
  const Tensor out = localized_attention(q, q, q, idx, o);
  for (std::size_t i = 0; i < 9; ++i) {
    for (std::size_t e = 0; e < 8; ++e) {
      if ((e / 2) % 2 == 1) {
        EXPECT_EQ(out.value(i * 8 + e), 0.0);
      }
    }
  }
}

// Forward values and every parameter gradient agree between the two kernels.
void expect_backends_agree(PositionalKind pe, std::size_t heads, std::size_t side, std::uint64_t seed) {
  PrecisionScope f64(Precision::f64);
  Rng rng(seed);
  Model m;
  m.config.layout.hidden_channels = 4;
  m.config.layout.positional = pe;
  m.config.embed_dim = 8;
  m.config.heads = heads;
  m.config.mlp_dim = 16;
  m.config.border = seed % 2 ? BorderMode::zero : BorderMode::wrap;
  m.params = init_params(m.config, side * side, rng);
  for (auto& [name, t] : m.params.named()) {
    for (double& x : t->mutable_values()) x += 0.3 * rng.normal();
  }
  CellGrid grid = seed_cells(m.config.layout, 2, side, side);
  grid.state = random_leaf(grid.state.shape(), rng, -1, 1);
  const Tensor g = random_leaf({2, side * side, m.config.layout.update_length()}, rng);

  auto run = [&](AttentionBackend backend, std::vector<double>& values, std::vector<double>& grads) {
    ModelConfig c = m.config;
    c.backend = backend;
    m.params.zero_grad();
    grid.state.zero_grad();
    const Tensor out = update_deltas(grid, m.params, c);
    project(out, g).backward();
    values.assign(out.values().begin(), out.values().end());
    grads.assign(grid.state.grad().begin(), grid.state.grad().end());
    for (auto& [name, t] : m.params.named()) grads.insert(grads.end(), t->grad().begin(), t->grad().end());
  };
  std::vector<double> lv, lg, gv, gg;
  run(AttentionBackend::local, lv, lg);
  run(AttentionBackend::global, gv, gg);
  ASSERT_EQ(lg.size(), gg.size());
  for (std::size_t i = 0; i < lv.size(); ++i) ASSERT_NEAR(lv[i], gv[i], 1e-5);
  for (std::size_t i = 0; i < lg.size(); ++i) ASSERT_NEAR(lg[i], gg[i], 1e-5);
}

TEST(Attention, GlobalOracleAgreesForEveryPositionalKind) {
  std::uint64_t seed = 1;
  for (PositionalKind pe : all_positional_kinds()) {
    for (std::size_t heads : {1u, 4u}) {
      SCOPED_TRACE(std::string(positional_name(pe)) + " h=" + std::to_string(heads));
      expect_backends_agree(pe, heads, 8, seed++);
    }
  }
}

TEST(Positional, Encodings) {
  EXPECT_EQ(normalized_coordinate(0, 5), -1.0);
  EXPECT_EQ(normalized_coordinate(4, 5), 1.0);
  EXPECT_EQ(normalized_coordinate(2, 5), 0.0);
  EXPECT_EQ(positional_channels(PositionalKind::sincos5xy), 22u);
  const auto enc = concat_encoding(PositionalKind::sincos5xy, 3, 4);
  ASSERT_EQ(enc.size(), 22u * 12u);
  // Pixel (y=1, x=3): px = 1, py = 0.
  const std::size_t at = 1 * 4 + 3;
  for (int j = 0; j < 5; ++j) {
    EXPECT_NEAR(enc[(2 * j) * 12 + at], std::sin(std::numbers::pi * (1 << j)), 1e-12);
    EXPECT_NEAR(enc[(2 * j + 1) * 12 + at], std::cos(std::numbers::pi * (1 << j)), 1e-12);
    EXPECT_NEAR(enc[(10 + 2 * j) * 12 + at], 0.0, 1e-12);
  }
  EXPECT_EQ(enc[20 * 12 + at], 1.0);
  EXPECT_EQ(enc[21 * 12 + at], 0.0);
  const auto table = sinusoid_table(7, 6);
  EXPECT_NEAR(table[5 * 6 + 2], std::sin(5.0 / std::pow(10000.0, 2.0 / 6)), 1e-12);
  EXPECT_NEAR(table[5 * 6 + 3], std::cos(5.0 / std::pow(10000.0, 2.0 / 6)), 1e-12);
  EXPECT_THROW(parse_positional("fourier"), ConfigError);
}

TEST(CellGrid, SeedInjectExtractRoundTrip) {
  CellLayout lay;
  lay.hidden_channels = 3;
  lay.patch_h = 2;
  lay.patch_w = 2;
  lay.positional = PositionalKind::xy;
  EXPECT_EQ(lay.cell_length(), 4u + 4u + 8u + 3u);
  const CellGrid seed = seed_cells(lay, 2, 4, 6);
  EXPECT_EQ(seed.rows, 2u);
  EXPECT_EQ(seed.cols, 3u);
  for (std::size_t c = 0; c < seed.batch * seed.cells(); ++c) {
    const auto cell = seed.state.values().subspan(c * lay.cell_length(), lay.cell_length());
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(cell[lay.input_offset() + i], 0.0);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(cell[lay.output_offset() + i], 0.5);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(cell[lay.hidden_offset() + i], 0.0);
  }
  ImageBatch img(2, 1, 4, 6);
  for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<double>(i % 17) / 16.0;
  const CellGrid g = inject_input(seed, img);
  EXPECT_EQ(input_image(g).values, img.values);
  // Positional slab reproduces the per-pixel encoding.
  const ImageBatch pe = positional_image(g);
  const auto enc = concat_encoding(PositionalKind::xy, 4, 6);
  ASSERT_EQ(pe.values.size(), enc.size());
  for (std::size_t i = 0; i < enc.size(); ++i) EXPECT_NEAR(pe.values[i], enc[i], 1e-7);  // f32 storage
  // Patch layout: cell (0,1) holds pixels x = 2..3 of rows 0..1, row-major.
  const auto cell = g.state.values().subspan(1 * lay.cell_length(), 4);
  EXPECT_EQ(cell[0], img.at(0, 0, 0, 2));
  EXPECT_EQ(cell[1], img.at(0, 0, 0, 3));
  EXPECT_EQ(cell[2], img.at(0, 0, 1, 2));
  EXPECT_EQ(cell[3], img.at(0, 0, 1, 3));
  EXPECT_THROW(seed_cells(lay, 1, 5, 6), DimensionError);

  const CellGrid both = stack_grids({grid_item(g, 1), grid_item(g, 0)});
  EXPECT_EQ(both.batch, 2u);
  EXPECT_EQ(input_image(grid_item(both, 0)).values, std::vector<double>(img.image(1).begin(), img.image(1).end()));
}

Model zero_init_model(std::uint64_t seed, PositionalKind pe = PositionalKind::none) {
  Rng rng(seed);
  Model m;
  m.config.layout.hidden_channels = 8;
  m.config.layout.positional = pe;
  m.config.embed_dim = 16;
  m.config.heads = 2;
  m.config.mlp_dim = 32;
  m.params = init_params(m.config, 81, rng);
  return m;
}

TEST(UpdateRule, ZeroHeadMakesRolloutTheIdentity) {
  const Model m = zero_init_model(3);
  for (double w : m.params.head_w.values()) ASSERT_EQ(w, 0.0);
  const Dataset data = synth_shapes(4, 9, 9, 1);
  const CellGrid start = inject_input(seed_cells(m.config.layout, 4, 9, 9), data.images);
  Rng rng(1);
  const CellGrid out = rollout(start, m.params, m.config, 12, 0.5, rng);
  EXPECT_TRUE(std::equal(out.state.values().begin(), out.state.values().end(), start.state.values().begin()));
}

TEST(UpdateRule, OnlyOutputAndHiddenSlabsChange) {
  Model m = zero_init_model(4, PositionalKind::xy);
  Rng rng(9);
  for (double& w : m.params.head_w.mutable_values()) w = rng.normal();
  const Dataset data = synth_shapes(2, 9, 9, 2);
  const CellGrid start = inject_input(seed_cells(m.config.layout, 2, 9, 9), data.images);
  const CellGrid out = apply_update_rule(start, m.params, m.config, 1.0, rng);
  const CellLayout& lay = m.config.layout;
  for (std::size_t c = 0; c < 2 * 81; ++c) {
    const auto a = start.state.values().subspan(c * lay.cell_length(), lay.cell_length());
    const auto b = out.state.values().subspan(c * lay.cell_length(), lay.cell_length());
    EXPECT_EQ(a[0], b[0]);
    for (std::size_t i = lay.pe_offset(); i < lay.hidden_offset(); ++i) EXPECT_EQ(a[i], b[i]);
    EXPECT_NE(a[lay.output_offset()], b[lay.output_offset()]);
  }
}

TEST(UpdateRule, SigmaGatesCells) {
  Model m = zero_init_model(5);
  Rng rng(10);
  for (double& w : m.params.head_w.mutable_values()) w = rng.normal();
  const CellGrid start = seed_cells(m.config.layout, 1, 9, 9);
  const CellGrid none = apply_update_rule(start, m.params, m.config, 0.0, rng);
  EXPECT_TRUE(std::equal(none.state.values().begin(), none.state.values().end(), start.state.values().begin()));
  EXPECT_THROW(apply_update_rule(start, m.params, m.config, 1.5, rng), ContractError);

  // Explicit mask: updated cells equal the sigma = 1 result, the rest are untouched.
  std::vector<std::uint8_t> mask(81, 0);
  for (std::size_t i = 0; i < 81; i += 3) mask[i] = 1;
  const CellGrid part = apply_update_rule_masked(start, m.params, m.config, mask);
  const CellGrid all = apply_update_rule(start, m.params, m.config, 1.0, rng);
  const std::size_t l = m.config.layout.cell_length();
  for (std::size_t c = 0; c < 81; ++c) {
    const CellGrid& ref = mask[c] ? all : start;
    for (std::size_t i = 0; i < l; ++i) EXPECT_EQ(part.state.value(c * l + i), ref.state.value(c * l + i));
  }
}

TEST(UpdateRule, PerturbationSpreadsOneChebyshevRingPerStep) {
  Model m = zero_init_model(6);
  Rng rng(12);
  for (double& w : m.params.head_w.mutable_values()) w = 0.1 * rng.normal();
  const Dataset data = synth_shapes(1, 9, 9, 3);
  const CellGrid base = inject_input(seed_cells(m.config.layout, 1, 9, 9), data.images);
  CellGrid poked = base;
  poked.state = base.state.clone();
  poked.state.mutable_values()[(4 * 9 + 4) * m.config.layout.cell_length() + m.config.layout.hidden_offset()] += 0.5;
  Rng r1(0), r2(0);
  CellGrid a = base, b = poked;
  for (int t = 1; t <= 3; ++t) {
    a = apply_update_rule(a, m.params, m.config, 1.0, r1);
    b = apply_update_rule(b, m.params, m.config, 1.0, r2);
    const std::size_t l = m.config.layout.cell_length();
    for (int y = 0; y < 9; ++y) {
      for (int x = 0; x < 9; ++x) {
        bool differs = false;
        for (std::size_t i = 0; i < l; ++i) differs |= a.state.value((y * 9 + x) * l + i) != b.state.value((y * 9 + x) * l + i);
        EXPECT_EQ(differs, std::max(std::abs(y - 4), std::abs(x - 4)) <= t) << "t=" << t << " y=" << y << " x=" << x;
      }
    }
  }
}

TEST(Loss, ZeroInitEqualsClosedFormL1) {
  const Model m = zero_init_model(7);
  const Dataset data = synth_shapes(3, 9, 9, 4);
  const CellGrid start = inject_input(seed_cells(m.config.layout, 3, 9, 9), data.images);
  Rng rng(2);
  const CellGrid out = rollout(start, m.params, m.config, 8, 0.5, rng);
  const LossTerms loss = compute_loss(out, data.images);
  double l1 = 0;
  for (double v : data.images.values) l1 += std::fabs(0.5 - v);
  l1 /= 3.0 * 81.0;
  EXPECT_NEAR(loss.total.item(), l1, 1e-6);
  EXPECT_NEAR(loss.rec, l1, 1e-6);
  EXPECT_EQ(loss.output_overflow, 0.0);
  EXPECT_EQ(loss.hidden_overflow, 0.0);
}

TEST(Loss, OverflowTermsPenalizeEscapes) {
  PrecisionScope f64(Precision::f64);
  CellLayout lay;
  lay.hidden_channels = 2;
  CellGrid g = seed_cells(lay, 1, 1, 2);
  // Cells: [input, output, h0, h1].
  g.state = Tensor::from_values({1, 2, 4}, {0, 1.5, 2.0, -0.5, 0, -0.25, 0.0, -3.0});
  ImageBatch truth(1, 1, 1, 2, 0.0);
  const LossTerms loss = compute_loss(g, truth, 1.0, 2.0);
  EXPECT_NEAR(loss.rec, (1.5 + 0.25) / 2.0, 1e-12);
  EXPECT_NEAR(loss.output_overflow, (0.5 + 0.25) / 2.0, 1e-12);
  EXPECT_NEAR(loss.hidden_overflow, (1.0 + 2.0) / 2.0 / 2.0, 1e-12);
  EXPECT_NEAR(loss.total.item(), loss.rec + 2.0 * (loss.output_overflow + loss.hidden_overflow), 1e-12);
}

TEST(Rollout, CheckpointedMatchesPlainForwardAndGradients) {
  PrecisionScope f64(Precision::f64);
  Model m = zero_init_model(8);
  Rng init(13);
  for (double& w : m.params.head_w.mutable_values()) w = 0.05 * init.normal();
  const Dataset data = synth_shapes(2, 9, 9, 5);
  const CellGrid start = inject_input(seed_cells(m.config.layout, 2, 9, 9), data.images);
  auto run = [&](RolloutMode mode, std::size_t segments, std::vector<double>& grads) {
    m.params.zero_grad();
    Rng rng(21);
    RolloutOptions o;
    o.mode = mode;
    o.segments = segments;
    const CellGrid out = rollout(start, m.params, m.config, 10, 0.5, rng, o);
    compute_loss(out, data.images).total.backward();
    grads.clear();
    for (auto& [n, t] : m.params.named()) grads.insert(grads.end(), t->grad().begin(), t->grad().end());
    return std::vector<double>(out.state.values().begin(), out.state.values().end());
  };
  std::vector<double> gp, gc;
  const auto plain = run(RolloutMode::plain, 0, gp);
  for (std::size_t seg : {0u, 3u, 10u}) {
    EXPECT_EQ(run(RolloutMode::checkpointed, seg, gc), plain) << seg;
    for (std::size_t i = 0; i < gp.size(); ++i) ASSERT_NEAR(gc[i], gp[i], 1e-12 * (1 + std::fabs(gp[i])));
  }
}

TEST(FusionMitosis, ShapesAndDuplicationRule) {
  PrecisionScope f64(Precision::f64);
  CellLayout lay;
  lay.hidden_channels = 2;
  CellGrid g = seed_cells(lay, 1, 4, 6);
  Rng rng(3);
  g.state = random_leaf(g.state.shape(), rng);
  const CellGrid fused = fuse_cells(g);
  EXPECT_EQ(fused.rows, 2u);
  EXPECT_EQ(fused.cols, 3u);
  const std::size_t l = lay.cell_length();
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t i = 0; i < l; ++i) {
        double s = 0;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) s += g.state.value(((2 * r + dy) * 6 + 2 * c + dx) * l + i);
        EXPECT_NEAR(fused.state.value((r * 3 + c) * l + i), s / 4, 1e-15);
      }
    }
  }
  const CellGrid grown = mitosis(fused);
  EXPECT_EQ(grown.rows, 4u);
  EXPECT_EQ(grown.cols, 6u);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 6; ++c)
      for (std::size_t i = 0; i < l; ++i)
        EXPECT_EQ(grown.state.value((r * 6 + c) * l + i), fused.state.value(((r / 2) * 3 + c / 2) * l + i));
  EXPECT_THROW(fuse_cells(seed_cells(lay, 1, 3, 4)), DimensionError);
}

TEST(FusionMitosis, ConstantGridIsAFixedPoint) {
  CellLayout lay;
  lay.hidden_channels = 3;
  const CellGrid g = seed_cells(lay, 2, 6, 4);
  const CellGrid back = mitosis(fuse_cells(g));
  EXPECT_TRUE(std::equal(back.state.values().begin(), back.state.values().end(), g.state.values().begin()));
}

TEST(FusionMitosis, RolloutRestoresResolutionAndInput) {
  Model m = zero_init_model(9, PositionalKind::xy);
  Rng rng(14);
  for (double& w : m.params.head_w.mutable_values()) w = 0.05 * rng.normal();
  const Dataset data = synth_shapes(1, 8, 8, 6);
  const CellGrid start = inject_input(seed_cells(m.config.layout, 1, 8, 8), data.images);
  RolloutOptions o;
  o.mode = RolloutMode::fusion_mitosis;
  const CellGrid out = rollout(start, m.params, m.config, 8, 0.5, rng, o);
  EXPECT_EQ(out.rows, 8u);
  EXPECT_EQ(out.cols, 8u);
  EXPECT_EQ(input_image(out).values, input_image(start).values);
  EXPECT_EQ(positional_image(out).values, positional_image(start).values);
  EXPECT_THROW(rollout(start, m.params, m.config, 4, 0.5, rng, o), ContractError);
}

}  // namespace
