#include "vitca/update_rule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"
#include "vitca/positional.hpp"

namespace vitca {

namespace {

Tensor he_normal(Shape shape, std::size_t fan_in, Rng& rng) {
  const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) v = rng.normal() * stddev;
  return Tensor::from_values(std::move(shape), std::move(values), true);
}

Tensor zeros_param(Shape shape) { return Tensor::zeros(std::move(shape), true); }
Tensor ones_param(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace

double ModelConfig::attention_temperature() const {
  const double dim = attention_scale == AttentionScale::full ? static_cast<double>(embed_dim)
                                                             : static_cast<double>(head_dim());
  return std::sqrt(dim);
}

void ModelConfig::validate() const {
  if (embed_dim == 0) throw ContractError("model.embed_dim must be positive");
  if (heads == 0) throw ContractError("model.heads must be positive");
  if (embed_dim % heads != 0) {
    throw DimensionError("model.embed_dim (" + std::to_string(embed_dim) + ") must be divisible by model.heads (" +
                         std::to_string(heads) + ")");
  }
  if (mlp_dim == 0) throw ContractError("model.mlp_dim must be positive");
  if (depth == 0) throw ContractError("model.depth must be at least 1");
  if (window_h % 2 == 0 || window_w % 2 == 0) throw ContractError("model window extents must be odd");
  if (layout.input_channels == 0 || layout.output_channels == 0) {
    throw ContractError("model input and output channel counts must be positive");
  }
  if (layout.patch_h == 0 || layout.patch_w == 0) throw ContractError("model patch extents must be positive");
}

std::vector<std::pair<std::string, Tensor*>> UpdateRuleParams::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  out.emplace_back("embed.weight", &embed_w);
  out.emplace_back("embed.bias", &embed_b);
  if (pos_table.defined()) out.emplace_back("pos.table", &pos_table);
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    EncoderBlockParams& b = blocks[i];
    const std::string p = "block" + std::to_string(i) + ".";
    out.emplace_back(p + "ln1.gain", &b.ln1_gain);
    out.emplace_back(p + "ln1.bias", &b.ln1_bias);
    out.emplace_back(p + "attn.w_q", &b.w_q);
    out.emplace_back(p + "attn.w_k", &b.w_k);
    out.emplace_back(p + "attn.w_v", &b.w_v);
    out.emplace_back(p + "attn.w_o", &b.w_o);
    out.emplace_back(p + "attn.b_o", &b.b_o);
    out.emplace_back(p + "ln2.gain", &b.ln2_gain);
    out.emplace_back(p + "ln2.bias", &b.ln2_bias);
    out.emplace_back(p + "mlp.w1", &b.mlp_w1);
    out.emplace_back(p + "mlp.b1", &b.mlp_b1);
    out.emplace_back(p + "mlp.w2", &b.mlp_w2);
    out.emplace_back(p + "mlp.b2", &b.mlp_b2);
  }
  out.emplace_back("head.ln.gain", &ln_head_gain);
  out.emplace_back("head.ln.bias", &ln_head_bias);
  out.emplace_back("head.weight", &head_w);
  out.emplace_back("head.bias", &head_b);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> UpdateRuleParams::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<UpdateRuleParams*>(this)->named()) out.emplace_back(name, t);
  return out;
}

std::size_t UpdateRuleParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t->numel();
  return n;
}

void UpdateRuleParams::zero_grad() {
  for (auto& [name, t] : named()) t->zero_grad();
}

UpdateRuleParams UpdateRuleParams::clone() const {
  UpdateRuleParams copy = *this;
  for (auto& [name, t] : copy.named()) {
    Tensor fresh = t->clone();
    fresh.set_requires_grad(true);
    *t = fresh;
  }
  return copy;
}

UpdateRuleParams init_params(const ModelConfig& config, std::size_t cells, Rng& rng) {
  config.validate();
  const std::size_t l = config.layout.cell_length();
  const std::size_t d = config.embed_dim;
  const std::size_t m = config.mlp_dim;
  const std::size_t l_out = config.layout.update_length();
  UpdateRuleParams p;
  p.embed_w = he_normal({l, d}, l, rng);
  p.embed_b = zeros_param({d});
  if (config.layout.positional == PositionalKind::learned) p.pos_table = he_normal({cells, d}, d, rng);
  for (std::size_t i = 0; i < config.depth; ++i) {
    EncoderBlockParams b;
    b.ln1_gain = ones_param({d});
    b.ln1_bias = zeros_param({d});
    b.w_q = he_normal({d, d}, d, rng);
    b.w_k = he_normal({d, d}, d, rng);
    b.w_v = he_normal({d, d}, d, rng);
    b.w_o = he_normal({d, d}, d, rng);
    b.b_o = zeros_param({d});
    b.ln2_gain = ones_param({d});
    b.ln2_bias = zeros_param({d});
    b.mlp_w1 = he_normal({d, m}, d, rng);
    b.mlp_b1 = zeros_param({m});
    b.mlp_w2 = he_normal({m, d}, m, rng);
    b.mlp_b2 = zeros_param({d});
    p.blocks.push_back(std::move(b));
  }
  p.ln_head_gain = ones_param({d});
  p.ln_head_bias = zeros_param({d});
  p.head_w = zeros_param({d, l_out});
  p.head_b = zeros_param({l_out});
  return p;
}

Tensor tokenize(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config) {
  const std::size_t l = grid.layout.cell_length();
  if (params.embed_w.dim(0) != l) {
    throw DimensionError("embedding expects cells of length " + std::to_string(params.embed_w.dim(0)) +
                         ", grid cells have " + std::to_string(l));
  }
  Tensor x = linear(grid.state, params.embed_w, params.embed_b);
  const std::size_t n = grid.cells();
  const std::size_t d = params.embed_w.dim(1);
  switch (config.layout.positional) {
    case PositionalKind::handcrafted:
      x = add(x, Tensor::from_values({n, d}, sinusoid_table(n, d)));
      break;
    case PositionalKind::learned:
      if (!params.pos_table.defined() || params.pos_table.dim(0) != n) {
        throw ContractError("learned positional table covers " +
                            std::to_string(params.pos_table.defined() ? params.pos_table.dim(0) : 0) +
                            " cells but the grid has " + std::to_string(n));
      }
      x = add(x, params.pos_table);
      break;
    default:
      break;
  }
  return x;
}

Tensor mhsa_localized(const Tensor& x, const EncoderBlockParams& block, const IndexTensor& index,
                      const ModelConfig& config, const StepOptions& options) {
  AttentionOptions attn;
  attn.heads = config.heads;
  attn.temperature = config.attention_temperature();
  attn.head_mask = options.head_mask;
  const Tensor q = matmul(x, block.w_q);
  const Tensor k = matmul(x, block.w_k);
  const Tensor v = matmul(x, block.w_v);
  const Tensor heads = config.backend == AttentionBackend::local
                           ? localized_attention(q, k, v, index, attn, options.attention_weights)
                           : masked_global_attention(q, k, v, index, attn);
  return linear(heads, block.w_o, block.b_o);
}

Tensor update_deltas(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                     const StepOptions& options) {
  const IndexTensor index = build_neighborhood_index(grid.rows, grid.cols, config.window_h, config.window_w,
                                                     config.border);
  Tensor x = tokenize(grid, params, config);
  StepOptions later = options;
  later.attention_weights = nullptr;
  for (std::size_t i = 0; i < params.blocks.size(); ++i) {
    const EncoderBlockParams& b = params.blocks[i];
    x = add(x, mhsa_localized(layer_norm(x, b.ln1_gain, b.ln1_bias), b, index, config, i == 0 ? options : later));
    const Tensor hidden = gelu(linear(layer_norm(x, b.ln2_gain, b.ln2_bias), b.mlp_w1, b.mlp_b1));
    x = add(x, linear(hidden, b.mlp_w2, b.mlp_b2));
  }
  return linear(layer_norm(x, params.ln_head_gain, params.ln_head_bias), params.head_w, params.head_b);
}

CellGrid apply_cell_updates(const CellGrid& grid, const Tensor& delta, std::span<const std::uint8_t> mask) {
  const CellLayout& lay = grid.layout;
  const std::size_t cells = grid.batch * grid.cells();
  const std::size_t l = lay.cell_length();
  const std::size_t u = lay.update_length();
  if (mask.size() != cells) {
    throw DimensionError("update mask has " + std::to_string(mask.size()) + " entries for " + std::to_string(cells) +
                         " cells");
  }
  if (delta.numel() != cells * u) {
    throw DimensionError("update deltas " + shape_str(delta.shape()) + " do not cover " + std::to_string(cells) +
                         " cells of " + std::to_string(u) + " entries");
  }
  const std::size_t out_off = lay.output_offset(), out_len = lay.output_length(), hid_off = lay.hidden_offset();
  // Position inside a cell written by delta entry k.
  std::vector<std::size_t> target(u);
  for (std::size_t k = 0; k < u; ++k) target[k] = k < out_len ? out_off + k : hid_off + (k - out_len);

  const auto sv = grid.state.values();
  const auto dv = delta.values();
  std::vector<double> out(sv.begin(), sv.end());
  for (std::size_t c = 0; c < cells; ++c) {
    if (!mask[c]) continue;
    for (std::size_t k = 0; k < u; ++k) out[c * l + target[k]] += dv[c * u + k];
  }
  std::vector<std::uint8_t> keep(mask.begin(), mask.end());
  CellGrid next = grid;
  next.state = make_op_result(grid.state.shape(), std::move(out), {grid.state, delta},
                              [keep = std::move(keep), target = std::move(target), l, u](BackwardContext& ctx) {
                                const auto g = ctx.grad_output();
                                if (auto gs = ctx.input_grad(0); !gs.empty()) {
                                  for (std::size_t i = 0; i < g.size(); ++i) gs[i] += g[i];
                                }
                                if (auto gd = ctx.input_grad(1); !gd.empty()) {
                                  for (std::size_t c = 0; c < keep.size(); ++c) {
                                    if (!keep[c]) continue;
                                    for (std::size_t k = 0; k < u; ++k) gd[c * u + k] += g[c * l + target[k]];
                                  }
                                }
                              });
  return next;
}

CellGrid apply_update_rule_masked(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                                  std::span<const std::uint8_t> mask, const StepOptions& options) {
  if (std::none_of(mask.begin(), mask.end(), [](std::uint8_t m) { return m != 0; }) &&
      options.attention_weights == nullptr) {
    if (mask.size() != grid.batch * grid.cells()) throw DimensionError("update mask does not cover the grid");
    return grid;
  }
  return apply_cell_updates(grid, update_deltas(grid, params, config, options), mask);
}

CellGrid apply_update_rule(const CellGrid& grid, const UpdateRuleParams& params, const ModelConfig& config,
                           double sigma, Rng& rng, const StepOptions& options) {
  if (!(sigma >= 0.0 && sigma <= 1.0)) {
    throw ContractError("update rate sigma=" + std::to_string(sigma) + " outside [0, 1]");
  }
  std::vector<std::uint8_t> mask(grid.batch * grid.cells());
  for (auto& m : mask) m = rng.bernoulli(sigma) ? 1 : 0;
  return apply_update_rule_masked(grid, params, config, mask, options);
}

}  // namespace vitca
