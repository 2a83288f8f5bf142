#include "vitca/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"

namespace vitca {

namespace {

struct Dims {
  std::size_t batch, cells, dim, heads, head_dim, window;
  double inv_temperature;
};

Dims check_inputs(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                  const AttentionOptions& options) {
  if (q.rank() != 2 && q.rank() != 3) throw DimensionError("attention: q must be [N, d] or [B, N, d]");
  if (k.shape() != q.shape() || v.shape() != q.shape()) {
    throw DimensionError("attention: q, k, v shapes differ: " + shape_str(q.shape()) + ", " + shape_str(k.shape()) +
                         ", " + shape_str(v.shape()));
  }
  Dims d{};
  d.batch = q.rank() == 3 ? q.dim(0) : 1;
  d.cells = q.dim(q.rank() - 2);
  d.dim = q.dim(q.rank() - 1);
  d.heads = options.heads;
  if (d.heads == 0 || d.dim % d.heads != 0) {
    throw DimensionError("attention: embedding dim " + std::to_string(d.dim) + " is not divisible by " +
                         std::to_string(d.heads) + " heads");
  }
  d.head_dim = d.dim / d.heads;
  if (!options.head_mask.empty() && options.head_mask.size() != d.heads) {
    throw IndexError("attention: head mask has " + std::to_string(options.head_mask.size()) + " entries for " +
                     std::to_string(d.heads) + " heads");
  }
  if (index.rows != d.cells || index.values.size() != index.rows * index.cols || index.cols == 0) {
    throw DimensionError("attention: neighbourhood table is " + std::to_string(index.rows) + "x" +
                         std::to_string(index.cols) + " for " + std::to_string(d.cells) + " cells");
  }
  for (std::int32_t e : index.values) {
    if (e < -1 || e >= static_cast<std::int32_t>(d.cells)) {
      throw IndexError("attention: neighbour index " + std::to_string(e) + " outside [-1, " +
                       std::to_string(d.cells) + ")");
    }
  }
  d.window = index.cols;
  const double temperature =
      options.temperature > 0.0 ? options.temperature : std::sqrt(static_cast<double>(d.head_dim));
  d.inv_temperature = 1.0 / temperature;
  return d;
}

bool head_masked(const AttentionOptions& options, std::size_t h) {
  return !options.head_mask.empty() && options.head_mask[h];
}

}  // namespace

Tensor localized_attention(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                           const AttentionOptions& options, Tensor* weights) {
  const Dims d = check_inputs(q, k, v, index, options);
  const auto qv = q.values();
  const auto kv = k.values();
  const auto vv = v.values();
  std::vector<double> out(qv.size(), 0.0);
  std::vector<double> a(d.batch * d.heads * d.cells * d.window, 0.0);
  std::vector<double> scores(d.window);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const std::size_t base = b * d.cells * d.dim;
    for (std::size_t h = 0; h < d.heads; ++h) {
      if (head_masked(options, h)) continue;
      const std::size_t col = h * d.head_dim;
      for (std::size_t i = 0; i < d.cells; ++i) {
        const double* qi = qv.data() + base + i * d.dim + col;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < d.window; ++j) {
          const std::int32_t n = index.values[i * d.window + j];
          double s = 0.0;
          if (n >= 0) {
            const double* kn = kv.data() + base + static_cast<std::size_t>(n) * d.dim + col;
            for (std::size_t c = 0; c < d.head_dim; ++c) s += qi[c] * kn[c];
          }
          scores[j] = s * d.inv_temperature;
          mx = std::max(mx, scores[j]);
        }
        double total = 0.0;
        for (std::size_t j = 0; j < d.window; ++j) {
          scores[j] = std::exp(scores[j] - mx);
          total += scores[j];
        }
        double* ai = a.data() + ((b * d.heads + h) * d.cells + i) * d.window;
        double* oi = out.data() + base + i * d.dim + col;
        for (std::size_t j = 0; j < d.window; ++j) {
          ai[j] = scores[j] / total;
          const std::int32_t n = index.values[i * d.window + j];
          if (n < 0) continue;
          const double* vn = vv.data() + base + static_cast<std::size_t>(n) * d.dim + col;
          for (std::size_t c = 0; c < d.head_dim; ++c) oi[c] += ai[j] * vn[c];
        }
      }
    }
  }

  const bool recording = grad_enabled() && (q.requires_grad() || k.requires_grad() || v.requires_grad());
  Tensor a_star;
  if (recording || weights) {
    NoGradGuard no_grad;
    a_star = Tensor::from_values({d.batch, d.heads, d.cells, d.window}, std::move(a));
    if (weights) *weights = a_star;
  }
  auto idx = std::make_shared<const IndexTensor>(index);
  std::vector<bool> masked(d.heads);
  for (std::size_t h = 0; h < d.heads; ++h) masked[h] = head_masked(options, h);
  return make_op_result(q.shape(), std::move(out), {q, k, v}, [d, a_star, idx, masked](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto qv = ctx.input(0).values();
    const auto kv = ctx.input(1).values();
    const auto vv = ctx.input(2).values();
    const auto av = a_star.values();
    auto gq = ctx.input_grad(0);
    auto gk = ctx.input_grad(1);
    auto gv = ctx.input_grad(2);
    std::vector<double> ds(d.window);
    for (std::size_t b = 0; b < d.batch; ++b) {
      const std::size_t base = b * d.cells * d.dim;
      for (std::size_t h = 0; h < d.heads; ++h) {
        if (masked[h]) continue;
        const std::size_t col = h * d.head_dim;
        for (std::size_t i = 0; i < d.cells; ++i) {
          const double* gi = g.data() + base + i * d.dim + col;
          const double* ai = av.data() + ((b * d.heads + h) * d.cells + i) * d.window;
          double weighted = 0.0;
          for (std::size_t j = 0; j < d.window; ++j) {
            const std::int32_t n = idx->values[i * d.window + j];
            double da = 0.0;
            if (n >= 0) {
              const std::size_t row = base + static_cast<std::size_t>(n) * d.dim + col;
              for (std::size_t c = 0; c < d.head_dim; ++c) da += gi[c] * vv[row + c];
              if (!gv.empty()) {
                for (std::size_t c = 0; c < d.head_dim; ++c) gv[row + c] += ai[j] * gi[c];
              }
            }
            ds[j] = da;
            weighted += ai[j] * da;
          }
          for (std::size_t j = 0; j < d.window; ++j) ds[j] = ai[j] * (ds[j] - weighted) * d.inv_temperature;
          const std::size_t qrow = base + i * d.dim + col;
          for (std::size_t j = 0; j < d.window; ++j) {
            const std::int32_t n = idx->values[i * d.window + j];
            if (n < 0) continue;
            const std::size_t row = base + static_cast<std::size_t>(n) * d.dim + col;
            if (!gq.empty()) {
              for (std::size_t c = 0; c < d.head_dim; ++c) gq[qrow + c] += ds[j] * kv[row + c];
            }
            if (!gk.empty()) {
              for (std::size_t c = 0; c < d.head_dim; ++c) gk[row + c] += ds[j] * qv[qrow + c];
            }
          }
        }
      }
    }
  });
}

Tensor masked_global_attention(const Tensor& q, const Tensor& k, const Tensor& v, const IndexTensor& index,
                               const AttentionOptions& options) {
  const Dims d = check_inputs(q, k, v, index, options);
  // Column `cells` is a virtual zero key/value standing in for padded
  // neighbours; a neighbour listed c times contributes log(c) to its logit.
  const std::size_t width = d.cells + 1;
  std::vector<double> counts(d.cells * width, 0.0);
  for (std::size_t i = 0; i < d.cells; ++i) {
    for (std::size_t j = 0; j < d.window; ++j) {
      const std::int32_t n = index.values[i * d.window + j];
      counts[i * width + (n < 0 ? d.cells : static_cast<std::size_t>(n))] += 1.0;
    }
  }
  std::vector<double> bias(counts.size());
  for (std::size_t e = 0; e < counts.size(); ++e) {
    bias[e] = counts[e] > 0.0 ? std::log(counts[e]) : -std::numeric_limits<double>::infinity();
  }
  const Tensor mask = Tensor::from_values({d.cells, width}, std::move(bias));
  const Tensor zero_row = Tensor::zeros({1, d.head_dim});

  const Shape flat{d.batch, d.cells, d.dim};
  const Tensor q3 = reshape(q, flat), k3 = reshape(k, flat), v3 = reshape(v, flat);
  std::vector<Tensor> items;
  for (std::size_t b = 0; b < d.batch; ++b) {
    const Tensor qb = reshape(slice(q3, 0, b, b + 1), {d.cells, d.dim});
    const Tensor kb = reshape(slice(k3, 0, b, b + 1), {d.cells, d.dim});
    const Tensor vb = reshape(slice(v3, 0, b, b + 1), {d.cells, d.dim});
    std::vector<Tensor> heads;
    for (std::size_t h = 0; h < d.heads; ++h) {
      if (head_masked(options, h)) {
        heads.push_back(Tensor::zeros({d.cells, d.head_dim}));
        continue;
      }
      const std::size_t c0 = h * d.head_dim, c1 = c0 + d.head_dim;
      const Tensor qh = slice_lastdim(qb, c0, c1);
      const Tensor kh = concat({slice_lastdim(kb, c0, c1), zero_row}, 0);
      const Tensor vh = concat({slice_lastdim(vb, c0, c1), zero_row}, 0);
      const Tensor logits = add(scale(matmul(qh, transpose(kh)), d.inv_temperature), mask);
      heads.push_back(matmul(softmax_lastdim(logits), vh));
    }
    items.push_back(reshape(concat_lastdim(heads), {1, d.cells, d.dim}));
  }
  const Tensor out = items.size() == 1 ? items.front() : concat(items, 0);
  return reshape(out, q.shape());
}

}  // namespace vitca
