#include "vitca/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "vitca/errors.hpp"
#include "vecmath.hpp"

namespace vitca {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

// Number of times b repeats inside a; b's shape must be a suffix of a's.
std::size_t broadcast_repeat(const Tensor& a, const Tensor& b, const char* op) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (bs.size() > as.size() || !std::equal(bs.rbegin(), bs.rend(), as.rbegin())) {
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(bs) + " onto " + shape_str(as));
  }
  return b.numel() == 0 ? 0 : a.numel() / b.numel();
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw DimensionError(std::string(op) + ": needs rank >= 1");
  return x.shape().back();
}

// Accumulates g (size repeat * n) into the length-n buffer, summing repeats.
void reduce_repeats(std::span<const double> g, std::span<double> out) {
  const std::size_t n = out.size();
  if (n == 0) return;
  for (std::size_t base = 0; base < g.size(); base += n) {
    const double* src = g.data() + base;
    for (std::size_t j = 0; j < n; ++j) out[j] += src[j];
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() != 2) {
    throw DimensionError("matmul: expected a[..., k] and b[k, n], got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t k = a.shape().back();
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.numel() / std::max<std::size_t>(k, 1);
  const std::size_t n = b.dim(1);
  std::vector<double> out(m * n);
  if (k == 0) {
    std::fill(out.begin(), out.end(), 0.0);
  } else {
    MutMap(out.data(), m, n).noalias() = ConstMap(a.values().data(), m, k) * ConstMap(b.values().data(), k, n);
  }
  Shape shape = a.shape();
  shape.back() = n;
  return make_op_result(std::move(shape), std::move(out), {a, b}, [m, k, n](BackwardContext& ctx) {
    ConstMap g(ctx.grad_output().data(), m, n);
    if (auto ga = ctx.input_grad(0); !ga.empty()) {
      MutMap(ga.data(), m, k).noalias() += g * ConstMap(ctx.input(1).values().data(), k, n).transpose();
    }
    if (auto gb = ctx.input_grad(1); !gb.empty()) {
      MutMap(gb.data(), k, n).noalias() += ConstMap(ctx.input(0).values().data(), m, k).transpose() * g;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  broadcast_repeat(a, b, "add");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t nb = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t base = 0; base < av.size(); base += nb)
    for (std::size_t j = 0; j < nb; ++j) out[base + j] = av[base + j] + bv[j];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    if (auto ga = ctx.input_grad(0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto gb = ctx.input_grad(1); !gb.empty()) reduce_repeats(g, gb);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  broadcast_repeat(a, b, "sub");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t nb = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t base = 0; base < av.size(); base += nb)
    for (std::size_t j = 0; j < nb; ++j) out[base + j] = av[base + j] - bv[j];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    if (auto ga = ctx.input_grad(0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto gb = ctx.input_grad(1); !gb.empty()) {
      const std::size_t n = gb.size();
      for (std::size_t base = 0; base < g.size(); base += n)
        for (std::size_t j = 0; j < n; ++j) gb[j] -= g[base + j];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  broadcast_repeat(a, b, "mul");
  const auto av = a.values();
  const auto bv = b.values();
  const std::size_t nb = bv.size();
  std::vector<double> out(av.size());
  for (std::size_t base = 0; base < av.size(); base += nb)
    for (std::size_t j = 0; j < nb; ++j) out[base + j] = av[base + j] * bv[j];
  return make_op_result(a.shape(), std::move(out), {a, b}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto av = ctx.input(0).values();
    const auto bv = ctx.input(1).values();
    const std::size_t nb = bv.size();
    if (auto ga = ctx.input_grad(0); !ga.empty()) {
      for (std::size_t base = 0; base < g.size(); base += nb)
        for (std::size_t j = 0; j < nb; ++j) ga[base + j] += g[base + j] * bv[j];
    }
    if (auto gb = ctx.input_grad(1); !gb.empty()) {
      for (std::size_t base = 0; base < g.size(); base += nb)
        for (std::size_t j = 0; j < nb; ++j) gb[j] += g[base + j] * av[base + j];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * factor;
  return make_op_result(a.shape(), std::move(out), {a}, [factor](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * factor;
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  const auto av = a.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + offset;
  return make_op_result(a.shape(), std::move(out), {a}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto ga = ctx.input_grad(0);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_op_result(Shape{}, {total}, {x}, [](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0];
    auto gx = ctx.input_grad(0);
    for (double& v : gx) v += g;
  });
}

Tensor mean(const Tensor& x) {
  const auto xv = x.values();
  if (xv.empty()) throw DimensionError("mean of an empty tensor");
  const double n = static_cast<double>(xv.size());
  const double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return make_op_result(Shape{}, {total / n}, {x}, [n](BackwardContext& ctx) {
    const double g = ctx.grad_output()[0] / n;
    auto gx = ctx.input_grad(0);
    for (double& v : gx) v += g;
  });
}

Tensor abs(const Tensor& x) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::fabs(xv[i]);
  return make_op_result(x.shape(), std::move(out), {x}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto xv = ctx.input(0).values();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double s = xv[i] > 0.0 ? 1.0 : (xv[i] < 0.0 ? -1.0 : 0.0);
      gx[i] += g[i] * s;
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw ContractError("clamp: lo > hi");
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::min(std::max(xv[i], lo), hi);
  return make_op_result(x.shape(), std::move(out), {x}, [lo, hi](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto xv = ctx.input(0).values();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      if (xv[i] >= lo && xv[i] <= hi) gx[i] += g[i];
    }
  });
}

Tensor gelu(const Tensor& x) {
  const auto xv = x.values();
  const std::size_t n = xv.size();
  std::vector<double> out(n);
  detail::vec_erf(xv.data(), M_SQRT1_2, out.data(), n);
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * xv[i] * (1.0 + out[i]);
  return make_op_result(x.shape(), std::move(out), {x}, [n](BackwardContext& ctx) {
    constexpr double kInvSqrt2Pi = 0.3989422804014327;
    const auto g = ctx.grad_output();
    const auto xv = ctx.input(0).values();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    std::vector<double> cdf(n), pdf(n);
    detail::vec_erf(xv.data(), M_SQRT1_2, cdf.data(), n);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) sq[i] = xv[i] * xv[i];
    detail::vec_exp(sq.data(), -0.5, pdf.data(), n);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * (0.5 * (1.0 + cdf[i]) + xv[i] * kInvSqrt2Pi * pdf[i]);
  });
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t d = last_dim(x, "softmax_lastdim");
  if (d == 0) throw DimensionError("softmax_lastdim: empty last dimension");
  const auto xv = x.values();
  const std::size_t rows = xv.size() / d;
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double* o = out.data() + r * d;
    const double mx = *std::max_element(in, in + d);
    double total = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (std::size_t j = 0; j < d; ++j) o[j] /= total;
  }
  return make_op_result(x.shape(), std::move(out), {x}, [d, rows](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto y = ctx.output_values();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t base = r * d;
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += y[base + j] * g[base + j];
      for (std::size_t j = 0; j < d; ++j) gx[base + j] += y[base + j] * (g[base + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = last_dim(x, "layer_norm");
  if (d == 0) throw DimensionError("layer_norm: feature dimension is zero");
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " entries");
  }
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  const std::size_t rows = xv.size() / d;
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += in[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
    var /= static_cast<double>(d);
    const double rstd = 1.0 / std::sqrt(var + eps);
    double* o = out.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) o[j] = (in[j] - mu) * rstd * gv[j] + bv[j];
  }
  return make_op_result(x.shape(), std::move(out), {x, gain, bias}, [d, rows, eps](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    const auto xv = ctx.input(0).values();
    const auto gv = ctx.input(1).values();
    auto gx = ctx.input_grad(0);
    auto gg = ctx.input_grad(1);
    auto gb = ctx.input_grad(2);
    std::vector<double> xhat(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* in = xv.data() + r * d;
      const double* go = g.data() + r * d;
      double mu = 0.0;
      for (std::size_t j = 0; j < d; ++j) mu += in[j];
      mu /= static_cast<double>(d);
      double var = 0.0;
      for (std::size_t j = 0; j < d; ++j) var += (in[j] - mu) * (in[j] - mu);
      var /= static_cast<double>(d);
      const double rstd = 1.0 / std::sqrt(var + eps);
      double mean_dxhat = 0.0;
      double mean_dxhat_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        xhat[j] = (in[j] - mu) * rstd;
        const double dxhat = go[j] * gv[j];
        mean_dxhat += dxhat;
        mean_dxhat_xhat += dxhat * xhat[j];
        if (!gg.empty()) gg[j] += go[j] * xhat[j];
        if (!gb.empty()) gb[j] += go[j];
      }
      if (gx.empty()) continue;
      mean_dxhat /= static_cast<double>(d);
      mean_dxhat_xhat /= static_cast<double>(d);
      double* gi = gx.data() + r * d;
      for (std::size_t j = 0; j < d; ++j) {
        gi[j] += rstd * (go[j] * gv[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
      }
    }
  });
}

Tensor gather_rows(const Tensor& x, const IndexTensor& index) {
  if (x.rank() != 2) throw DimensionError("gather_rows: x must be [rows, d], got " + shape_str(x.shape()));
  const std::size_t src_rows = x.dim(0);
  const std::size_t d = x.dim(1);
  if (index.values.size() != index.rows * index.cols) throw DimensionError("gather_rows: malformed index table");
  for (std::int32_t v : index.values) {
    if (v < 0 || static_cast<std::size_t>(v) >= src_rows) {
      throw IndexError("gather_rows: index " + std::to_string(v) + " outside [0, " + std::to_string(src_rows) + ")");
    }
  }
  const auto xv = x.values();
  std::vector<double> out(index.rows * index.cols * d);
  for (std::size_t e = 0; e < index.values.size(); ++e) {
    const double* src = xv.data() + static_cast<std::size_t>(index.values[e]) * d;
    std::copy(src, src + d, out.begin() + static_cast<std::ptrdiff_t>(e * d));
  }
  return make_op_result(Shape{index.rows, index.cols, d}, std::move(out), {x}, [index, d](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    for (std::size_t e = 0; e < index.values.size(); ++e) {
      double* dst = gx.data() + static_cast<std::size_t>(index.values[e]) * d;
      const double* src = g.data() + e * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    }
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& ref = parts.front().shape();
  if (axis >= ref.size()) throw DimensionError("concat: axis out of range for " + shape_str(ref));
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= ref[i];
  for (std::size_t i = axis + 1; i < ref.size(); ++i) inner *= ref[i];
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == ref.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == ref[i];
    if (!ok) throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(ref));
    widths.push_back(s[axis] * inner);
    total += s[axis];
  }
  const std::size_t row = total * inner;
  std::vector<double> out(outer * row);
  std::size_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.data() + o * widths[p], widths[p], out.data() + o * row + offset);
    }
    offset += widths[p];
  }
  Shape shape = ref;
  shape[axis] = total;
  return make_op_result(std::move(shape), std::move(out), parts, [outer, row, widths](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      if (auto gp = ctx.input_grad(p); !gp.empty()) {
        for (std::size_t o = 0; o < outer; ++o) {
          const double* src = g.data() + o * row + offset;
          double* dst = gp.data() + o * widths[p];
          for (std::size_t j = 0; j < widths[p]; ++j) dst[j] += src[j];
        }
      }
      offset += widths[p];
    }
  });
}

Tensor concat_lastdim(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_lastdim: no inputs");
  if (parts.front().rank() == 0) throw DimensionError("concat_lastdim: rank-0 input");
  return concat(parts, parts.front().rank() - 1);
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw DimensionError("slice: axis out of range for " + shape_str(s));
  if (begin > end || end > s[axis]) {
    throw IndexError("slice: [" + std::to_string(begin) + ", " + std::to_string(end) + ") outside axis of extent " +
                     std::to_string(s[axis]));
  }
  std::size_t outer = 1;
  std::size_t inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t src_row = s[axis] * inner;
  const std::size_t width = (end - begin) * inner;
  const std::size_t start = begin * inner;
  const auto xv = x.values();
  std::vector<double> out(outer * width);
  for (std::size_t o = 0; o < outer; ++o) std::copy_n(xv.data() + o * src_row + start, width, out.data() + o * width);
  Shape shape = s;
  shape[axis] = end - begin;
  return make_op_result(std::move(shape), std::move(out), {x}, [outer, src_row, width, start](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    for (std::size_t o = 0; o < outer; ++o) {
      double* dst = gx.data() + o * src_row + start;
      const double* src = g.data() + o * width;
      for (std::size_t j = 0; j < width; ++j) dst[j] += src[j];
    }
  });
}

Tensor slice_lastdim(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) throw DimensionError("slice_lastdim: rank-0 input");
  return slice(x, x.rank() - 1, begin, end);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_str(x.shape()) + " has " + std::to_string(x.numel()) +
                         " values, target " + shape_str(shape));
  }
  return share_storage(x, std::move(shape), {x}, [](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r) throw DimensionError("permute: order rank differs from " + shape_str(s));
  std::vector<bool> seen(r, false);
  for (std::size_t a : order) {
    if (a >= r || seen[a]) throw ContractError("permute: order is not a permutation");
    seen[a] = true;
  }
  std::vector<std::size_t> in_stride(r, 1);
  for (std::size_t i = r; i-- > 1;) in_stride[i - 1] = in_stride[i] * s[i];
  Shape out_shape(r);
  std::vector<std::size_t> src_stride(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = s[order[i]];
    src_stride[i] = in_stride[order[i]];
  }
  // Flat source offset for every output position.
  const std::size_t n = x.numel();
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> counter(r, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    src[i] = offset;
    for (std::size_t ax = r; ax-- > 0;) {
      if (++counter[ax] < out_shape[ax]) {
        offset += src_stride[ax];
        break;
      }
      offset -= src_stride[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  const auto xv = x.values();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[src[i]];
  return make_op_result(std::move(out_shape), std::move(out), {x}, [src = std::move(src)](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    for (std::size_t i = 0; i < src.size(); ++i) gx[src[i]] += g[i];
  });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_str(x.shape()));
  return permute(x, {1, 0});
}

Tensor avg_pool2x2(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("avg_pool2x2: expected [B, H, W, C], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % 2 || w % 2) throw DimensionError("avg_pool2x2: H and W must be even, got " + shape_str(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  const auto xv = x.values();
  std::vector<double> out(b * oh * ow * c, 0.0);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t r = 0; r < oh; ++r)
      for (std::size_t q = 0; q < ow; ++q) {
        double* o = out.data() + ((n * oh + r) * ow + q) * c;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const double* in = xv.data() + ((n * h + 2 * r + dy) * w + 2 * q + dx) * c;
            for (std::size_t k = 0; k < c; ++k) o[k] += in[k];
          }
        for (std::size_t k = 0; k < c; ++k) o[k] *= 0.25;
      }
  return make_op_result(Shape{b, oh, ow, c}, std::move(out), {x}, [b, h, w, c](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    const std::size_t oh = h / 2, ow = w / 2;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t q = 0; q < w; ++q) {
          const double* src = g.data() + ((n * oh + y / 2) * ow + q / 2) * c;
          double* dst = gx.data() + ((n * h + y) * w + q) * c;
          for (std::size_t k = 0; k < c; ++k) dst[k] += 0.25 * src[k];
        }
  });
}

Tensor duplicate2x2(const Tensor& x) {
  if (x.rank() != 4) throw DimensionError("duplicate2x2: expected [B, H, W, C], got " + shape_str(x.shape()));
  const std::size_t b = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const std::size_t oh = 2 * h, ow = 2 * w;
  const auto xv = x.values();
  std::vector<double> out(b * oh * ow * c);
  for (std::size_t n = 0; n < b; ++n)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t q = 0; q < ow; ++q) {
        const double* src = xv.data() + ((n * h + y / 2) * w + q / 2) * c;
        std::copy_n(src, c, out.data() + ((n * oh + y) * ow + q) * c);
      }
  return make_op_result(Shape{b, oh, ow, c}, std::move(out), {x}, [b, h, w, c](BackwardContext& ctx) {
    const auto g = ctx.grad_output();
    auto gx = ctx.input_grad(0);
    if (gx.empty()) return;
    const std::size_t oh = 2 * h, ow = 2 * w;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t q = 0; q < ow; ++q) {
          const double* src = g.data() + ((n * oh + y) * ow + q) * c;
          double* dst = gx.data() + ((n * h + y / 2) * w + q / 2) * c;
          for (std::size_t k = 0; k < c; ++k) dst[k] += src[k];
        }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("softmax_cross_entropy: logits must be [n, classes]");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  if (n == 0 || c == 0) throw DimensionError("softmax_cross_entropy: empty logits");
  const auto lv = logits.values();
  std::vector<int> lab(labels.begin(), labels.end());
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    if (lab[r] < 0 || static_cast<std::size_t>(lab[r]) >= c) {
      throw IndexError("softmax_cross_entropy: label " + std::to_string(lab[r]) + " outside [0, " +
                       std::to_string(c) + ")");
    }
    const double* row = lv.data() + r * c;
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    total += (std::log(z) + mx) - row[lab[r]];
  }
  return make_op_result(Shape{}, {total / static_cast<double>(n)}, {logits},
                        [n, c, lab = std::move(lab)](BackwardContext& ctx) {
                          auto gl = ctx.input_grad(0);
                          if (gl.empty()) return;
                          const double g = ctx.grad_output()[0] / static_cast<double>(n);
                          const auto lv = ctx.input(0).values();
                          for (std::size_t r = 0; r < n; ++r) {
                            const double* row = lv.data() + r * c;
                            const double mx = *std::max_element(row, row + c);
                            double z = 0.0;
                            for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
                            for (std::size_t j = 0; j < c; ++j) {
                              const double p = std::exp(row[j] - mx) / z;
                              gl[r * c + j] += g * (p - (static_cast<int>(j) == lab[r] ? 1.0 : 0.0));
                            }
                          }
                        });
}

}  // namespace vitca
