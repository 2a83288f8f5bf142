#include "vitca/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "vitca/errors.hpp"

namespace vitca {

void normalize_gradients(const ParamList& params) {
  for (const auto& [name, t] : params) {
    if (!t->has_grad()) continue;
    auto g = t->mutable_grad();
    double sq = 0.0;
    for (double v : g) sq += v * v;
    const double inv = 1.0 / (std::sqrt(sq) + kGradNormGuard);
    for (double& v : g) v *= inv;
    if (t->precision() == Precision::f32) {
      for (double& v : g) v = static_cast<float>(v);
    }
  }
}

double cosine_lr(std::size_t i, std::size_t total, double eta) {
  if (total == 0) return eta;
  if (i > total) throw ContractError("cosine_lr: iteration past the schedule end");
  return eta * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(total)));
}

void AdamW::step(const ParamList& params, double lr) {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double bias1 = 1.0 - std::pow(config_.beta1, t);
  const double bias2 = 1.0 - std::pow(config_.beta2, t);
  for (const auto& [name, p] : params) {
    if (!p->has_grad()) continue;
    const auto g = p->grad();
    auto values = p->mutable_values();
    Moments& mo = moments_[name];
    if (mo.m.empty()) {
      mo.m.assign(values.size(), 0.0);
      mo.v.assign(values.size(), 0.0);
    }
    if (mo.m.size() != values.size()) throw DimensionError("optimizer state for '" + name + "' has the wrong size");
    const bool round = p->precision() == Precision::f32;
    for (std::size_t i = 0; i < values.size(); ++i) {
      double x = values[i] * (1.0 - lr * config_.weight_decay);
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g[i];
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = mo.m[i] / bias1;
      const double v_hat = mo.v[i] / bias2;
      x -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
      values[i] = round ? static_cast<double>(static_cast<float>(x)) : x;
    }
  }
}

std::vector<NamedTensor> AdamW::export_state() const {
  std::vector<NamedTensor> out;
  out.push_back({"adam.step", Precision::f64, {1}, {static_cast<double>(steps_)}});
  for (const auto& [name, mo] : moments_) {
    out.push_back({"adam.m." + name, Precision::f64, {mo.m.size()}, mo.m});
    out.push_back({"adam.v." + name, Precision::f64, {mo.v.size()}, mo.v});
  }
  return out;
}

void AdamW::import_state(const std::vector<NamedTensor>& tensors) {
  moments_.clear();
  steps_ = 0;
  for (const NamedTensor& t : tensors) {
    if (t.name == "adam.step") {
      steps_ = static_cast<std::uint64_t>(t.values.at(0));
    } else if (t.name.rfind("adam.m.", 0) == 0) {
      moments_[t.name.substr(7)].m = t.values;
    } else if (t.name.rfind("adam.v.", 0) == 0) {
      moments_[t.name.substr(7)].v = t.values;
    }
  }
  for (const auto& [name, mo] : moments_) {
    if (mo.m.size() != mo.v.size()) throw DataError("optimizer moments for '" + name + "' are incomplete");
  }
}

}  // namespace vitca
