#include "vitca/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vitca/errors.hpp"
#include "vitca/ops.hpp"
#include "vitca/optimizer.hpp"
#include "vitca/tensor.hpp"

namespace vitca {

namespace {

double accuracy(const std::vector<double>& x, const std::vector<int>& y, std::size_t features, std::size_t classes,
                const Tensor& w, const Tensor& b) {
  if (y.empty()) return 0.0;
  const auto wv = w.values(), bv = b.values();
  std::size_t hits = 0;
  std::vector<double> logits(classes);
  for (std::size_t s = 0; s < y.size(); ++s) {
    std::copy(bv.begin(), bv.end(), logits.begin());
    for (std::size_t f = 0; f < features; ++f) {
      const double xv = x[s * features + f];
      if (xv == 0.0) continue;
      for (std::size_t c = 0; c < classes; ++c) logits[c] += xv * wv[f * classes + c];
    }
    const auto best = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    hits += best == y[s] ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(y.size());
}

std::vector<double> flatten_images(const ImageBatch& images) { return images.values; }

}  // namespace

void ProbeConfig::validate() const {
  if (epochs == 0) throw ConfigError("probe.epochs must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("probe.lr must be > 0");
  if (batch == 0) throw ConfigError("probe.batch must be >= 1");
  if (!(weight_decay >= 0.0)) throw ConfigError("probe.weight_decay must be >= 0");
}

ProbeResult train_linear_classifier(const std::vector<double>& train_x, const std::vector<int>& train_y,
                                    const std::vector<double>& test_x, const std::vector<int>& test_y,
                                    std::size_t features, std::size_t classes, const ProbeConfig& config,
                                    std::uint64_t seed) {
  config.validate();
  if (features == 0 || classes < 2) throw ContractError("probe needs features and at least two classes");
  if (train_y.empty() || train_x.size() != train_y.size() * features) {
    throw ContractError("probe: " + std::to_string(train_y.size()) + " training labels for " +
                        std::to_string(train_x.size() / features) + " samples");
  }
  if (test_x.size() != test_y.size() * features) {
    throw ContractError("probe: " + std::to_string(test_y.size()) + " test labels for " +
                        std::to_string(test_x.size() / features) + " samples");
  }
  for (int label : train_y) {
    if (label < 0 || static_cast<std::size_t>(label) >= classes) throw IndexError("probe: label out of range");
  }

  PrecisionScope precision(Precision::f64);
  const std::size_t n = train_y.size();
  std::vector<double> mean(features, 0.0), inv_std(features, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t f = 0; f < features; ++f) mean[f] += train_x[s * features + f];
  for (double& m : mean) m /= static_cast<double>(n);
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t f = 0; f < features; ++f) {
      const double d = train_x[s * features + f] - mean[f];
      inv_std[f] += d * d;
    }
  for (double& v : inv_std) {
    const double sd = std::sqrt(v / static_cast<double>(n));
    v = sd > 1e-8 ? 1.0 / sd : 0.0;
  }
  auto standardize = [&](const std::vector<double>& x) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mean[i % features]) * inv_std[i % features];
    return out;
  };
  const auto xs = standardize(train_x);
  const auto xt = standardize(test_x);

  Tensor w = Tensor::zeros({features, classes}, true);
  Tensor b = Tensor::zeros({classes}, true);
  AdamWConfig adam_config;
  adam_config.weight_decay = config.weight_decay;
  AdamW adam(adam_config);
  const ParamList params = {{"probe.weight", &w}, {"probe.bias", &b}};
  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t begin = 0; begin < n; begin += config.batch) {
      const std::size_t end = std::min(n, begin + config.batch);
      std::vector<double> xb((end - begin) * features);
      std::vector<int> yb(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        std::copy_n(xs.begin() + static_cast<std::ptrdiff_t>(order[i] * features), features,
                    xb.begin() + static_cast<std::ptrdiff_t>((i - begin) * features));
        yb[i - begin] = train_y[order[i]];
      }
      const Tensor x = Tensor::from_values({end - begin, features}, std::move(xb));
      const Tensor loss = softmax_cross_entropy(add(matmul(x, w), b), yb);
      loss.backward();
      adam.step(params, config.lr);
      w.zero_grad();
      b.zero_grad();
    }
  }

  ProbeResult r;
  r.parameter_count = probe_parameter_count(features, classes);
  r.train_accuracy = accuracy(xs, train_y, features, classes, w, b);
  r.test_accuracy = accuracy(xt, test_y, features, classes, w, b);
  return r;
}

ProbeResult linear_probe(const Model& model, const Dataset& train, const Dataset& test, const ProbeConfig& config,
                         const EvalConfig& eval, std::uint64_t seed) {
  if (train.labels.size() != train.size() || test.labels.size() != test.size()) {
    throw ContractError("linear probe needs one label per image in both splits");
  }
  const std::size_t classes = std::max(train.classes, test.classes);
  const auto train_x = converged_hidden_states(model, train.images, eval, seed);
  const auto test_x = converged_hidden_states(model, test.images, eval, seed + 1);
  const std::size_t features = train_x.size() / train.size();
  return train_linear_classifier(train_x, train.labels, test_x, test.labels, features, classes, config, seed);
}

ProbeResult pixel_probe(const Dataset& train, const Dataset& test, const ProbeConfig& config, std::uint64_t seed) {
  if (train.labels.size() != train.size() || test.labels.size() != test.size()) {
    throw ContractError("pixel probe needs one label per image in both splits");
  }
  const std::size_t classes = std::max(train.classes, test.classes);
  return train_linear_classifier(flatten_images(train.images), train.labels, flatten_images(test.images), test.labels,
                                 train.images.image_size(), classes, config, seed);
}

}  // namespace vitca
