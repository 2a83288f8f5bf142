#include "vitca/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

#include "vitca/errors.hpp"

namespace vitca {

namespace {

thread_local Precision tl_precision = Precision::f32;
thread_local bool tl_grad_enabled = true;

std::atomic<std::int64_t> g_live_bytes{0};
std::atomic<std::int64_t> g_peak_bytes{0};

void track(std::int64_t delta) {
  const std::int64_t now = g_live_bytes.fetch_add(delta, std::memory_order_relaxed) + delta;
  std::int64_t peak = g_peak_bytes.load(std::memory_order_relaxed);
  while (now > peak && !g_peak_bytes.compare_exchange_weak(peak, now, std::memory_order_relaxed)) {
  }
}

void round_to(std::span<double> values, Precision p) {
  if (p != Precision::f32) return;
  for (double& v : values) v = static_cast<double>(static_cast<float>(v));
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t bytes_per_element(Precision p) { return p == Precision::f32 ? 4 : 8; }

const char* precision_name(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision default_precision() { return tl_precision; }

PrecisionScope::PrecisionScope(Precision p) : saved_(tl_precision) { tl_precision = p; }
PrecisionScope::~PrecisionScope() { tl_precision = saved_; }

bool grad_enabled() { return tl_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(tl_grad_enabled) { tl_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tl_grad_enabled = saved_; }

EnableGradGuard::EnableGradGuard() : saved_(tl_grad_enabled) { tl_grad_enabled = true; }
EnableGradGuard::~EnableGradGuard() { tl_grad_enabled = saved_; }

namespace memory {
MemoryStats stats() {
  return {g_live_bytes.load(std::memory_order_relaxed), g_peak_bytes.load(std::memory_order_relaxed)};
}
void reset_peak() { g_peak_bytes.store(g_live_bytes.load(std::memory_order_relaxed), std::memory_order_relaxed); }
}  // namespace memory

namespace detail {

struct Buffer {
  std::vector<double> values;
  std::int64_t tracked;

  Buffer(std::vector<double> v, Precision p)
      : values(std::move(v)), tracked(static_cast<std::int64_t>(values.size() * bytes_per_element(p))) {
    track(tracked);
  }
  ~Buffer() { track(-tracked); }
  Buffer(const Buffer&) = delete;
  Buffer& operator=(const Buffer&) = delete;
};

struct Node {
  std::vector<Tensor> inputs;
  BackwardFn fn;
};

struct TensorImpl {
  Shape shape;
  Precision precision = Precision::f32;
  std::shared_ptr<Buffer> data;
  std::unique_ptr<Buffer> grad;
  bool requires_grad = false;
  std::unique_ptr<Node> node;

  std::span<double> ensure_grad() {
    if (!grad) grad = std::make_unique<Buffer>(std::vector<double>(data->values.size(), 0.0), precision);
    return grad->values;
  }
};

}  // namespace detail

using detail::TensorImpl;

namespace {

std::shared_ptr<TensorImpl> new_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not hold " + std::to_string(values.size()) +
                         " values");
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->precision = default_precision();
  round_to(values, impl->precision);
  impl->shape = std::move(shape);
  impl->data = std::make_shared<detail::Buffer>(std::move(values), impl->precision);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, 0.0), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values, bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf(Shape{}, std::vector<double>{value}, requires_grad));
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data->values.size(); }

Precision Tensor::precision() const { return impl_->precision; }

std::span<const double> Tensor::values() const { return impl_->data->values; }

double Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data->values[0];
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("mutable_values() is only available on leaf tensors");
  return impl_->data->values;
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("requires_grad can only be toggled on leaf tensors");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

bool Tensor::has_grad() const { return impl_->grad != nullptr; }

std::span<const double> Tensor::grad() const {
  if (!impl_->grad) return {};
  return impl_->grad->values;
}

std::span<double> Tensor::mutable_grad() { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
  if (impl_->grad) std::fill(impl_->grad->values.begin(), impl_->grad->values.end(), 0.0);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->precision = impl_->precision;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = impl_->shape;
  impl->precision = impl_->precision;
  impl->data = std::make_shared<detail::Buffer>(impl_->data->values, impl_->precision);
  return Tensor(std::move(impl));
}

void Tensor::backward() const { vitca::backward(*this); }

std::span<const double> BackwardContext::output_values() const { return output_->data->values; }

bool BackwardContext::needs_grad(std::size_t i) const { return inputs_[i].requires_grad(); }

std::span<double> BackwardContext::input_grad(std::size_t i) {
  if (!needs_grad(i)) return {};
  touched_.push_back(i);
  return inputs_[i].impl_->ensure_grad();
}

Tensor make_op_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs, BackwardFn backward,
                      bool force_requires_grad) {
  auto impl = new_leaf(std::move(shape), std::move(values), false);
  if (!grad_enabled()) return Tensor(std::move(impl));
  const bool any = force_requires_grad ||
                   std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    impl->requires_grad = true;
    impl->node = std::make_unique<detail::Node>(detail::Node{std::move(inputs), std::move(backward)});
  }
  return Tensor(std::move(impl));
}

Tensor share_storage(const Tensor& source, Shape shape, std::vector<Tensor> inputs, BackwardFn backward) {
  if (shape_numel(shape) != source.numel()) {
    throw DimensionError("cannot view " + shape_str(source.shape()) + " as " + shape_str(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->precision = source.precision();
  impl->data = source.impl_->data;
  if (grad_enabled() && std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.requires_grad(); })) {
    impl->requires_grad = true;
    impl->node = std::make_unique<detail::Node>(detail::Node{std::move(inputs), std::move(backward)});
  }
  return Tensor(std::move(impl));
}

Tape Tape::trace(const Tensor& root) {
  Tape tape;
  if (!root.defined() || !root.impl_->node) return tape;
  std::unordered_set<const TensorImpl*> visited;
  // Iterative post-order DFS: (impl, next input to visit).
  std::vector<std::pair<std::shared_ptr<TensorImpl>, std::size_t>> stack;
  stack.emplace_back(root.impl_, 0);
  visited.insert(root.impl_.get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->node->inputs;
    if (next < inputs.size()) {
      const auto& child = inputs[next++].impl_;
      if (child->node && visited.insert(child.get()).second) stack.emplace_back(child, 0);
      continue;
    }
    tape.order_.push_back(impl);
    stack.pop_back();
  }
  return tape;
}

void Tape::run(const Tensor& root, std::span<const double> seed) const {
  if (seed.size() != root.numel()) {
    throw DimensionError("backward seed has " + std::to_string(seed.size()) + " values for root " +
                         shape_str(root.shape()));
  }
  if (!root.requires_grad()) throw ContractError("backward root is not on the tape");
  {
    auto g = root.impl_->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += seed[i];
    round_to(g, root.impl_->precision);
  }
  for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
    TensorImpl& impl = **it;
    if (!impl.grad) continue;
    BackwardContext ctx(&impl, impl.grad->values, impl.node->inputs);
    impl.node->fn(ctx);
    for (std::size_t i : ctx.touched_) {
      auto& in = impl.node->inputs[i].impl_;
      round_to(in->grad->values, in->precision);
    }
    // Consumed: nothing upstream reads this buffer again.
    impl.grad.reset();
  }
  for (const auto& impl : order_) impl->grad.reset();
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward() needs a scalar loss, got " + (loss.defined() ? shape_str(loss.shape()) : "undefined"));
  }
  const double one = 1.0;
  backward(loss, std::span<const double>(&one, 1));
}

void backward(const Tensor& root, std::span<const double> seed) {
  if (!root.requires_grad()) throw ContractError("backward root is not on the tape");
  if (root.is_leaf()) {
    Tape{}.run(root, seed);
    return;
  }
  Tape::trace(root).run(root, seed);
}

}  // namespace vitca
