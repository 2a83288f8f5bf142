#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vitca {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Storage precision of a tensor. Arithmetic always runs in double; f32
// tensors have every stored value (and gradient) rounded through float, so
// round-off behaves like single-precision storage while reductions keep
// double accumulators.
enum class Precision : std::uint8_t { f32 = 0, f64 = 1 };

std::size_t bytes_per_element(Precision p);
const char* precision_name(Precision p);

// Precision given to tensors created on this thread.
Precision default_precision();

class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p);
  ~PrecisionScope();
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision saved_;
};

bool grad_enabled();

// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// Re-enables graph construction inside an enclosing NoGradGuard.
class EnableGradGuard {
 public:
  EnableGradGuard();
  ~EnableGradGuard();
  EnableGradGuard(const EnableGradGuard&) = delete;
  EnableGradGuard& operator=(const EnableGradGuard&) = delete;

 private:
  bool saved_;
};

// Engine-wide accounting of live value and gradient buffers. Bytes are
// counted at storage precision, so an f32 tensor of n values counts 4n.
struct MemoryStats {
  std::int64_t live_bytes = 0;
  std::int64_t peak_bytes = 0;
};

namespace memory {
MemoryStats stats();
// Sets the peak to the current live byte count.
void reset_peak();
}  // namespace memory

// Row-major integer table, e.g. the neighbourhood index (N x M).
struct IndexTensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::int32_t> values;

  std::int32_t operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
  bool operator==(const IndexTensor&) const = default;
};

namespace detail {
struct TensorImpl;
}

class Tensor;
class BackwardContext;

using BackwardFn = std::function<void(BackwardContext&)>;

// Dense row-major array. Values are immutable once created except through
// mutable_values() on leaves; ops build a graph node when grad mode is on
// and any input requires a gradient.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  Precision precision() const;

  std::span<const double> values() const;
  double value(std::size_t flat_index) const { return values()[flat_index]; }
  double item() const;

  // Writable view of a leaf's values (optimizers, finite differences).
  std::span<double> mutable_values();

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Leaf sharing this tensor's values, cut from the graph.
  Tensor detach() const;
  // Leaf holding a private copy of the values.
  Tensor clone() const;

  // Scalar losses only.
  void backward() const;

  bool same_node(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;

  friend class BackwardContext;
  friend class Tape;
  friend struct detail::TensorImpl;
  friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>, BackwardFn, bool);
  friend Tensor share_storage(const Tensor&, Shape, std::vector<Tensor>, BackwardFn);
};

// Handed to an op's backward closure while the tape is replayed.
class BackwardContext {
 public:
  std::span<const double> grad_output() const { return grad_output_; }
  std::span<const double> output_values() const;
  const Tensor& input(std::size_t i) const { return inputs_[i]; }
  std::size_t input_count() const { return inputs_.size(); }
  bool needs_grad(std::size_t i) const;
  // Accumulation buffer for input i; empty when that input needs no gradient.
  std::span<double> input_grad(std::size_t i);

 private:
  BackwardContext(const detail::TensorImpl* output, std::span<const double> grad_output,
                  const std::vector<Tensor>& inputs)
      : output_(output), grad_output_(grad_output), inputs_(inputs) {}

  const detail::TensorImpl* output_;
  std::span<const double> grad_output_;
  const std::vector<Tensor>& inputs_;
  std::vector<std::size_t> touched_;

  friend class Tape;
};

// Builds the output tensor of an operation. Values are rounded to the
// current storage precision. A graph node is recorded when grad mode is on
// and an input requires a gradient, or when force_requires_grad is set (ops
// whose parameters are reached only through the closure).
Tensor make_op_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                      BackwardFn backward, bool force_requires_grad = false);

// Output that aliases the first input's value buffer under a new shape.
Tensor share_storage(const Tensor& source, Shape shape, std::vector<Tensor> inputs,
                     BackwardFn backward);

// Topologically ordered record of the operations reachable from a root.
class Tape {
 public:
  static Tape trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }

  // Seeds the root gradient and replays every node in reverse order once.
  // Leaf gradients accumulate; intermediate gradient buffers are released.
  void run(const Tensor& root, std::span<const double> seed) const;

 private:
  std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

void backward(const Tensor& loss);
void backward(const Tensor& root, std::span<const double> seed);

}  // namespace vitca
