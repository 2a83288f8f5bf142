#include <benchmark/benchmark.h>

#include "vitca/ops.hpp"
#include "vitca/rng.hpp"

namespace {

using namespace vitca;

Tensor random_tensor(Shape shape, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v), grad);
}

// Token-sized operands: 8 grids of 16x16 cells, d = 64, MLP width 256.
void BM_Matmul(benchmark::State& state) {
  Rng rng(1);
  const Tensor a = random_tensor({2048, 64}, rng), b = random_tensor({64, 256}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
}
BENCHMARK(BM_Matmul)->Unit(benchmark::kMicrosecond);

void BM_GeluForwardBackward(benchmark::State& state) {
  Rng rng(2);
  Tensor x = random_tensor({2048, 256}, rng, true);
  for (auto _ : state) {
    sum(gelu(x)).backward();
    x.zero_grad();
  }
}
BENCHMARK(BM_GeluForwardBackward)->Unit(benchmark::kMicrosecond);

void BM_LayerNormForwardBackward(benchmark::State& state) {
  Rng rng(3);
  Tensor x = random_tensor({2048, 64}, rng, true);
  Tensor gain = Tensor::full({64}, 1.0, true), bias = Tensor::zeros({64}, true);
  for (auto _ : state) {
    sum(layer_norm(x, gain, bias)).backward();
    x.zero_grad();
    gain.zero_grad();
    bias.zero_grad();
  }
}
BENCHMARK(BM_LayerNormForwardBackward)->Unit(benchmark::kMicrosecond);

void BM_SoftmaxLastdim(benchmark::State& state) {
  Rng rng(4);
  const Tensor x = random_tensor({2048 * 4, 9}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_lastdim(x));
}
BENCHMARK(BM_SoftmaxLastdim)->Unit(benchmark::kMicrosecond);

}  // namespace
