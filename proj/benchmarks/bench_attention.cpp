#include <benchmark/benchmark.h>

#include <cmath>

#include "vitca/attention.hpp"
#include "vitca/neighborhood.hpp"
#include "vitca/ops.hpp"
#include "vitca/rng.hpp"

namespace {

using namespace vitca;

Tensor random_tensor(Shape shape, Rng& rng, bool grad) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal();
  return Tensor::from_values(std::move(shape), std::move(v), grad);
}

// Forward + backward of one attention call on an N-cell square grid, d = 64.
template <bool Local>
void BM_Attention(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
  const IndexTensor index = build_neighborhood_index(side, side, 3, 3);
  Rng rng(1);
  Tensor q = random_tensor({1, n, 64}, rng, true), k = random_tensor({1, n, 64}, rng, true);
  Tensor v = random_tensor({1, n, 64}, rng, true);
  const Tensor g = random_tensor({1, n, 64}, rng, false);
  for (auto _ : state) {
    const Tensor out = Local ? localized_attention(q, k, v, index) : masked_global_attention(q, k, v, index);
    sum(mul(out, g)).backward();
    q.zero_grad();
    k.zero_grad();
    v.zero_grad();
  }
  state.SetComplexityN(state.range(0));
}

BENCHMARK(BM_Attention<true>)->Name("localized_attention")->RangeMultiplier(4)->Range(256, 4096)->Complexity()
    ->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Attention<false>)->Name("masked_global_attention")->RangeMultiplier(4)->Range(256, 4096)->Complexity()
    ->Unit(benchmark::kMillisecond);

}  // namespace
