#include <benchmark/benchmark.h>

#include "slicerec/graph.hpp"
#include "slicerec/losses.hpp"
#include "slicerec/nn.hpp"
#include "slicerec/rng.hpp"
#include "slicerec/window.hpp"

using slicerec::Rng;
using slicerec::ad::Graph;
using slicerec::ad::Tensor;
using slicerec::ad::Value;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = 0.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int n = 4, c = 8, hw = static_cast<int>(state.range(0));
  Rng rng(1);
  const Tensor x = random_tensor({n, c, hw, hw}, rng, -1.0, 1.0);
  const Tensor w = random_tensor({16, c, 4, 4}, rng, -0.2, 0.2);
  for (auto _ : state) {
    Graph g;
    Value y = g.conv2d(g.input(x), g.input(w), 2, 1);
    benchmark::DoNotOptimize(g.val(y).data());
  }
  state.SetItemsProcessed(state.iterations() * x.numel());
}
BENCHMARK(BM_Conv2dForward)->Arg(32)->Arg(64);

void BM_GeneratorForward(benchmark::State& state) {
  slicerec::GeneratorConfig cfg;
  cfg.base_filters = static_cast<int>(state.range(0));
  slicerec::Generator gen(cfg, 7);
  Rng rng(2);
  const Tensor x = random_tensor({2, 3, 64, 64}, rng);
  for (auto _ : state) {
    Graph g;
    const std::vector<Value> pv = gen.bind(g);
    Value y = gen.forward(g, pv, g.input(x), slicerec::BnMode::eval);
    benchmark::DoNotOptimize(g.val(y).data());
  }
}
BENCHMARK(BM_GeneratorForward)->Arg(8)->Arg(16);

void BM_TrainStepBackward(benchmark::State& state) {
  slicerec::GeneratorConfig cfg;
  cfg.base_filters = 8;
  slicerec::Generator gen(cfg, 7);
  Rng rng(3);
  const Tensor x = random_tensor({2, 3, 64, 64}, rng);
  const Tensor t = random_tensor({2, 3, 64, 64}, rng);
  for (auto _ : state) {
    Graph g;
    const std::vector<Value> pv = gen.bind(g);
    Value y = gen.forward(g, pv, g.input(x), slicerec::BnMode::train);
    Value loss = slicerec::tape_l1(g, y, g.input(t));
    const std::vector<Value> grads = g.backward(loss, pv);
    benchmark::DoNotOptimize(grads.size());
  }
}
BENCHMARK(BM_TrainStepBackward);

void BM_Ssim(benchmark::State& state) {
  Rng rng(4);
  const Tensor a = random_tensor({3, 64, 64}, rng);
  const Tensor b = random_tensor({3, 64, 64}, rng);
  for (auto _ : state) {
    benchmark::DoNotOptimize(slicerec::ssim(a, b));
  }
}
BENCHMARK(BM_Ssim);

}  // namespace

BENCHMARK_MAIN();
