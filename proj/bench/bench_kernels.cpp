#include <benchmark/benchmark.h>

#include "dnr/kernels.hpp"
#include "dnr/rng.hpp"

namespace {

using dnr::ConvGeometry;

struct Setup {
  ConvGeometry g;
  std::size_t filters;
  std::vector<float> input, weight, bias, output, grad_out, wgrad, bgrad, input_grad;

  Setup(std::size_t channels, std::size_t filters_, std::size_t size, std::size_t k) : filters(filters_) {
    const std::size_t p = k / 2;
    g = ConvGeometry::make(channels, {size, size}, {k, k}, {1, 1}, {{p, p}, {p, p}});
    dnr::Rng rng(7);
    auto fill = [&](std::vector<float>& v, std::size_t n) {
      v.resize(n);
      for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
    };
    fill(input, channels * g.in_size());
    fill(weight, filters * g.patch_rows());
    fill(bias, filters);
    fill(grad_out, filters * g.out_size());
    output.assign(filters * g.out_size(), 0.f);
    wgrad.assign(weight.size(), 0.f);
    bgrad.assign(filters, 0.f);
    input_grad.assign(input.size(), 0.f);
  }
};

void args(benchmark::internal::Benchmark* b) {
  b->Args({3, 16, 48, 5})->Args({16, 16, 48, 5})->Args({32, 32, 64, 3});
}

void BM_ConvForward_Parallel(benchmark::State& state) {
  Setup s(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    dnr::kernels::conv_forward<float>(s.input.data(), s.weight.data(), s.bias.data(), s.filters, s.g, s.output.data());
    benchmark::DoNotOptimize(s.output.data());
  }
}

void BM_ConvForward_Reference(benchmark::State& state) {
  Setup s(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    dnr::reference::conv_forward<float>(s.input.data(), s.weight.data(), s.bias.data(), s.filters, s.g, s.output.data());
    benchmark::DoNotOptimize(s.output.data());
  }
}

void BM_ConvBackward_Parallel(benchmark::State& state) {
  Setup s(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    dnr::kernels::conv_backward<float>(s.input.data(), s.grad_out.data(), s.weight.data(), s.filters, s.g, s.wgrad.data(),
                                       s.bgrad.data(), s.input_grad.data());
    benchmark::DoNotOptimize(s.input_grad.data());
  }
}

void BM_ConvBackward_Reference(benchmark::State& state) {
  Setup s(state.range(0), state.range(1), state.range(2), state.range(3));
  for (auto _ : state) {
    dnr::reference::conv_backward<float>(s.input.data(), s.grad_out.data(), s.weight.data(), s.filters, s.g, s.wgrad.data(),
                                         s.bgrad.data(), s.input_grad.data());
    benchmark::DoNotOptimize(s.input_grad.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward_Parallel)->Apply(args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward_Reference)->Apply(args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward_Parallel)->Apply(args)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward_Reference)->Apply(args)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
