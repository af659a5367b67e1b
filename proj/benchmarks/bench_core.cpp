#include <benchmark/benchmark.h>

#include <random>

#include "sidlab/classifiers.hpp"
#include "sidlab/data.hpp"
#include "sidlab/tensor.hpp"
#include "sidlab/theory.hpp"
#include "sidlab/wavelet.hpp"

using namespace sidlab;

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = g(rng);
  return t;
}

}  // namespace

static void BM_MatmulBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const Tensor a = randn({n, n}, rng);
  Tensor x = randn({1, n}, rng);
  x.requires_grad = true;
  for (auto _ : state) {
    Tape tape;
    const int xn = tape.leaf(x);
    const int out = tape.sum(tape.matmul(xn, tape.leaf(a)));
    tape.backward(out);
    benchmark::DoNotOptimize(tape.grad(xn).data());
  }
  state.SetComplexityN(n);
}
BENCHMARK(BM_MatmulBackward)->RangeMultiplier(2)->Range(32, 256)->Complexity();

static void BM_Dwt2Sym17(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  std::mt19937_64 rng(2);
  const Tensor img = randn({d, d}, rng);
  const WaveletFilter f = WaveletFilter::sym17();
  for (auto _ : state) {
    const SubBands b = dwt2(img, f);
    benchmark::DoNotOptimize(b.ll.data());
  }
}
BENCHMARK(BM_Dwt2Sym17)->Arg(16)->Arg(32)->Arg(64);

static void BM_WawtMatrix(benchmark::State& state) {
  const int d = static_cast<int>(state.range(0));
  const WaveletFilter f = WaveletFilter::sym17();
  for (auto _ : state) {
    const Tensor h = wawt_matrix(d, WawtWeights{}, f);
    benchmark::DoNotOptimize(h.data());
  }
}
BENCHMARK(BM_WawtMatrix)->Arg(16)->Arg(32);

static void BM_Chi2ComboCdf(benchmark::State& state) {
  const int m = static_cast<int>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 3.0);
  std::vector<double> lam(static_cast<size_t>(m));
  for (double& l : lam) l = u(rng);
  double x = 0.8 * m;
  for (auto _ : state) {
    benchmark::DoNotOptimize(chi2_combo_cdf(x, lam));
  }
}
BENCHMARK(BM_Chi2ComboCdf)->Arg(1)->Arg(8)->Arg(64)->Arg(192);

static void BM_MarcumQHalf(benchmark::State& state) {
  double a = 1.0, b = 2.0;
  for (auto _ : state) {
    benchmark::DoNotOptimize(marcum_q_half(a, b));
    a += 1e-9;
  }
}
BENCHMARK(BM_MarcumQHalf);

static void BM_FitAffine(benchmark::State& state) {
  MixtureConfig mc;
  mc.num_classes = 10;
  mc.per_class = 100;
  mc.dim = static_cast<int>(state.range(0));
  mc.seed = 4;
  const auto [ds, spec] = gen_gaussian_mixture(mc);
  for (auto _ : state) {
    const AffineClassifier c = fit_affine(ds);
    benchmark::DoNotOptimize(c.biases);
  }
}
BENCHMARK(BM_FitAffine)->Arg(64)->Arg(256);

BENCHMARK_MAIN();
