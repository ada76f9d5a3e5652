#include <benchmark/benchmark.h>

#include <vector>

#include "ood/analysis.hpp"
#include "ood/density_models.hpp"
#include "ood/detectors.hpp"
#include "ood/estimators.hpp"

using namespace ood;

namespace {

Distribution iso(std::size_t d, double var) { return Distribution::isotropic_gaussian(std::vector<double>(d, 0.0), var); }

void BM_SampleIsotropic(benchmark::State& state) {
  const auto p = iso(16, 16);
  const auto n = static_cast<std::size_t>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(sample(p, n, 1));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SampleIsotropic)->Arg(1 << 12)->Arg(1 << 16);

void BM_LogDensityFull(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(d, d) + 0.1 * Eigen::MatrixXd::Ones(d, d);
  const auto model = DensityModel::exact(Distribution::full_gaussian(std::vector<double>(d, 0.0), cov));
  const auto data = sample(iso(d, 1), 4096, 2);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_log_density(model, data));
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_LogDensityFull)->Arg(2)->Arg(16)->Arg(64);

void BM_ContrastFlagship(benchmark::State& state) {
  const auto p = iso(16, 16), q = iso(16, 1);
  const auto model = DensityModel::exact(p);
  const Exec exec{static_cast<std::size_t>(state.range(0))};
  for (auto _ : state) benchmark::DoNotOptimize(contrast_stats(p, q, model, 100000, 3, exec));
}
BENCHMARK(BM_ContrastFlagship)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_KnnEntropy(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto data = sample(iso(8, 1), n, 4);
  for (auto _ : state) benchmark::DoNotOptimize(knn_entropy(data, {3, 50, 5}, Exec{4}));
}
BENCHMARK(BM_KnnEntropy)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_GmmEm(benchmark::State& state) {
  const auto mixture = Distribution::gaussian_mixture(
      {0.5, 0.5}, {Gaussian::isotropic({-2.0, 0.0}, 1.0), Gaussian::isotropic({2.0, 0.0}, 1.0)});
  const auto data = sample(mixture, 5000, 6);
  for (auto _ : state) benchmark::DoNotOptimize(fit_gmm_em(data, static_cast<std::size_t>(state.range(0)), {200, 1e-7, 7, 1e-6}));
}
BENCHMARK(BM_GmmEm)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_Auroc(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto model = DensityModel::exact(iso(4, 1));
  const auto in = score_likelihood(model, sample(iso(4, 1), n, 8));
  const auto out = score_likelihood(model, sample(iso(4, 2), n, 9));
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_detector(in, out));
}
BENCHMARK(BM_Auroc)->Arg(10000)->Arg(100000);

}  // namespace
