// Serial reference vs OpenMP kernels on typical surrogate sizes.

#include <benchmark/benchmark.h>

#include <vector>

#include "kgbo/kernels.hpp"
#include "kgbo/rng.hpp"

namespace {

Eigen::MatrixXd random_points(int d, int n, std::uint64_t seed) {
  kgbo::Rng rng(seed);
  Eigen::MatrixXd x(d, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < d; ++i) x(i, j) = kgbo::uniform01(rng) * 3.0;
  return x;
}

template <bool Parallel>
void BM_Gram(benchmark::State& st) {
  const auto x = random_points(20, static_cast<int>(st.range(0)), 1);
  Eigen::MatrixXd k;
  for (auto _ : st) {
    if constexpr (Parallel)
      kgbo::kernels::omp::matern52_gram(x, 1.3, k);
    else
      kgbo::kernels::serial::matern52_gram(x, 1.3, k);
    benchmark::DoNotOptimize(k.data());
  }
}

template <bool Parallel>
void BM_Cross(benchmark::State& st) {
  const auto a = random_points(20, 128, 2);
  const auto b = random_points(20, static_cast<int>(st.range(0)), 3);
  Eigen::MatrixXd k;
  for (auto _ : st) {
    if constexpr (Parallel)
      kgbo::kernels::omp::matern52_cross(a, b, 1.3, k);
    else
      kgbo::kernels::serial::matern52_cross(a, b, 1.3, k);
    benchmark::DoNotOptimize(k.data());
  }
}

template <bool Parallel>
void BM_Traces(benchmark::State& st) {
  const int n = static_cast<int>(st.range(0));
  const auto x = random_points(20, n, 4);
  const Eigen::MatrixXd w = random_points(n, n, 5);
  Eigen::VectorXd out;
  for (auto _ : st) {
    if constexpr (Parallel)
      kgbo::kernels::omp::lengthscale_traces(x, 1.3, w, out);
    else
      kgbo::kernels::serial::lengthscale_traces(x, 1.3, w, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Acquisition(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  kgbo::Rng rng(6);
  std::vector<double> mu(n), var(n), out(n);
  for (std::size_t i = 0; i < n; ++i) {
    mu[i] = kgbo::standard_normal(rng);
    var[i] = 0.1 + kgbo::uniform01(rng);
  }
  const auto kind = kgbo::AcquisitionKind::log_ei(1e-3);
  for (auto _ : st) {
    if constexpr (Parallel)
      kgbo::kernels::omp::acquisition_scores(kind, mu, var, 0.5, out);
    else
      kgbo::kernels::serial::acquisition_scores(kind, mu, var, 0.5, out);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Dot(benchmark::State& st) {
  const auto e = random_points(32, static_cast<int>(st.range(0)), 7);
  const Eigen::VectorXd q = random_points(32, 1, 8).col(0);
  std::vector<double> out(static_cast<std::size_t>(e.cols()));
  for (auto _ : st) {
    if constexpr (Parallel)
      kgbo::kernels::omp::dot_columns(e, q, out);
    else
      kgbo::kernels::serial::dot_columns(e, q, out);
    benchmark::DoNotOptimize(out.data());
  }
}

}  // namespace

BENCHMARK(BM_Gram<false>)->Arg(128)->Arg(512);
BENCHMARK(BM_Gram<true>)->Arg(128)->Arg(512);
BENCHMARK(BM_Cross<false>)->Arg(576)->Arg(4096);
BENCHMARK(BM_Cross<true>)->Arg(576)->Arg(4096);
BENCHMARK(BM_Traces<false>)->Arg(128);
BENCHMARK(BM_Traces<true>)->Arg(128);
BENCHMARK(BM_Acquisition<false>)->Arg(576)->Arg(100000);
BENCHMARK(BM_Acquisition<true>)->Arg(576)->Arg(100000);
BENCHMARK(BM_Dot<false>)->Arg(576)->Arg(100000);
BENCHMARK(BM_Dot<true>)->Arg(576)->Arg(100000);

BENCHMARK_MAIN();
