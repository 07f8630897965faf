// Serial reference kernels against their OpenMP counterparts.

#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "npmle/data.hpp"
#include "npmle/harness.hpp"
#include "npmle/kernels.hpp"
#include "npmle/mixture.hpp"

using namespace npmle;

namespace {

struct Fixture {
  Dataset data;
  KernelSpec kernel;
  std::vector<Component> comps;
  std::vector<double> p, w, mixed, out;

  Fixture(std::size_t n, std::size_t S) {
    data = simulate_case(CaseId::C2b, n, 1).data;
    kernel = em_kernel(CaseId::C2b);
    std::mt19937_64 eng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (std::size_t s = 0; s < S; ++s)
      comps.push_back(Component::point({u(eng), u(eng)}, 1.0 / static_cast<double>(S)));
    p.assign(n * S, 0.0);
    serial::fill_columns(data, kernel, comps, p);
    w.assign(S, 1.0 / static_cast<double>(S));
    mixed.assign(n, 0.0);
    serial::mixture_probs(p, n, w, mixed);
    out.assign(n * S, 0.0);
  }
};

template <bool Parallel>
void BM_FillColumns(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  for (auto _ : st) {
    if constexpr (Parallel)
      parallel::fill_columns(f.data, f.kernel, f.comps, f.out);
    else
      serial::fill_columns(f.data, f.kernel, f.comps, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(1));
}

template <bool Parallel>
void BM_MixtureProbs(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  const std::size_t n = f.data.size();
  for (auto _ : st) {
    if constexpr (Parallel)
      benchmark::DoNotOptimize(parallel::mixture_probs(f.p, n, f.w, f.mixed));
    else
      benchmark::DoNotOptimize(serial::mixture_probs(f.p, n, f.w, f.mixed));
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(1));
}

template <bool Parallel>
void BM_RatioMeans(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  const std::size_t n = f.data.size();
  std::vector<double> r(f.w.size());
  for (auto _ : st) {
    if constexpr (Parallel)
      parallel::ratio_means(f.p, n, f.mixed, r);
    else
      serial::ratio_means(f.p, n, f.mixed, r);
    benchmark::DoNotOptimize(r.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(1));
}

template <bool Parallel>
void BM_Responsibilities(benchmark::State& st) {
  Fixture f(static_cast<std::size_t>(st.range(0)), static_cast<std::size_t>(st.range(1)));
  const std::size_t n = f.data.size();
  for (auto _ : st) {
    if constexpr (Parallel)
      parallel::responsibilities(f.p, n, f.w, f.out);
    else
      serial::responsibilities(f.p, n, f.w, f.out);
    benchmark::DoNotOptimize(f.out.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0) * st.range(1));
}

void sizes(benchmark::internal::Benchmark* b) {
  b->Args({1000, 50})->Args({5000, 200});
}

}  // namespace

BENCHMARK(BM_FillColumns<false>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_FillColumns<true>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_MixtureProbs<false>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_MixtureProbs<true>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_RatioMeans<false>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_RatioMeans<true>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_Responsibilities<false>)->Apply(sizes)->UseRealTime();
BENCHMARK(BM_Responsibilities<true>)->Apply(sizes)->UseRealTime();

BENCHMARK_MAIN();
