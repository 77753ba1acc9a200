#include "backcalc/epi_r.hpp"
#include "backcalc/inference.hpp"
#include "backcalc/pcr.hpp"
#include "backcalc/pipeline.hpp"

#include <benchmark/benchmark.h>

using namespace backcalc;

namespace {

DeathModel sample_model(ModelKind kind) {
  const DeathSeries s = load_series(RunConfig{});
  ModelOptions o;
  o.theta = 25.0;
  return DeathModel(build_spec(kind, s, DurationDist::lognormal(3.19, 0.44), o), s.deaths);
}

void BM_Objective(benchmark::State& state) {
  const auto kind = static_cast<ModelKind>(state.range(0));
  const DeathModel m = sample_model(kind);
  const Eigen::VectorXd beta = m.initial_beta(m.n_obs() / 2);
  const std::vector<double> lambda(static_cast<std::size_t>(m.n_lambda()), 10.0);
  const int order = static_cast<int>(state.range(1));
  for (auto _ : state) benchmark::DoNotOptimize(penalized_objective(m, beta, lambda, order).value);
}
BENCHMARK(BM_Objective)
    ->ArgsProduct({{static_cast<long>(ModelKind::basic), static_cast<long>(ModelKind::incidence),
                    static_cast<long>(ModelKind::renewal)},
                   {0, 2}});

void BM_FitEmpiricalBayes(benchmark::State& state) {
  const DeathModel m = sample_model(static_cast<ModelKind>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(fit_empirical_bayes(m).deviance);
}
BENCHMARK(BM_FitEmpiricalBayes)
    ->Arg(static_cast<long>(ModelKind::incidence))
    ->Arg(static_cast<long>(ModelKind::renewal))
    ->Unit(benchmark::kMillisecond);

void BM_MetropolisHastings(benchmark::State& state) {
  const DeathModel m = sample_model(ModelKind::incidence);
  const FitState fit = fit_empirical_bayes(m);
  MhOptions o;
  o.burn_in = 500;
  o.n_samples = static_cast<int>(state.range(0));
  for (auto _ : state) {
    Rng rng = stream_rng(1, 0);
    benchmark::DoNotOptimize(mh_sample(m, fit, o, rng).min_ess);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_MetropolisHastings)->Arg(2000)->Unit(benchmark::kMillisecond);

void BM_RFromIncidence(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Eigen::VectorXd f(n);
  for (int t = 0; t < n; ++t) f(t) = 10.0 + 500.0 * std::exp(-0.5 * std::pow((t - n / 3.0) / 10.0, 2));
  const SeirParams p;
  for (auto _ : state) benchmark::DoNotOptimize(r_from_incidence(f, p)(n - 1));
}
BENCHMARK(BM_RFromIncidence)->Arg(120)->Arg(400);

void BM_PcrLoglik(benchmark::State& state) {
  PcrModel model;
  const Eigen::VectorXd f = pcr_reference_incidence(100);
  Rng rng = stream_rng(2, 0);
  const PcrData data = simulate_pcr(f, model, rng);
  const SmoothTerm basis = cubic_basis(day_grid(100), model.k);
  const Eigen::VectorXd beta = basis.design.colPivHouseholderQr().solve(f.array().log().matrix());
  for (auto _ : state) benchmark::DoNotOptimize(pcr_loglik(data.counts, basis, beta, model).loglik);
}
BENCHMARK(BM_PcrLoglik);

}  // namespace
BENCHMARK_MAIN();
