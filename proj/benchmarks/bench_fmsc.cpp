// Microbenchmarks for the hot paths of the simulation harness: data
// generation, estimation, criterion evaluation and the two-step interval.

#include <benchmark/benchmark.h>

#include <armadillo>

#include "fmsc/criteria.hpp"
#include "fmsc/estimators.hpp"
#include "fmsc/fmsc.hpp"
#include "fmsc/inference.hpp"
#include "fmsc/rng.hpp"
#include "fmsc/simulation.hpp"
#include "fmsc/types.hpp"

namespace {

using namespace fmsc;

// p = 3 baseline instruments plus q correlated suspects, scalar regressor
Dataset wide_dataset(arma::uword n, arma::uword q) {
  Philox rng(42, 0);
  arma::mat z1 = rng.normal_mat(n, 3);
  arma::mat z2 = rng.normal_mat(n, q);
  arma::vec v = rng.normal_vec(n);
  arma::vec eps = rng.normal_vec(n);
  arma::vec x = arma::sum(z1, 1) / 3.0 + 0.3 * arma::sum(z2, 1) + v;
  arma::vec y = 0.5 * x + eps;
  return make_dataset(y, x, z1, z2, ProblemKind::ChooseIv);
}

void generate_choose_iv(benchmark::State& state) {
  ChooseIvDesign design{0.4, 0.2, static_cast<arma::uword>(state.range(0))};
  std::uint64_t rep = 0;
  for (auto _ : state) {
    Philox rng(1, stream_id(0, rep++, kStreamData));
    benchmark::DoNotOptimize(gen_choose_iv(design, rng));
  }
}
BENCHMARK(generate_choose_iv)->Arg(100)->Arg(500)->Arg(5000);

void tsls_fit(benchmark::State& state) {
  Philox rng(2, 0);
  Dataset d = gen_choose_iv({0.4, 0.2, static_cast<arma::uword>(state.range(0))}, rng);
  arma::mat z = d.Z();
  for (auto _ : state) benchmark::DoNotOptimize(fit_tsls(d.y, d.X, z));
}
BENCHMARK(tsls_fit)->Arg(100)->Arg(500)->Arg(5000);

void scalar_criterion(benchmark::State& state) {
  Philox rng(3, 0);
  Dataset d = gen_ols_tsls({0.4, 0.2, static_cast<arma::uword>(state.range(0))}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(fmsc_ols_vs_tsls(d));
}
BENCHMARK(scalar_criterion)->Arg(100)->Arg(500)->Arg(5000);

// full per-replication cost of the selection experiments: context build over
// the 2^q candidate lattice
void choose_iv_context(benchmark::State& state) {
  arma::uword q = static_cast<arma::uword>(state.range(1));
  Dataset d = wide_dataset(static_cast<arma::uword>(state.range(0)), q);
  std::vector<MomentSet> lattice = candidate_lattice(3, q, CandidateMode::AllSubsets);
  for (auto _ : state) benchmark::DoNotOptimize(make_choose_iv_context(d, lattice, 0));
}
BENCHMARK(choose_iv_context)->Args({500, 1})->Args({500, 3})->Args({2000, 3});

void j_statistic_full(benchmark::State& state) {
  Philox rng(4, 0);
  Dataset d = gen_choose_iv({0.4, 0.2, static_cast<arma::uword>(state.range(0))}, rng);
  MomentSet full{"full", {0, 1, 2, 3}, CandidateKind::IvSubset};
  for (auto _ : state) benchmark::DoNotOptimize(j_statistic(d, full));
}
BENCHMARK(j_statistic_full)->Arg(100)->Arg(500)->Arg(5000);

// the coverage-experiment hot path: simulate the limit draws, sweep the
// scalar bias region and take worst-case quantiles
void two_step_interval(benchmark::State& state) {
  Philox rng(5, 0);
  Dataset d = gen_ols_tsls({0.6, 0.2, 500}, rng);
  ProblemContext ctx = make_ols_tsls_context(d);
  CiOptions opts;
  opts.draws = static_cast<arma::uword>(state.range(0));
  opts.seed = 7;
  for (auto _ : state) benchmark::DoNotOptimize(two_step_ci(ctx, ctx.mu_fmsc(), opts));
}
BENCHMARK(two_step_interval)->Arg(200)->Arg(1000);

}  // namespace

BENCHMARK_MAIN();
