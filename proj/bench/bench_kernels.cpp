// OpenMP kernels against their serial references.
#include <benchmark/benchmark.h>

#include "rlrds/inference.hpp"
#include "rlrds/policy.hpp"

using namespace rlrds;

namespace {

const NetworkParams kTheta = NetworkParams::type_setting(1.0);

void BM_Population(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(sample_population(kTheta, static_cast<int>(st.range(0)), 3));
}
void BM_PopulationSerial(benchmark::State& st) {
    for (auto _ : st) benchmark::DoNotOptimize(sample_population_serial(kTheta, static_cast<int>(st.range(0)), 3));
}

WeightedSample study_sample() {
    const Population pop = sample_population(kTheta, 2000, 5, Adjacency::lazy);
    StudyConfig cfg;
    cfg.theta = kTheta;
    cfg.budget = 400;
    RandomPolicy pol;
    return build_sample(run_study(pop, cfg, pol, 9), kTheta.t_min, kTheta.t_max, SampleView::online);
}

void BM_Bootstrap(benchmark::State& st) {
    const WeightedSample s = study_sample();
    FitOptions o;
    o.reward_ridge = 1.0;
    for (auto _ : st) benchmark::DoNotOptimize(generalized_bootstrap(s, ActionSpaceSpec{}, 3, 0, 3, 16, 1, o));
}
void BM_BootstrapSerial(benchmark::State& st) {
    const WeightedSample s = study_sample();
    FitOptions o;
    o.reward_ridge = 1.0;
    for (auto _ : st) benchmark::DoNotOptimize(generalized_bootstrap_serial(s, ActionSpaceSpec{}, 3, 0, 3, 16, 1, o));
}

struct SearchFixture {
    RolloutStart start;
    BranchingParams beta;
    std::vector<PolicyParams> grid = alpha_grid(3);
    SearchFixture() {
        const WeightedSample s = study_sample();
        FitOptions o;
        o.reward_ridge = 1.0;
        beta = fit_wmle(s, ActionSpaceSpec{}, 3, 0, 3, o).params;
        start.current_x = kTheta.mu;
        start.budget_remaining = 100;
    }
};

void BM_PolicySearch(benchmark::State& st) {
    static const SearchFixture f;
    const RolloutOptions ro{30, {}};
    for (auto _ : st) benchmark::DoNotOptimize(policy_search(f.start, f.beta, 10, f.grid, 7, ro));
}
void BM_PolicySearchSerial(benchmark::State& st) {
    static const SearchFixture f;
    const RolloutOptions ro{30, {}};
    for (auto _ : st) benchmark::DoNotOptimize(policy_search_serial(f.start, f.beta, 10, f.grid, 7, ro));
}

ThetaGrid small_grid() {
    SimulationDesign d;
    d.population = 500;
    d.budget = 60;
    ThetaGrid g = make_coverage_grid(kTheta, {1.0, 2.0}, {0.0, 1.5});
    fill_beta_bar(g, d, 11);
    return g;
}

void BM_SbiReferences(benchmark::State& st) {
    static const ThetaGrid g = small_grid();
    SimulationDesign d;
    d.population = 500;
    d.budget = 60;
    for (auto _ : st) benchmark::DoNotOptimize(sbi_references(g, d, 8, 13));
}
void BM_SbiReferencesSerial(benchmark::State& st) {
    static const ThetaGrid g = small_grid();
    SimulationDesign d;
    d.population = 500;
    d.budget = 60;
    for (auto _ : st) benchmark::DoNotOptimize(sbi_references_serial(g, d, 8, 13));
}

}  // namespace

BENCHMARK(BM_Population)->Arg(1000)->Arg(3000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PopulationSerial)->Arg(1000)->Arg(3000)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Bootstrap)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BootstrapSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PolicySearch)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PolicySearchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SbiReferences)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_SbiReferencesSerial)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
