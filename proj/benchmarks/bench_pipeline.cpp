#include "mnige/estimator.hpp"
#include "mnige/gain_oracle.hpp"
#include "mnige/optimizer.hpp"
#include "mnige/phy.hpp"
#include "mnige/power_design.hpp"
#include "mnige/scenario.hpp"

#include <benchmark/benchmark.h>

namespace {

mnige::ScenarioConfig desk() {
    return mnige::ScenarioConfig{};
}

// one probing block per link through waveform synthesis, channel, and capture
void BM_SymbolPipeline(benchmark::State& state) {
    mnige::ScenarioConfig cfg = desk();
    cfg.n_blocks = 1;
    const mnige::Scenario sc = mnige::build_scenario(cfg, 7);
    mnige::Rng rng(7);
    mnige::Rng design_rng = rng.fork(1);
    const auto design = mnige::construct_full_rank(
        sc.grid, cfg.n_bs, {sc.alloc.max_rb_w, sc.alloc.max_bs_w}, design_rng);
    mnige::TransmitPowerMatrix one = design;
    one.entries_w = design.entries_w.topRows(1);
    const auto plans = mnige::make_plans(sc, one);
    std::uint64_t round = 0;
    for (auto _ : state) {
        mnige::Rng sim_rng = rng.fork(0x1000 + round++);
        benchmark::DoNotOptimize(
            mnige::simulate_period(sc.grid, plans, sc.links, sc.noise_psd_w, sim_rng, 1));
    }
}
BENCHMARK(BM_SymbolPipeline)->Unit(benchmark::kMillisecond);

// exact steady-state coupling graph for the reference drop
void BM_OracleAssembly(benchmark::State& state) {
    const mnige::Scenario sc = mnige::build_scenario(desk(), 7);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mnige::build_graph(sc.grid, sc.links, sc.noise_psd_w));
    }
}
BENCHMARK(BM_OracleAssembly)->Unit(benchmark::kMillisecond);

// per-subcarrier cross-numerology gain table for one RB pair
void BM_SubcarrierGainTable(benchmark::State& state) {
    const mnige::ScenarioConfig cfg = desk();
    const mnige::ResourceGrid grid =
        mnige::build_grid(cfg.bands, cfg.rb_size, cfg.block_len_rbgs, cfg.base_fft,
                          cfg.cp_fraction, cfg.base_scs_hz);
    const mnige::Numerology& src = grid.numerologies.front();
    const mnige::Numerology& dst = grid.numerologies.back();
    for (auto _ : state) {
        double acc = 0.0;
        for (int m = 0; m < grid.rb_size; ++m) {
            for (int d = 0; d < grid.rb_size; ++d) {
                acc += mnige::gain_subcarrier_cross(src, dst, m, d);
            }
        }
        benchmark::DoNotOptimize(acc);
    }
}
BENCHMARK(BM_SubcarrierGainTable);

// least-squares gain recovery from one period of designed measurements
void BM_EstimatorSolve(benchmark::State& state) {
    const mnige::Scenario sc = mnige::build_scenario(desk(), 7);
    mnige::Rng rng(7);
    mnige::Rng design_rng = rng.fork(1);
    const auto design = mnige::construct_full_rank(
        sc.grid, sc.cfg.n_bs, {sc.alloc.max_rb_w, sc.alloc.max_bs_w}, design_rng);
    const auto plans = mnige::make_plans(sc, design);
    mnige::Rng sim_rng = rng.fork(2);
    const auto measured =
        mnige::simulate_period(sc.grid, plans, sc.links, sc.noise_psd_w, sim_rng, 1);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            mnige::estimate_gains(design, measured, sc.grid, sc.selection, sc.graph.noise_w));
    }
}
BENCHMARK(BM_EstimatorSolve);

// full scheduling stage on a two-cell, two-RB problem
void BM_BarrierSchedule(benchmark::State& state) {
    mnige::ScenarioConfig cfg = desk();
    cfg.n_bs = 2;
    cfg.ues_per_cell = 1;
    cfg.bands = {{0, 2}};
    const mnige::Scenario sc = mnige::build_scenario(cfg, 7);
    std::uint64_t round = 0;
    for (auto _ : state) {
        mnige::Rng rng(0x2000 + round++);
        benchmark::DoNotOptimize(mnige::solve_p2(sc.alloc, rng));
    }
}
BENCHMARK(BM_BarrierSchedule)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
