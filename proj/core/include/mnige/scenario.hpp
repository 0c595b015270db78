#pragma once

#include "mnige/channel.hpp"
#include "mnige/estimator.hpp"
#include "mnige/gain_oracle.hpp"
#include "mnige/grid.hpp"
#include "mnige/optimizer.hpp"
#include "mnige/phy.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mnige {

// Every knob of a run, with defaults matching the reference deployment: three
// 500 m-spaced cells at 3.5 GHz, a 12-subcarrier RB, mixed 15/30/60 kHz bands,
// 46 dBm per BS, 30 dBm per RB, -174 dBm/Hz noise, 2-slot probing blocks.
struct ScenarioConfig {
    int rb_size = 12;
    int base_fft = 512;
    double base_scs_hz = 15e3;
    double cp_fraction = 0.07;
    int block_len_rbgs = 28;  // 2 slots of the base numerology
    std::vector<std::pair<int, int>> bands = {{0, 2}, {1, 1}, {2, 1}};  // (numerology, RBs)

    int n_bs = 3;
    int ues_per_cell = 3;
    double cell_radius_m = 250.0;
    double inter_bs_m = 500.0;
    double min_ue_dist_m = 10.0;

    double fc_ghz = 3.5;
    int n_taps = 4;
    double noise_psd_dbm_hz = -174.0;
    double max_rb_dbm = 30.0;
    double max_bs_dbm = 46.0;
    bool with_noise = true;

    double cfo_range = 0.5;             // per-BS LO error, fraction of base SCS
    double sync_range_samples = 18.0;   // per-BS sync error upper bound
    int fixed_interferer_to = -1;       // >= 0 overrides all cross-link offsets

    std::vector<int> qam_orders = {4, 16, 64, 256};
    int fixed_qam = 0;  // nonzero forces one order everywhere

    int group_size = 0;  // 0 -> min(n_src, n_bs + 2)
    int n_blocks = 0;    // probing blocks per period, 0 -> group size
    double gamma_min_db = 0.0;
    double gamma_max_db = 6.0;
    double gamma_margin_db = 3.0;  // headroom under the worst-case SINR
    double retention = 0.95;
};

// Text form: one "key = value" per line, '#' comments. A .json file with the
// same keys is accepted as an alternative. Unknown keys and out-of-range
// values are rejected with the field name in the message.
ScenarioConfig parse_scenario(const std::string& text, bool json);
ScenarioConfig load_scenario(const std::string& path);
void validate(const ScenarioConfig& cfg);

// canonical serialization (stable field order and formatting) and its hash,
// recorded in run manifests
std::string canonical_config(const ScenarioConfig& cfg);
std::uint64_t scenario_hash(const ScenarioConfig& cfg);

// One materialized drop: geometry, per-link channels, the exact coupling
// graph, and the allocation problem with SINR floors clamped so that any
// RB-complete assignment stays feasible at equal power.
struct Scenario {
    ScenarioConfig cfg;
    ResourceGrid grid;
    Topology topo;
    std::vector<std::vector<LinkChannel>> links;  // [bs][ue]
    InterferenceGraph graph;
    AllocationProblem alloc;
    InterfererSelection selection;
    std::vector<std::vector<int>> probe_groups;  // deduplicated sink groups
    std::vector<int> qam_order_src;              // per source (bs * n_rb + rb)
    double noise_psd_w = 0.0;
    std::uint64_t hash = 0;

    int n_src() const { return alloc.n_bs * alloc.n_rb; }
};

Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t seed);

// probing plans realizing a designed power matrix with the scenario's
// per-source constellations
std::vector<TxPlan> make_plans(const Scenario& sc, const TransmitPowerMatrix& design);

}  // namespace mnige
