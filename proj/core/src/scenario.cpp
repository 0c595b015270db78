#include "mnige/scenario.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>

namespace mnige {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) {
        return "";
    }
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) {
        out.push_back(trim(item));
    }
    return out;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) {
            throw std::invalid_argument("trailing characters");
        }
        return x;
    } catch (const std::exception&) {
        throw std::invalid_argument("scenario field '" + key + "': not a number: " + v);
    }
}

int to_int(const std::string& key, const std::string& v) {
    const double x = to_double(key, v);
    const int i = static_cast<int>(std::lround(x));
    if (std::abs(x - i) > 1e-9) {
        throw std::invalid_argument("scenario field '" + key + "': not an integer: " + v);
    }
    return i;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") {
        return true;
    }
    if (v == "false" || v == "0") {
        return false;
    }
    throw std::invalid_argument("scenario field '" + key + "': not a bool: " + v);
}

using Setter = std::function<void(ScenarioConfig&, const std::string&)>;

const std::map<std::string, Setter>& field_table() {
    static const std::map<std::string, Setter> table = {
        {"rb_size", [](ScenarioConfig& c, const std::string& v) { c.rb_size = to_int("rb_size", v); }},
        {"base_fft", [](ScenarioConfig& c, const std::string& v) { c.base_fft = to_int("base_fft", v); }},
        {"base_scs_hz", [](ScenarioConfig& c, const std::string& v) { c.base_scs_hz = to_double("base_scs_hz", v); }},
        {"cp_fraction", [](ScenarioConfig& c, const std::string& v) { c.cp_fraction = to_double("cp_fraction", v); }},
        {"block_len_rbgs", [](ScenarioConfig& c, const std::string& v) { c.block_len_rbgs = to_int("block_len_rbgs", v); }},
        {"bands",
         [](ScenarioConfig& c, const std::string& v) {
             std::vector<std::pair<int, int>> bands;
             for (const std::string& part : split(v, ',')) {
                 const auto kv = split(part, ':');
                 if (kv.size() != 2) {
                     throw std::invalid_argument("scenario field 'bands': want mu:count, got " + part);
                 }
                 bands.emplace_back(to_int("bands", kv[0]), to_int("bands", kv[1]));
             }
             c.bands = std::move(bands);
         }},
        {"n_bs", [](ScenarioConfig& c, const std::string& v) { c.n_bs = to_int("n_bs", v); }},
        {"ues_per_cell", [](ScenarioConfig& c, const std::string& v) { c.ues_per_cell = to_int("ues_per_cell", v); }},
        {"cell_radius_m", [](ScenarioConfig& c, const std::string& v) { c.cell_radius_m = to_double("cell_radius_m", v); }},
        {"inter_bs_m", [](ScenarioConfig& c, const std::string& v) { c.inter_bs_m = to_double("inter_bs_m", v); }},
        {"min_ue_dist_m", [](ScenarioConfig& c, const std::string& v) { c.min_ue_dist_m = to_double("min_ue_dist_m", v); }},
        {"fc_ghz", [](ScenarioConfig& c, const std::string& v) { c.fc_ghz = to_double("fc_ghz", v); }},
        {"n_taps", [](ScenarioConfig& c, const std::string& v) { c.n_taps = to_int("n_taps", v); }},
        {"noise_psd_dbm_hz", [](ScenarioConfig& c, const std::string& v) { c.noise_psd_dbm_hz = to_double("noise_psd_dbm_hz", v); }},
        {"max_rb_dbm", [](ScenarioConfig& c, const std::string& v) { c.max_rb_dbm = to_double("max_rb_dbm", v); }},
        {"max_bs_dbm", [](ScenarioConfig& c, const std::string& v) { c.max_bs_dbm = to_double("max_bs_dbm", v); }},
        {"with_noise", [](ScenarioConfig& c, const std::string& v) { c.with_noise = to_bool("with_noise", v); }},
        {"cfo_range", [](ScenarioConfig& c, const std::string& v) { c.cfo_range = to_double("cfo_range", v); }},
        {"sync_range_samples", [](ScenarioConfig& c, const std::string& v) { c.sync_range_samples = to_double("sync_range_samples", v); }},
        {"fixed_interferer_to", [](ScenarioConfig& c, const std::string& v) { c.fixed_interferer_to = to_int("fixed_interferer_to", v); }},
        {"qam_orders",
         [](ScenarioConfig& c, const std::string& v) {
             std::vector<int> orders;
             for (const std::string& part : split(v, ',')) {
                 orders.push_back(to_int("qam_orders", part));
             }
             c.qam_orders = std::move(orders);
         }},
        {"fixed_qam", [](ScenarioConfig& c, const std::string& v) { c.fixed_qam = to_int("fixed_qam", v); }},
        {"group_size", [](ScenarioConfig& c, const std::string& v) { c.group_size = to_int("group_size", v); }},
        {"n_blocks", [](ScenarioConfig& c, const std::string& v) { c.n_blocks = to_int("n_blocks", v); }},
        {"gamma_min_db", [](ScenarioConfig& c, const std::string& v) { c.gamma_min_db = to_double("gamma_min_db", v); }},
        {"gamma_max_db", [](ScenarioConfig& c, const std::string& v) { c.gamma_max_db = to_double("gamma_max_db", v); }},
        {"gamma_margin_db", [](ScenarioConfig& c, const std::string& v) { c.gamma_margin_db = to_double("gamma_margin_db", v); }},
        {"retention", [](ScenarioConfig& c, const std::string& v) { c.retention = to_double("retention", v); }},
    };
    return table;
}

void apply(ScenarioConfig& cfg, const std::string& key, const std::string& value) {
    const auto it = field_table().find(key);
    if (it == field_table().end()) {
        throw std::invalid_argument("unknown scenario key: " + key);
    }
    it->second(cfg, value);
}

std::string json_value_string(const nlohmann::json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_boolean()) {
        return v.get<bool>() ? "true" : "false";
    }
    if (v.is_array()) {  // [[0,2],[1,1]] or [4,16,64]
        std::string out;
        for (const auto& e : v) {
            if (!out.empty()) {
                out += ",";
            }
            if (e.is_array()) {
                if (e.size() != 2) {
                    throw std::invalid_argument("scenario: array pairs must have 2 entries");
                }
                out += e[0].dump() + ":" + e[1].dump();
            } else {
                out += e.dump();
            }
        }
        return out;
    }
    return v.dump();
}

bool square_qam_order(int m) {
    if (m < 4) {
        return false;
    }
    const int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(m))));
    return r * r == m && (r & (r - 1)) == 0;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void validate(const ScenarioConfig& cfg) {
    const auto fail = [](const std::string& field, const std::string& why) {
        throw std::invalid_argument("scenario field '" + field + "': " + why);
    };
    if (cfg.rb_size < 1) fail("rb_size", "must be positive");
    if (cfg.base_fft < 8 || (cfg.base_fft & (cfg.base_fft - 1)) != 0) {
        fail("base_fft", "must be a power of two >= 8");
    }
    if (cfg.base_scs_hz <= 0) fail("base_scs_hz", "must be positive");
    if (cfg.cp_fraction <= 0 || cfg.cp_fraction >= 1) fail("cp_fraction", "must be in (0, 1)");
    if (cfg.block_len_rbgs < 1) fail("block_len_rbgs", "must be positive");
    if (cfg.bands.empty()) fail("bands", "need at least one band");
    int total_rb = 0;
    for (const auto& [mu, count] : cfg.bands) {
        if (mu < 0) fail("bands", "numerology index must be nonnegative");
        if (count < 1) fail("bands", "RB count must be positive");
        total_rb += count;
    }
    if (cfg.n_bs < 1) fail("n_bs", "need at least one BS");
    if (cfg.ues_per_cell < 1) fail("ues_per_cell", "need at least one UE per cell");
    if (total_rb < cfg.ues_per_cell) {
        fail("ues_per_cell", "one RB per UE per block is infeasible: more UEs than RBs");
    }
    if (cfg.cell_radius_m <= 0) fail("cell_radius_m", "must be positive");
    if (cfg.inter_bs_m <= 0) fail("inter_bs_m", "must be positive");
    if (cfg.min_ue_dist_m <= 0 || cfg.min_ue_dist_m >= cfg.cell_radius_m) {
        fail("min_ue_dist_m", "must be in (0, cell_radius_m)");
    }
    if (cfg.fc_ghz <= 0) fail("fc_ghz", "must be positive");
    if (cfg.n_taps < 1) fail("n_taps", "must be positive");
    if (cfg.max_rb_dbm > cfg.max_bs_dbm) fail("max_rb_dbm", "exceeds the BS total");
    if (cfg.cfo_range < 0 || cfg.cfo_range > 0.5) {
        fail("cfo_range", "must be in [0, 0.5] subcarrier spacings");
    }
    if (cfg.sync_range_samples < 0) fail("sync_range_samples", "must be nonnegative");
    if (cfg.qam_orders.empty()) fail("qam_orders", "need at least one order");
    for (const int m : cfg.qam_orders) {
        if (!square_qam_order(m)) fail("qam_orders", "not a square QAM order: " + std::to_string(m));
    }
    if (cfg.fixed_qam != 0 && !square_qam_order(cfg.fixed_qam)) {
        fail("fixed_qam", "not a square QAM order");
    }
    const int n_src = cfg.n_bs * total_rb;
    if (cfg.group_size != 0 && (cfg.group_size < cfg.n_bs || cfg.group_size > n_src)) {
        fail("group_size", "must be in [n_bs, total sources]");
    }
    if (cfg.n_blocks < 0) fail("n_blocks", "must be nonnegative");
    if (cfg.gamma_min_db > cfg.gamma_max_db) fail("gamma_min_db", "exceeds gamma_max_db");
    if (cfg.retention <= 0 || cfg.retention > 1) fail("retention", "must be in (0, 1]");
}

ScenarioConfig parse_scenario(const std::string& text, bool json) {
    ScenarioConfig cfg;
    if (json) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const std::exception& e) {
            throw std::invalid_argument(std::string("scenario json: ") + e.what());
        }
        if (!j.is_object()) {
            throw std::invalid_argument("scenario json: top level must be an object");
        }
        for (const auto& [key, value] : j.items()) {
            apply(cfg, key, json_value_string(value));
        }
    } else {
        std::stringstream ss(text);
        std::string line;
        int line_no = 0;
        while (std::getline(ss, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) {
                line = line.substr(0, hash);
            }
            line = trim(line);
            if (line.empty()) {
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("scenario line " + std::to_string(line_no) +
                                            ": expected key = value");
            }
            apply(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
        }
    }
    validate(cfg);
    return cfg;
}

ScenarioConfig load_scenario(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open scenario file: " + path);
    }
    std::stringstream ss;
    ss << in.rdbuf();
    const bool json = path.size() >= 5 && path.substr(path.size() - 5) == ".json";
    return parse_scenario(ss.str(), json);
}

std::string canonical_config(const ScenarioConfig& cfg) {
    std::string s;
    s += "rb_size = " + std::to_string(cfg.rb_size) + "\n";
    s += "base_fft = " + std::to_string(cfg.base_fft) + "\n";
    s += "base_scs_hz = " + fmt(cfg.base_scs_hz) + "\n";
    s += "cp_fraction = " + fmt(cfg.cp_fraction) + "\n";
    s += "block_len_rbgs = " + std::to_string(cfg.block_len_rbgs) + "\n";
    s += "bands = ";
    for (size_t i = 0; i < cfg.bands.size(); ++i) {
        s += (i ? "," : "") + std::to_string(cfg.bands[i].first) + ":" +
             std::to_string(cfg.bands[i].second);
    }
    s += "\n";
    s += "n_bs = " + std::to_string(cfg.n_bs) + "\n";
    s += "ues_per_cell = " + std::to_string(cfg.ues_per_cell) + "\n";
    s += "cell_radius_m = " + fmt(cfg.cell_radius_m) + "\n";
    s += "inter_bs_m = " + fmt(cfg.inter_bs_m) + "\n";
    s += "min_ue_dist_m = " + fmt(cfg.min_ue_dist_m) + "\n";
    s += "fc_ghz = " + fmt(cfg.fc_ghz) + "\n";
    s += "n_taps = " + std::to_string(cfg.n_taps) + "\n";
    s += "noise_psd_dbm_hz = " + fmt(cfg.noise_psd_dbm_hz) + "\n";
    s += "max_rb_dbm = " + fmt(cfg.max_rb_dbm) + "\n";
    s += "max_bs_dbm = " + fmt(cfg.max_bs_dbm) + "\n";
    s += "with_noise = " + std::string(cfg.with_noise ? "true" : "false") + "\n";
    s += "cfo_range = " + fmt(cfg.cfo_range) + "\n";
    s += "sync_range_samples = " + fmt(cfg.sync_range_samples) + "\n";
    s += "fixed_interferer_to = " + std::to_string(cfg.fixed_interferer_to) + "\n";
    s += "qam_orders = ";
    for (size_t i = 0; i < cfg.qam_orders.size(); ++i) {
        s += (i ? "," : "") + std::to_string(cfg.qam_orders[i]);
    }
    s += "\n";
    s += "fixed_qam = " + std::to_string(cfg.fixed_qam) + "\n";
    s += "group_size = " + std::to_string(cfg.group_size) + "\n";
    s += "n_blocks = " + std::to_string(cfg.n_blocks) + "\n";
    s += "gamma_min_db = " + fmt(cfg.gamma_min_db) + "\n";
    s += "gamma_max_db = " + fmt(cfg.gamma_max_db) + "\n";
    s += "gamma_margin_db = " + fmt(cfg.gamma_margin_db) + "\n";
    s += "retention = " + fmt(cfg.retention) + "\n";
    return s;
}

std::uint64_t scenario_hash(const ScenarioConfig& cfg) { return fnv1a64(canonical_config(cfg)); }

Scenario build_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
    validate(cfg);
    Scenario sc;
    sc.cfg = cfg;
    sc.hash = scenario_hash(cfg);
    sc.grid = build_grid(cfg.bands, cfg.rb_size, cfg.block_len_rbgs, cfg.base_fft,
                         cfg.cp_fraction, cfg.base_scs_hz);
    sc.noise_psd_w = cfg.with_noise ? dbm_to_watt(cfg.noise_psd_dbm_hz) : 0.0;

    Rng root(seed);
    Rng topo_rng = root.fork(1);
    sc.topo = build_topology(cfg.n_bs, cfg.ues_per_cell, topo_rng, cfg.cell_radius_m,
                             cfg.inter_bs_m, cfg.min_ue_dist_m);

    // Per-BS oscillator and sync errors; each UE's receive window and carrier
    // track its serving link, so the serving path has zero residual offset and
    // every other path keeps the difference. Negative residual delays (an
    // interferer arriving earlier than the serving signal) clamp to zero.
    Rng imp_rng = root.fork(2);
    const int n_ue = sc.topo.n_ue();
    std::vector<double> lo(static_cast<size_t>(cfg.n_bs));
    std::vector<double> sync(static_cast<size_t>(cfg.n_bs));
    for (int k = 0; k < cfg.n_bs; ++k) {
        lo[static_cast<size_t>(k)] = imp_rng.uniform(-cfg.cfo_range, cfg.cfo_range);
        sync[static_cast<size_t>(k)] = imp_rng.uniform(0.0, cfg.sync_range_samples);
    }
    const double fs = sc.grid.sample_rate_hz();
    Rng tap_rng = root.fork(3);
    sc.links.resize(static_cast<size_t>(cfg.n_bs));
    for (int k = 0; k < cfg.n_bs; ++k) {
        sc.links[static_cast<size_t>(k)].reserve(static_cast<size_t>(n_ue));
        for (int z = 0; z < n_ue; ++z) {
            const int serv = sc.topo.serving[static_cast<size_t>(z)];
            const double dist = distance(sc.topo.bs[static_cast<size_t>(k)],
                                         sc.topo.ue[static_cast<size_t>(z)]);
            const double dist_serv = distance(sc.topo.bs[static_cast<size_t>(serv)],
                                              sc.topo.ue[static_cast<size_t>(z)]);
            const double arrival = sync[static_cast<size_t>(k)] + dist / 299792458.0 * fs;
            const double anchor = sync[static_cast<size_t>(serv)] + dist_serv / 299792458.0 * fs;
            int to = std::max(0, static_cast<int>(std::lround(arrival - anchor)));
            if (cfg.fixed_interferer_to >= 0) {
                to = k == serv ? 0 : cfg.fixed_interferer_to;
            }
            const double cfo = lo[static_cast<size_t>(k)] - lo[static_cast<size_t>(serv)];
            sc.links[static_cast<size_t>(k)].push_back(sample_channel(
                tap_rng, cfg.n_taps, path_loss_db(dist, cfg.fc_ghz), cfo, to));
        }
    }

    sc.graph = build_graph(sc.grid, sc.links, sc.noise_psd_w);
    sc.selection = select_interferers(sc.grid, sc.topo, cfg.group_size);
    sc.probe_groups = unique_groups(sc.selection.groups);

    Rng qam_rng = root.fork(4);
    const int n_rb = sc.grid.n_rb();
    for (int k = 0; k < cfg.n_bs; ++k) {
        for (int d = 0; d < n_rb; ++d) {
            const int pick = qam_rng.uniform_int(0, static_cast<int>(cfg.qam_orders.size()) - 1);
            sc.qam_order_src.push_back(cfg.fixed_qam != 0 ? cfg.fixed_qam
                                                          : cfg.qam_orders[static_cast<size_t>(pick)]);
        }
    }

    AllocationProblem& al = sc.alloc;
    al.gains_w = sc.graph.steady();
    al.noise_w.resize(static_cast<size_t>(n_rb));
    for (int d = 0; d < n_rb; ++d) {
        // estimation subtracts the thermal floor, but the SINR model cannot
        // have a zero denominator; keep the physical floor even in noiseless
        // runs
        const double floor_w = sc.grid.rb_noise_watt(d, dbm_to_watt(cfg.noise_psd_dbm_hz));
        al.noise_w[static_cast<size_t>(d)] = floor_w;
    }
    al.serving = sc.topo.serving;
    al.n_bs = cfg.n_bs;
    al.n_ue = n_ue;
    al.n_rb = n_rb;
    al.n_blocks = cfg.n_blocks > 0 ? cfg.n_blocks : sc.selection.group_size;
    al.max_rb_w = dbm_to_watt(cfg.max_rb_dbm);
    al.max_bs_w = dbm_to_watt(cfg.max_bs_dbm);

    // SINR floors: random per (UE, RB), clamped a margin below the worst-case
    // SINR at equal power with every source active, so any assignment that
    // gives each (BS, RB) to one UE admits the equal-power point
    Rng gamma_rng = root.fork(5);
    al.gamma_lin.resize(n_ue, n_rb);
    const double p_eq = std::min(al.max_rb_w, al.max_bs_w / n_rb);
    for (int z = 0; z < n_ue; ++z) {
        for (int d = 0; d < n_rb; ++d) {
            const double own = al.own_gain(z, d) * p_eq;
            double denom = al.noise_w[static_cast<size_t>(d)];
            for (int k = 0; k < cfg.n_bs; ++k) {
                for (int l = 0; l < n_rb; ++l) {
                    if (k == al.serving[static_cast<size_t>(z)] && l == d) {
                        continue;
                    }
                    denom += p_eq * al.gains_w(al.src(k, l), al.dst(z, d));
                }
            }
            const double cap_db = lin_to_db(own / denom) - cfg.gamma_margin_db;
            const double draw_db = gamma_rng.uniform(cfg.gamma_min_db, cfg.gamma_max_db);
            al.gamma_lin(z, d) = db_to_lin(std::min(draw_db, cap_db));
        }
    }
    return sc;
}

std::vector<TxPlan> make_plans(const Scenario& sc, const TransmitPowerMatrix& design) {
    if (design.n_bs != sc.alloc.n_bs || design.n_rb != sc.alloc.n_rb) {
        throw std::invalid_argument("design shape does not match the scenario");
    }
    std::vector<TxPlan> plans;
    plans.reserve(static_cast<size_t>(design.n_bs));
    for (int k = 0; k < design.n_bs; ++k) {
        TxPlan plan;
        plan.rb_power_w.resize(design.n_blocks(), design.n_rb);
        for (int l = 0; l < design.n_blocks(); ++l) {
            for (int d = 0; d < design.n_rb; ++d) {
                plan.rb_power_w(l, d) = design.entries_w(l, design.src_index(k, d));
            }
        }
        for (int d = 0; d < design.n_rb; ++d) {
            plan.rb_qam_order.push_back(
                sc.qam_order_src[static_cast<size_t>(design.src_index(k, d))]);
        }
        plans.push_back(std::move(plan));
    }
    return plans;
}

}  // namespace mnige
