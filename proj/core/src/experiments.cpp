#include "mnige/experiments.hpp"

#include "mnige/estimator.hpp"
#include "mnige/gain_oracle.hpp"
#include "mnige/optimizer.hpp"
#include "mnige/phy.hpp"
#include "mnige/power_design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace mnige {

namespace {

using Rows = std::vector<MetricRow>;

void put(Rows& rows, const char* exp, std::uint64_t seed, std::string group, std::string metric,
         double value) {
    rows.push_back({exp, seed, std::move(group), std::move(metric), value});
}

std::vector<double> pick(const Rows& rows, const std::string& metric,
                         const std::string& group = "") {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.metric == metric && (group.empty() || r.group == group)) {
            v.push_back(r.value);
        }
    }
    return v;
}

std::vector<double> pick_any(const Rows& rows, const std::string& metric,
                             const std::vector<std::string>& groups) {
    std::vector<double> v;
    for (const auto& r : rows) {
        if (r.metric != metric) {
            continue;
        }
        for (const auto& g : groups) {
            if (r.group == g) {
                v.push_back(r.value);
                break;
            }
        }
    }
    return v;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

CheckResult check(std::string name, bool pass, std::string detail) {
    return {std::move(name), pass, std::move(detail)};
}

// 10 dB bands below the sink's strongest incoming gain; 3 collects everything
// 30 dB or more down
int drop_band(double gain, double strongest) {
    if (gain <= 0.0 || strongest <= 0.0) {
        return 3;
    }
    const double drop = 10.0 * std::log10(strongest / gain);
    return drop < 10.0 ? 0 : drop < 20.0 ? 1 : drop < 30.0 ? 2 : 3;
}

const std::vector<std::string> kBandSuffixes = {"_band0", "_band1", "_band2"};

std::vector<std::string> banded(const std::string& tag) {
    std::vector<std::string> g;
    for (const auto& s : kBandSuffixes) {
        g.push_back(tag + s);
    }
    return g;
}

double equal_power(const AllocationProblem& al) {
    return std::min(al.max_rb_w, al.max_bs_w / al.n_rb);
}

// per-block scaling width used when a repeated-row power plan has to be made
// identifiable without redesigning it
constexpr double kProbeSpread = 0.2;

// simulate one probing period under a designed power matrix and emit per-link
// log-domain estimation errors, banded by gain strength at each sink.
// Nonpositive estimates count as a capped 60 dB failure rather than vanish.
void estimation_rows(Rows& rows, const char* exp, std::uint64_t seed, const Scenario& sc,
                     const TransmitPowerMatrix& design, const std::string& tag, Rng sim_rng) {
    const auto plans = make_plans(sc, design);
    const auto measured = simulate_period(sc.grid, plans, sc.links, sc.noise_psd_w, sim_rng, 1);
    const EstimatedGraph est =
        estimate_gains(design, measured, sc.grid, sc.selection, sc.graph.noise_w);
    const Eigen::MatrixXd truth = sc.graph.steady();
    const int n_rb = sc.grid.n_rb();
    for (int z = 0; z < sc.topo.n_ue(); ++z) {
        for (int d = 0; d < n_rb; ++d) {
            const int sink = sc.graph.dst_index(z, d);
            const double strongest = truth.col(sink).maxCoeff();
            for (const int src : sc.selection.group(z, d, n_rb)) {
                const double s_true = truth(src, sink);
                const auto err = log_error_db(est.s_hat(src, sink), s_true);
                const double e = err ? std::min(*err, 60.0) : 60.0;
                put(rows, exp, seed, tag + "_band" + std::to_string(drop_band(s_true, strongest)),
                    "log_err", e);
            }
        }
    }
}

// constant-power square-ish design: every source holds one random level for
// all blocks
TransmitPowerMatrix constant_design(const Scenario& sc, int n_blocks, Rng& rng) {
    TransmitPowerMatrix d;
    d.n_bs = sc.alloc.n_bs;
    d.n_rb = sc.alloc.n_rb;
    d.entries_w.resize(n_blocks, sc.n_src());
    const double p_eq = equal_power(sc.alloc);
    for (int s = 0; s < sc.n_src(); ++s) {
        d.entries_w.col(s).setConstant(rng.uniform(0.2, 1.0) * p_eq);
    }
    return d;
}

// ---- linearity: received power is the designed linear map of transmit power

Rows linearity_seed(const ScenarioConfig& base, std::uint64_t seed) {
    ScenarioConfig c = base;
    c.ues_per_cell = 1;       // sinks beyond one per cell add nothing to the law
    c.with_noise = false;
    c.fixed_interferer_to = 0;  // CP always exceeds the timing offset
    c.block_len_rbgs = 100;
    validate(c);
    const Scenario sc = build_scenario(c, seed);
    Rng rng(seed);
    Rng design_rng = rng.fork(0x10);
    const int rounds = 10;
    const int blocks_per_round = 10;  // 10 x 10 x 100 RBGs: 1e4 symbols per RB
    const TransmitPowerMatrix design = constant_design(sc, blocks_per_round, design_rng);
    const auto plans = make_plans(sc, design);
    const int n_ue = sc.topo.n_ue();
    const int n_rb = sc.grid.n_rb();
    Eigen::MatrixXd mean_meas = Eigen::MatrixXd::Zero(n_ue, n_rb);
    for (int r = 0; r < rounds; ++r) {
        Rng sim_rng = rng.fork(0x100 + static_cast<std::uint64_t>(r));
        const auto measured = simulate_period(sc.grid, plans, sc.links, 0.0, sim_rng, 1);
        for (int z = 0; z < n_ue; ++z) {
            mean_meas.row(z) += measured[static_cast<size_t>(z)].colwise().mean();
        }
    }
    mean_meas /= rounds;
    const Eigen::MatrixXd truth = sc.graph.steady();
    Rows rows;
    for (int z = 0; z < n_ue; ++z) {
        for (int d = 0; d < n_rb; ++d) {
            double pred = 0.0;
            for (int s = 0; s < sc.n_src(); ++s) {
                pred += design.entries_w(0, s) * truth(s, sc.graph.dst_index(z, d));
            }
            const double rel = std::abs(mean_meas(z, d) - pred) / pred;
            put(rows, "linearity", seed, "mu" + std::to_string(sc.grid.mu(d)), "rel_err", rel);
        }
    }
    return rows;
}

std::vector<CheckResult> linearity_checks(const Rows& rows) {
    const auto errs = pick(rows, "rel_err");
    const double p90 = quantile(errs, 0.90);
    const double p50 = median(errs);
    return {check("rx_power_linear_p90", p90 <= 0.03,
                  "90th-pct relative error " + num(p90) + " (limit 0.03), median " + num(p50))};
}

// ---- bennett: measured-power concentration against the analytic bound

Rows bennett_seed(const ScenarioConfig& base, std::uint64_t seed) {
    Rows rows;
    // deviation-frequency cells, pooled across seeds to 1e4 trials per cell
    {
        const Constellation qam = Constellation::square_qam(16);
        std::vector<double> pw;
        for (const cd& pt : qam.points) {
            pw.push_back(std::norm(pt) / qam.mean_power);
        }
        Rng mc = Rng(seed).fork(0x20);
        const int trials = 2000;
        for (const double delta : {0.02, 0.05, 0.1}) {
            for (const int n : {100, 1000, 10000}) {
                int hits = 0;
                for (int t = 0; t < trials; ++t) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        acc += pw[static_cast<size_t>(
                            mc.uniform_int(0, static_cast<int>(pw.size()) - 1))];
                    }
                    hits += std::abs(acc / n - 1.0) >= delta;
                }
                const std::string g = "d" + num(delta) + "_n" + std::to_string(n);
                put(rows, "bennett", seed, g, "emp_freq", static_cast<double>(hits) / trials);
                put(rows, "bennett", seed, g, "bound",
                    bennett_deviation_bound(16, delta, static_cast<double>(n)));
            }
        }
    }
    // realized vs designed transmit power per RB over one 2-slot block:
    // the mean of n = symbols * B unit-mean QAM powers, 16-QAM
    {
        const Constellation qam = Constellation::square_qam(16);
        std::vector<double> pw;
        for (const cd& pt : qam.points) {
            pw.push_back(std::norm(pt) / qam.mean_power);
        }
        const ResourceGrid grid = build_grid(base.bands, base.rb_size, base.block_len_rbgs,
                                             base.base_fft, base.cp_fraction, base.base_scs_hz);
        Rng tx = Rng(seed).fork(0x21);
        const int trials = 100;
        for (int rb = 0; rb < grid.n_rb(); ++rb) {
            const int n = grid.symbols_per_block(rb) * grid.rb_size;
            for (int t = 0; t < trials; ++t) {
                double acc = 0.0;
                for (int i = 0; i < n; ++i) {
                    acc +=
                        pw[static_cast<size_t>(tx.uniform_int(0, static_cast<int>(pw.size()) - 1))];
                }
                put(rows, "bennett", seed, "mu" + std::to_string(grid.mu(rb)), "rel_err_2slot",
                    std::abs(acc / n - 1.0));
            }
        }
    }
    return rows;
}

std::vector<CheckResult> bennett_checks(const Rows& rows) {
    std::vector<CheckResult> out;
    bool cells_ok = true;
    std::string worst;
    for (const double delta : {0.02, 0.05, 0.1}) {
        for (const int n : {100, 1000, 10000}) {
            const std::string g = "d" + num(delta) + "_n" + std::to_string(n);
            const auto emp = pick(rows, "emp_freq", g);
            const auto bnd = pick(rows, "bound", g);
            double mean_emp = 0.0;
            for (const double e : emp) {
                mean_emp += e;
            }
            mean_emp /= static_cast<double>(emp.size());
            if (mean_emp > bnd.front()) {
                cells_ok = false;
                worst = g + ": " + num(mean_emp) + " > " + num(bnd.front());
            }
        }
    }
    out.push_back(check("deviation_bound_majorizes", cells_ok,
                        cells_ok ? "empirical frequency under the bound in all 9 cells" : worst));
    const auto errs = pick(rows, "rel_err_2slot");
    const double p75 = quantile(errs, 0.75) * 100.0;
    const double p90 = quantile(errs, 0.90) * 100.0;
    out.push_back(check("two_slot_p75", std::abs(p75 - 2.5) <= 1.0,
                        "75th-pct power error " + num(p75) + "% (anchor 2.5 +- 1)"));
    out.push_back(check("two_slot_p90", std::abs(p90 - 4.6) <= 1.0,
                        "90th-pct power error " + num(p90) + "% (anchor 4.6 +- 1)"));
    return out;
}

// ---- decay: off-channel leakage falls off and stays under the envelope

Rows decay_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const ResourceGrid grid = build_grid(base.bands, base.rb_size, base.block_len_rbgs,
                                         base.base_fft, base.cp_fraction, base.base_scs_hz);
    Rows rows;
    // exact RB couplings of the deployed layout through an ideal aligned link
    LinkChannel ideal;
    ideal.taps = {cd(1.0, 0.0)};
    const GainOracle oracle(grid, ideal);
    const int n_rb = grid.n_rb();
    Eigen::MatrixXd s(n_rb, n_rb);
    for (int l = 0; l < n_rb; ++l) {
        for (int d = 0; d < n_rb; ++d) {
            s(l, d) = oracle.rb_gain(l, d).steady();
            put(rows, "decay", seed, "src" + std::to_string(l), "gain_d" + std::to_string(d),
                s(l, d));
        }
    }
    for (int l = 0; l < n_rb; ++l) {
        for (int d = 0; d < n_rb; ++d) {
            if (l != d) {
                put(rows, "decay", seed, "sep" + std::to_string(std::abs(l - d)), "off_ratio",
                    s(l, d) / s(d, d));
            }
        }
    }
    const Numerology& num0 = grid.numerologies.front();
    for (const Numerology& dst : grid.numerologies) {
        if (dst.index == num0.index) {
            continue;
        }
        for (int delta = grid.rb_size; delta <= num0.n_fft / 8; ++delta) {
            const double g = gain_subcarrier_cross(num0, dst, delta, 0);
            const DecayBound bound = decay_bound(dst.index, delta, grid.rb_size);
            put(rows, "decay", seed, "envmu" + std::to_string(dst.index), "env_ratio",
                g / bound.envelope);
        }
    }
    return rows;
}

std::vector<CheckResult> decay_checks(const Rows& rows) {
    // off_ratio groups sep1, sep2, ... : sep>=2 means at least one full RB of
    // spectral separation, the regime the 20 dB claim covers
    double worst = 0.0;
    double worst_edge = 0.0;
    for (const auto& r : rows) {
        if (r.metric != "off_ratio") {
            continue;
        }
        if (r.group == "sep1") {
            worst_edge = std::max(worst_edge, r.value);
        } else {
            worst = std::max(worst, r.value);
        }
    }
    const auto env = pick(rows, "env_ratio");
    const double worst_env = *std::max_element(env.begin(), env.end());
    return {check("one_rb_away_isolation", worst <= 0.01,
                  "worst separated/co-channel RB gain ratio " + num(worst) +
                      " (limit 0.01); edge-adjacent reaches " + num(worst_edge)),
            check("envelope_majorizes", worst_env <= 1.0 + 1e-9,
                  "worst gain/envelope ratio " + num(worst_env) + " over offsets 12..N/8")};
}

// ---- shared optimization pipeline pieces ------------------------------------

struct DesignedRun {
    P2Result p2;
    BlockPowers seeded;  // EE-only powers after the probing scaling pass
    P31Result p31;
    P32Result p32;
};

DesignedRun optimize_pipeline(const Scenario& sc, Rng& rng, double retention) {
    DesignedRun run;
    run.p2 = solve_p2(sc.alloc, rng);
    if (!run.p2.feasible) {
        throw std::runtime_error("scheduling stage infeasible: " + run.p2.message);
    }
    // the EE optimum repeats rows across blocks; the scaling pass makes it
    // probe-usable and gives the rank stage a nonzero smallest singular
    // value to grow, without which the eigenspace cuts cannot see rotations
    Rng scale_rng = rng.fork(0x33);
    run.seeded = scale_to_full_rank(run.p2.power_w, kProbeSpread, scale_rng);
    run.p31 = solve_p3_rank(sc.alloc, run.p2.assignment, run.seeded, run.p2.lambda,
                            sc.probe_groups);
    if (!run.p31.feasible) {
        throw std::runtime_error("rank stage infeasible: " + run.p31.message);
    }
    P3Options opts;
    opts.retention = retention;
    run.p32 = solve_p3_condition(sc.alloc, run.p2.assignment, run.p31, sc.probe_groups, opts);
    if (!run.p32.feasible) {
        throw std::runtime_error("conditioning stage infeasible: " + run.p32.message);
    }
    return run;
}

// ---- ige_error: estimation accuracy under the designed probing matrix

Rows ige_error_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const Scenario sc = build_scenario(base, seed);
    Rng rng(seed);
    Rng opt_rng = rng.fork(0x30);
    const DesignedRun run = optimize_pipeline(sc, opt_rng, base.retention);
    Rows rows;
    // the EE-only design is the scaled schedule: probe-usable but
    // deliberately ill-conditioned, unlike the shaped stage output
    const TransmitPowerMatrix m2 = to_power_matrix(sc.alloc, run.seeded);
    const TransmitPowerMatrix m3 = to_power_matrix(sc.alloc, run.p32.power_w);
    estimation_rows(rows, "ige_error", seed, sc, m2, "p2", rng.fork(0x31));
    estimation_rows(rows, "ige_error", seed, sc, m3, "p3", rng.fork(0x31));
    return rows;
}

std::vector<CheckResult> ige_error_checks(const Rows& rows) {
    std::vector<CheckResult> out;
    const auto strong = pick_any(rows, "log_err", banded("p3"));
    const double med3 = median(strong);
    out.push_back(check("designed_median_error", med3 < 0.5,
                        "median |log error| " + num(med3) +
                            " dB within 30 dB of the strongest gain (limit 0.5)"));
    bool ordering = true;
    std::string detail;
    for (int b = 0; b < 3; ++b) {
        const auto e2 = pick(rows, "log_err", "p2_band" + std::to_string(b));
        const auto e3 = pick(rows, "log_err", "p3_band" + std::to_string(b));
        if (e2.empty() || e3.empty()) {
            continue;
        }
        const double m2 = median(e2);
        const double m3 = median(e3);
        detail += "band" + std::to_string(b) + ": " + num(m2) + " vs " + num(m3) + " dB; ";
        ordering = ordering && m2 > m3;
    }
    out.push_back(check("ee_only_design_worse", ordering, detail + "(EE-only vs conditioned)"));
    return out;
}

// ---- q_ratio: inter-block leakage share under a large sync error

int numerology1_cp(const ResourceGrid& grid) {
    for (const Numerology& n : grid.numerologies) {
        if (n.index == 1) {
            return n.n_cp;
        }
    }
    return grid.base_cp / 2;
}

Rows q_ratio_seed(const ScenarioConfig& base, std::uint64_t seed) {
    ScenarioConfig c = base;
    c.block_len_rbgs = 2;
    const ResourceGrid probe = build_grid(c.bands, c.rb_size, c.block_len_rbgs, c.base_fft,
                                          c.cp_fraction, c.base_scs_hz);
    c.fixed_interferer_to = 2 * numerology1_cp(probe);
    validate(c);
    const Scenario sc = build_scenario(c, seed);
    const Eigen::MatrixXd steady = sc.graph.steady();
    Rows rows;
    const int n_rb = sc.grid.n_rb();
    for (int z = 0; z < sc.topo.n_ue(); ++z) {
        for (int d = 0; d < n_rb; ++d) {
            const int sink = sc.graph.dst_index(z, d);
            // the CP analysis covers co-channel couplings; keep those within
            // 30 dB of the sink's strongest one
            double strongest = 0.0;
            for (int k = 0; k < sc.topo.n_bs(); ++k) {
                strongest = std::max(strongest, steady(sc.graph.src_index(k, d), sink));
            }
            for (int k = 0; k < sc.topo.n_bs(); ++k) {
                const int s = sc.graph.src_index(k, d);
                if (steady(s, sink) < strongest * 1e-3) {
                    continue;
                }
                const double ratio = sc.graph.q_prev(s, sink) / sc.graph.s_cur(s, sink);
                put(rows, "q_ratio", seed, "mu" + std::to_string(sc.grid.mu(d)), "q_over_s",
                    ratio);
            }
            for (int s = 0; s < sc.n_src(); ++s) {
                if (s % n_rb == d || steady(s, sink) < strongest * 1e-3) {
                    continue;
                }
                put(rows, "q_ratio", seed, "offchannel", "q_over_s_cross",
                    sc.graph.q_prev(s, sink) / sc.graph.s_cur(s, sink));
            }
        }
    }
    for (const Numerology& n : sc.grid.numerologies) {
        put(rows, "q_ratio", seed, "mu" + std::to_string(n.index), "q_over_s_model",
            q_over_s_approx(n, c.n_taps, c.fixed_interferer_to, c.block_len_rbgs));
    }
    return rows;
}

std::vector<CheckResult> q_ratio_checks(const Rows& rows) {
    const auto ratios = pick(rows, "q_over_s");
    const double worst = *std::max_element(ratios.begin(), ratios.end());
    const double med = median(ratios);
    return {check("leakage_share", worst <= 0.05,
                  "worst q/s " + num(worst) + " at sync error 2 CP (limit 0.05), median " +
                      num(med))};
}

// ---- robustness_to: estimation error inflation from timing offsets

Rows robustness_to_seed(const ScenarioConfig& base, std::uint64_t seed) {
    Rows rows;
    const ResourceGrid probe = build_grid(base.bands, base.rb_size, base.block_len_rbgs,
                                          base.base_fft, base.cp_fraction, base.base_scs_hz);
    for (const int to : {0, 2 * numerology1_cp(probe)}) {
        ScenarioConfig c = base;
        c.fixed_interferer_to = to;
        validate(c);
        const Scenario sc = build_scenario(c, seed);
        Rng rng(seed);
        Rng design_rng = rng.fork(0x40);
        const TransmitPowerMatrix design = construct_full_rank(
            sc.grid, c.n_bs, {sc.alloc.max_rb_w, sc.alloc.max_bs_w}, design_rng);
        estimation_rows(rows, "robustness_to", seed, sc, design, "to" + std::to_string(to),
                        rng.fork(0x41));
    }
    return rows;
}

std::vector<CheckResult> robustness_to_checks(const Rows& rows) {
    std::string zero_tag = "to0";
    std::string off_tag;
    for (const auto& r : rows) {  // the nonzero offset tag depends on the grid
        if (r.metric == "log_err" && r.group.rfind("to0_", 0) != 0) {
            off_tag = r.group.substr(0, r.group.find("_band"));
            break;
        }
    }
    const double med0 = median(pick_any(rows, "log_err", banded(zero_tag)));
    const double med1 = median(pick_any(rows, "log_err", banded(off_tag)));
    return {check("timing_offset_inflation", med1 - med0 < 1.0,
                  "median |log error| " + num(med0) + " -> " + num(med1) +
                      " dB at sync error 2 CP (inflation limit 1 dB)")};
}

// ---- robustness_cfo: estimation error across oscillator error ranges

Rows robustness_cfo_seed(const ScenarioConfig& base, std::uint64_t seed) {
    Rows rows;
    const std::vector<std::pair<double, const char*>> ranges = {
        {0.0, "cfo0"}, {0.25, "cfo25"}, {0.5, "cfo50"}};
    for (const auto& [range, tag] : ranges) {
        ScenarioConfig c = base;
        c.cfo_range = range;
        validate(c);
        const Scenario sc = build_scenario(c, seed);
        Rng rng(seed);
        Rng design_rng = rng.fork(0x48);
        const TransmitPowerMatrix design = construct_full_rank(
            sc.grid, c.n_bs, {sc.alloc.max_rb_w, sc.alloc.max_bs_w}, design_rng);
        estimation_rows(rows, "robustness_cfo", seed, sc, design, tag, rng.fork(0x49));
    }
    return rows;
}

std::vector<CheckResult> robustness_cfo_checks(const Rows& rows) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    std::string detail;
    for (const char* tag : {"cfo0", "cfo25", "cfo50"}) {
        const double med = median(pick(rows, "log_err", std::string(tag) + "_band0"));
        lo = std::min(lo, med);
        hi = std::max(hi, med);
        detail += std::string(tag) + "=" + num(med) + " dB; ";
    }
    return {check("cfo_insensitivity", hi - lo < 1.0,
                  detail + "strong-gain median spread limit 1 dB")};
}

// ---- condition_numbers: per-group conditioning before and after shaping

Rows condition_numbers_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const Scenario sc = build_scenario(base, seed);
    Rng rng(seed);
    Rng opt_rng = rng.fork(0x30);
    const DesignedRun run = optimize_pipeline(sc, opt_rng, base.retention);
    Rows rows;
    const TransmitPowerMatrix m2 = to_power_matrix(sc.alloc, run.seeded);
    for (const GroupCheck& g : verify_groups(m2, sc.probe_groups)) {
        put(rows, "condition_numbers", seed, "pre", "kappa", g.kappa);
    }
    for (const double k : run.p32.kappa) {
        put(rows, "condition_numbers", seed, "post", "kappa", k);
    }
    put(rows, "condition_numbers", seed, "p32", "ee_ok",
        run.p32.ee >= run.p32.ee_floor * (1.0 - 1e-6) ? 1.0 : 0.0);
    put(rows, "condition_numbers", seed, "p32", "ee_over_floor", run.p32.ee / run.p32.ee_floor);
    return rows;
}

std::vector<CheckResult> condition_numbers_checks(const Rows& rows) {
    std::vector<CheckResult> out;
    const auto pre = pick(rows, "kappa", "pre");
    const double med_pre = median(pre);
    int in_range = 0;
    for (const double k : pre) {
        in_range += k >= 100.0 && k <= 2000.0;
    }
    const double frac_pre = static_cast<double>(in_range) / static_cast<double>(pre.size());
    out.push_back(check("preshaping_kappa_range",
                        med_pre >= 100.0 && med_pre <= 2000.0 && frac_pre >= 0.5,
                        "EE-only design: median kappa " + num(med_pre) + ", " +
                            num(100.0 * frac_pre) + "% of groups in [100, 2000]"));
    const auto post = pick(rows, "kappa", "post");
    int small = 0;
    for (const double k : post) {
        small += k < 30.0;
    }
    const double frac_post = static_cast<double>(small) / static_cast<double>(post.size());
    out.push_back(check("postshaping_kappa_small", frac_post >= 0.8,
                        num(100.0 * frac_post) + "% of groups below kappa 30 (need 80%)"));
    const auto ok = pick(rows, "ee_ok");
    const bool all_ok = std::all_of(ok.begin(), ok.end(), [](double v) { return v == 1.0; });
    out.push_back(check("ee_floor_held", all_ok,
                        "conditioned EE stayed above the retention floor on every seed"));
    return out;
}

// ---- convergence: iteration traces of all three stages

Rows convergence_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const Scenario sc = build_scenario(base, seed);
    Rng rng(seed);
    Rng opt_rng = rng.fork(0x30);
    const DesignedRun run = optimize_pipeline(sc, opt_rng, base.retention);
    Rows rows;
    for (size_t i = 0; i < run.p2.lambda_trace.size(); ++i) {
        put(rows, "convergence", seed, "t" + std::to_string(i), "lambda",
            run.p2.lambda_trace[i]);
    }
    put(rows, "convergence", seed, "p2", "sca_iters_max", run.p2.sca_iters_max);
    put(rows, "convergence", seed, "p2", "dinkelbach_iters", run.p2.dinkelbach_iters);
    for (size_t i = 0; i < run.p31.e_trace.size(); ++i) {
        put(rows, "convergence", seed, "t" + std::to_string(i), "e_rank", run.p31.e_trace[i]);
    }
    put(rows, "convergence", seed, "p31", "rank_converged", run.p31.rank_ok ? 1.0 : 0.0);
    put(rows, "convergence", seed, "p31", "rank_iters", run.p31.iters);
    for (size_t i = 0; i < run.p32.e_trace.size(); ++i) {
        put(rows, "convergence", seed, "t" + std::to_string(i), "e_cond", run.p32.e_trace[i]);
    }
    put(rows, "convergence", seed, "p32", "cond_iters", run.p32.iters);
    return rows;
}

std::vector<CheckResult> convergence_checks(const Rows& rows) {
    std::vector<std::uint64_t> seeds;
    for (const auto& r : rows) {
        if (std::find(seeds.begin(), seeds.end(), r.seed) == seeds.end()) {
            seeds.push_back(r.seed);
        }
    }
    const auto trace_of = [&rows](std::uint64_t seed, const std::string& metric) {
        std::vector<std::pair<int, double>> t;
        for (const auto& r : rows) {
            if (r.seed == seed && r.metric == metric && r.group.size() > 1 &&
                r.group[0] == 't') {
                t.emplace_back(std::stoi(r.group.substr(1)), r.value);
            }
        }
        std::sort(t.begin(), t.end());
        std::vector<double> v;
        for (const auto& [i, x] : t) {
            v.push_back(x);
        }
        return v;
    };
    bool lambda_mono = true;
    bool sca_ok = true;
    bool rank_ok = true;
    bool traces_mono = true;
    std::string detail;
    for (const std::uint64_t s : seeds) {
        const auto lt = trace_of(s, "lambda");
        for (size_t i = 1; i < lt.size(); ++i) {
            lambda_mono = lambda_mono && lt[i] >= lt[i - 1] - 1e-6 * (1.0 + std::abs(lt[i]));
        }
        for (const auto& r : rows) {
            if (r.seed != s) {
                continue;
            }
            if (r.metric == "sca_iters_max") {
                sca_ok = sca_ok && r.value <= 10.0;
            }
            if (r.metric == "rank_converged") {
                rank_ok = rank_ok && r.value == 1.0;
            }
            if (r.metric == "rank_iters") {
                rank_ok = rank_ok && r.value <= 30.0;
                detail += "rank iters " + num(r.value) + "; ";
            }
        }
        for (const char* m : {"e_rank", "e_cond"}) {
            const auto et = trace_of(s, m);
            for (size_t i = 1; i < et.size(); ++i) {
                traces_mono = traces_mono && et[i] <= et[i - 1] * (1.0 + 1e-9);
            }
        }
    }
    return {check("ratio_trace_nondecreasing", lambda_mono,
                  "Dinkelbach ratio rises monotonically on every seed"),
            check("inner_loop_budget", sca_ok, "SCA passes within the 10-iteration cap"),
            check("rank_stage_converged", rank_ok, detail + "(cap 30)"),
            check("residual_traces_nonincreasing", traces_mono,
                  "rank and spread residuals never increase")};
}

// ---- pareto: EE floor sweep against conditioning effort

Rows pareto_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const Scenario sc = build_scenario(base, seed);
    Rng rng(seed);
    Rng opt_rng = rng.fork(0x30);
    P2Result p2 = solve_p2(sc.alloc, opt_rng);
    if (!p2.feasible) {
        throw std::runtime_error("scheduling stage infeasible: " + p2.message);
    }
    Rng scale_rng = opt_rng.fork(0x33);
    const BlockPowers seeded = scale_to_full_rank(p2.power_w, kProbeSpread, scale_rng);
    P31Result p31 =
        solve_p3_rank(sc.alloc, p2.assignment, seeded, p2.lambda, sc.probe_groups);
    const std::vector<double> retentions = {0.99, 0.95, 0.9, 0.8};
    const auto points = pareto_sweep(sc.alloc, p2.assignment, p31, sc.probe_groups, retentions);
    Rows rows;
    for (const ParetoPoint& pt : points) {
        char tag[16];
        std::snprintf(tag, sizeof(tag), "r%.2f", pt.retention);
        put(rows, "pareto", seed, tag, "ee", pt.ee);
        put(rows, "pareto", seed, tag, "kappa_sum", pt.kappa_sum);
        put(rows, "pareto", seed, tag, "feasible", pt.feasible ? 1.0 : 0.0);
    }
    return rows;
}

std::vector<CheckResult> pareto_checks(const Rows& rows) {
    const std::vector<std::string> order = {"r0.99", "r0.95", "r0.90", "r0.80"};
    std::vector<double> ee;
    std::vector<double> ks;
    bool feasible = true;
    for (const auto& g : order) {
        ee.push_back(median(pick(rows, "ee", g)));
        ks.push_back(median(pick(rows, "kappa_sum", g)));
        for (const double f : pick(rows, "feasible", g)) {
            feasible = feasible && f == 1.0;
        }
    }
    bool ee_mono = true;
    bool ks_mono = true;
    std::string detail;
    for (size_t i = 1; i < order.size(); ++i) {
        ee_mono = ee_mono && ee[i] <= ee[i - 1] * 1.01;
        ks_mono = ks_mono && ks[i] <= ks[i - 1] * 1.05;
    }
    for (size_t i = 0; i < order.size(); ++i) {
        detail += order[i] + ": EE " + num(ee[i]) + ", sum kappa " + num(ks[i]) + "; ";
    }
    return {check("sweep_feasible", feasible, "every floor admitted a conditioned design"),
            check("front_monotone", ee_mono && ks_mono, detail)};
}

// ---- ee_loss: cost of conditioning across network sizes

Rows ee_loss_seed(const ScenarioConfig& base, std::uint64_t seed) {
    Rows rows;
    for (const int n_bs : {3, 4, 5, 6}) {
        ScenarioConfig c = base;
        c.n_bs = n_bs;
        validate(c);
        const Scenario sc = build_scenario(c, seed);
        Rng rng(seed);
        Rng opt_rng = rng.fork(0x30);
        const DesignedRun run = optimize_pipeline(sc, opt_rng, base.retention);
        const double loss = 1.0 - run.p32.ee / run.p2.lambda;
        const std::string tag = "bs" + std::to_string(n_bs);
        put(rows, "ee_loss", seed, tag, "ee_loss", loss);
        put(rows, "ee_loss", seed, tag, "ee_schedule_only", run.p2.lambda);
        put(rows, "ee_loss", seed, tag, "ee_conditioned", run.p32.ee);
    }
    return rows;
}

std::vector<CheckResult> ee_loss_checks(const Rows& rows) {
    std::vector<double> med;
    std::string detail;
    for (const int n_bs : {3, 4, 5, 6}) {
        med.push_back(median(pick(rows, "ee_loss", "bs" + std::to_string(n_bs))));
        detail += "bs" + std::to_string(n_bs) + ": " + num(100.0 * med.back()) + "%; ";
    }
    bool trend = true;
    for (size_t i = 1; i < med.size(); ++i) {
        trend = trend && med[i] <= med[i - 1] + 0.03;
    }
    return {check("small_network_loss", med.front() <= 0.08,
                  "median EE loss " + num(100.0 * med.front()) + "% at 3 BSs (limit 8%)"),
            check("loss_trend", trend, detail + "(each step within +3 points)")};
}

// ---- baseline_model: estimation against the distance-only prediction

Rows baseline_model_seed(const ScenarioConfig& base, std::uint64_t seed) {
    const Scenario sc = build_scenario(base, seed);
    Rng rng(seed);
    Rng design_rng = rng.fork(0x50);
    const TransmitPowerMatrix design = construct_full_rank(
        sc.grid, base.n_bs, {sc.alloc.max_rb_w, sc.alloc.max_bs_w}, design_rng);
    Rows rows;
    estimation_rows(rows, "baseline_model", seed, sc, design, "estimator", rng.fork(0x51));
    const Eigen::MatrixXd model = model_based_baseline(sc.grid, sc.topo, base.fc_ghz);
    const Eigen::MatrixXd truth = sc.graph.steady();
    const int n_rb = sc.grid.n_rb();
    for (int z = 0; z < sc.topo.n_ue(); ++z) {
        for (int d = 0; d < n_rb; ++d) {
            const int sink = sc.graph.dst_index(z, d);
            const double strongest = truth.col(sink).maxCoeff();
            for (const int src : sc.selection.group(z, d, n_rb)) {
                const double s_true = truth(src, sink);
                const auto err = log_error_db(model(src, sink), s_true);
                const double e = err ? std::min(*err, 60.0) : 60.0;
                put(rows, "baseline_model", seed,
                    "model_band" + std::to_string(drop_band(s_true, strongest)), "log_err", e);
            }
        }
    }
    return rows;
}

std::vector<CheckResult> baseline_model_checks(const Rows& rows) {
    const double est = median(pick_any(rows, "log_err", banded("estimator")));
    const double mdl = median(pick_any(rows, "log_err", banded("model")));
    return {check("beats_distance_model", est < mdl,
                  "median |log error| " + num(est) + " dB vs " + num(mdl) +
                      " dB for the distance-only prediction")};
}

// ---- registry ---------------------------------------------------------------

struct ExperimentDef {
    const char* name;
    Rows (*seed_fn)(const ScenarioConfig&, std::uint64_t);
    std::vector<CheckResult> (*final_fn)(const Rows&);
};

const ExperimentDef kExperiments[] = {
    {"linearity", linearity_seed, linearity_checks},
    {"bennett", bennett_seed, bennett_checks},
    {"decay", decay_seed, decay_checks},
    {"ige_error", ige_error_seed, ige_error_checks},
    {"q_ratio", q_ratio_seed, q_ratio_checks},
    {"robustness_to", robustness_to_seed, robustness_to_checks},
    {"robustness_cfo", robustness_cfo_seed, robustness_cfo_checks},
    {"condition_numbers", condition_numbers_seed, condition_numbers_checks},
    {"convergence", convergence_seed, convergence_checks},
    {"pareto", pareto_seed, pareto_checks},
    {"ee_loss", ee_loss_seed, ee_loss_checks},
    {"baseline_model", baseline_model_seed, baseline_model_checks},
};

std::vector<Rows> map_seeds(const ScenarioConfig& cfg, const std::vector<std::uint64_t>& seeds,
                            int workers, Rows (*fn)(const ScenarioConfig&, std::uint64_t)) {
    std::vector<Rows> out(seeds.size());
    int n = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
    n = std::max(1, std::min(n, static_cast<int>(seeds.size())));
    if (n == 1) {
        for (size_t i = 0; i < seeds.size(); ++i) {
            out[i] = fn(cfg, seeds[i]);
        }
        return out;
    }
    std::atomic<size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr err;
    auto work = [&] {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= seeds.size()) {
                return;
            }
            try {
                out[i] = fn(cfg, seeds[i]);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(err_mutex);
                if (!err) {
                    err = std::current_exception();
                }
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int i = 0; i < n; ++i) {
        pool.emplace_back(work);
    }
    for (auto& t : pool) {
        t.join();
    }
    if (err) {
        std::rethrow_exception(err);
    }
    return out;
}

}  // namespace

const std::vector<std::string>& experiment_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& e : kExperiments) {
            n.emplace_back(e.name);
        }
        return n;
    }();
    return names;
}

MetricsReport run_experiment(const ScenarioConfig& cfg, const std::string& name,
                             const std::vector<std::uint64_t>& seeds, int workers) {
    const ExperimentDef* def = nullptr;
    for (const auto& e : kExperiments) {
        if (name == e.name) {
            def = &e;
        }
    }
    if (def == nullptr) {
        std::string known;
        for (const auto& e : kExperiments) {
            known += std::string(" ") + e.name;
        }
        throw std::invalid_argument("unknown experiment '" + name + "'; known:" + known);
    }
    if (seeds.empty()) {
        throw std::invalid_argument("need at least one seed");
    }
    validate(cfg);
    MetricsReport rep;
    rep.experiment = name;
    rep.scenario_hash = scenario_hash(cfg);
    rep.seeds = seeds;
    const auto per_seed = map_seeds(cfg, seeds, workers, def->seed_fn);
    for (const Rows& rows : per_seed) {
        rep.rows.insert(rep.rows.end(), rows.begin(), rows.end());
    }
    rep.checks = def->final_fn(rep.rows);
    return rep;
}

}  // namespace mnige
