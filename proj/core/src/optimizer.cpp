#include "mnige/optimizer.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>

namespace mnige {

namespace {

using ipm::Affine;
using ipm::Expr;
using ipm::LmiBlock;
using ipm::Mat;
using ipm::Vec;

Eigen::MatrixXd bs_totals(const AllocationProblem& prob, const Eigen::MatrixXd& p_ue) {
    Eigen::MatrixXd tot = Eigen::MatrixXd::Zero(prob.n_bs, prob.n_rb);
    for (int z = 0; z < prob.n_ue; ++z) {
        tot.row(prob.serving[static_cast<size_t>(z)]) += p_ue.row(z);
    }
    return tot;
}

}  // namespace

double sum_rate(const AllocationProblem& prob, const BlockPowers& p_w) {
    double rate = 0.0;
    for (const Eigen::MatrixXd& p_ue : p_w) {
        const Eigen::MatrixXd tot = bs_totals(prob, p_ue);
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                const double own =
                    p_ue(z, d) * prob.own_gain(z, d);
                if (own <= 0.0) {
                    continue;
                }
                double q = prob.noise_w[static_cast<size_t>(d)];
                for (int k = 0; k < prob.n_bs; ++k) {
                    for (int l = 0; l < prob.n_rb; ++l) {
                        q += tot(k, l) * prob.gains_w(prob.src(k, l), prob.dst(z, d));
                    }
                }
                rate += std::log(q) - std::log(q - own);
            }
        }
    }
    return rate;
}

double total_power(const BlockPowers& p_w) {
    double p = 0.0;
    for (const Eigen::MatrixXd& m : p_w) {
        p += m.sum();
    }
    return p;
}

double energy_efficiency(const AllocationProblem& prob, const BlockPowers& p_w) {
    const double p = total_power(p_w);
    return p > 0.0 ? sum_rate(prob, p_w) / p : 0.0;
}

TransmitPowerMatrix to_power_matrix(const AllocationProblem& prob, const BlockPowers& p_w) {
    TransmitPowerMatrix out;
    out.n_bs = prob.n_bs;
    out.n_rb = prob.n_rb;
    out.entries_w.resize(static_cast<int>(p_w.size()), prob.n_bs * prob.n_rb);
    for (size_t l = 0; l < p_w.size(); ++l) {
        const Eigen::MatrixXd tot = bs_totals(prob, p_w[l]);
        for (int k = 0; k < prob.n_bs; ++k) {
            for (int d = 0; d < prob.n_rb; ++d) {
                out.entries_w(static_cast<int>(l), out.src_index(k, d)) = tot(k, d);
            }
        }
    }
    return out;
}

BlockPowers scale_to_full_rank(const BlockPowers& base, double spread, Rng& rng) {
    if (!(spread > 0.0 && spread < 1.0)) {
        throw std::invalid_argument("scaling spread must be in (0, 1)");
    }
    BlockPowers out = base;
    for (auto& block : out) {
        for (int z = 0; z < block.rows(); ++z) {
            for (int d = 0; d < block.cols(); ++d) {
                if (block(z, d) > 0.0) {
                    // scale upward: the source design is SINR-floor tight, so
                    // lowering any entry lands below its floor and the repair
                    // would re-pin it to the (block-independent) floor value,
                    // collapsing the rows back into duplicates
                    block(z, d) *= 1.0 + spread * rng.uniform(0.0, 1.0);
                }
            }
        }
    }
    return out;
}

std::vector<std::vector<int>> unique_groups(const std::vector<std::vector<int>>& sink_groups) {
    std::set<std::vector<int>> seen;
    std::vector<std::vector<int>> out;
    for (const auto& g : sink_groups) {
        std::vector<int> sorted = g;
        std::sort(sorted.begin(), sorted.end());
        if (seen.insert(sorted).second) {
            out.push_back(sorted);
        }
    }
    return out;
}

namespace {

// ---- shared pieces of the surrogate problems -------------------------------

// All solver-side powers are in units of max_rb_w, so the per-RB cap is 1 and
// received-power coefficients are gains * max_rb_w.
struct Scaled {
    const AllocationProblem& prob;
    Eigen::MatrixXd g;   // gains * max_rb_w
    double bs_cap;       // max_bs_w / max_rb_w

    explicit Scaled(const AllocationProblem& p)
        : prob(p), g(p.gains_w * p.max_rb_w), bs_cap(p.max_bs_w / p.max_rb_w) {}

    double coef(int z_src, int d_src, int z_dst, int d_dst) const {
        return g(prob.src(prob.serving[static_cast<size_t>(z_src)], d_src),
                 prob.dst(z_dst, d_dst));
    }
    double own(int z, int d) const { return coef(z, d, z, d); }
};

int pair_index(const AllocationProblem& prob, int z, int d) { return z * prob.n_rb + d; }

// total received power at sink (z, d) as an affine form over per-UE powers,
// with var_of mapping a pair index to a solver variable (-1 keeps it out)
Affine q_affine(const Scaled& sc, int z, int d, const std::vector<int>& var_of) {
    Affine q(sc.prob.noise_w[static_cast<size_t>(d)]);
    for (int z2 = 0; z2 < sc.prob.n_ue; ++z2) {
        for (int d2 = 0; d2 < sc.prob.n_rb; ++d2) {
            const int v = var_of[static_cast<size_t>(pair_index(sc.prob, z2, d2))];
            if (v >= 0) {
                q.add(v, sc.coef(z2, d2, z, d));
            }
        }
    }
    return q;
}

// interference seen by (z, d): q without the serving BS's own-RB power
Affine interference_affine(const Scaled& sc, int z, int d, const std::vector<int>& var_of) {
    const int serv = sc.prob.serving[static_cast<size_t>(z)];
    Affine g(sc.prob.noise_w[static_cast<size_t>(d)]);
    for (int z2 = 0; z2 < sc.prob.n_ue; ++z2) {
        for (int d2 = 0; d2 < sc.prob.n_rb; ++d2) {
            if (d2 == d && sc.prob.serving[static_cast<size_t>(z2)] == serv) {
                continue;
            }
            const int v = var_of[static_cast<size_t>(pair_index(sc.prob, z2, d2))];
            if (v >= 0) {
                g.add(v, sc.coef(z2, d2, z, d));
            }
        }
    }
    return g;
}

// q minus the UE's own signal (other co-cell UEs on the RB stay in)
Affine rival_affine(const Scaled& sc, int z, int d, const std::vector<int>& var_of) {
    Affine r = q_affine(sc, z, d, var_of);
    const int v = var_of[static_cast<size_t>(pair_index(sc.prob, z, d))];
    if (v >= 0) {
        for (auto& [idx, c] : r.terms) {
            if (idx == v) {
                c -= sc.own(z, d);
            }
        }
    }
    return r;
}

// first-order model of sum_j ln r_j(x) around x0, as an affine form
Affine linearize_logs(const std::vector<Affine>& rs, const Vec& x0) {
    Affine lin;
    double c = 0.0;
    std::vector<double> coefs;
    for (const Affine& r : rs) {
        const double rv = r.eval(x0);
        c += std::log(rv) - 1.0;
        for (const auto& [idx, coef] : r.terms) {
            lin.add(idx, coef / rv);
        }
        c += r.constant / rv;  // ln r0 + (r - r0)/r0 with r affine
    }
    lin.constant = c;
    return lin;
}

// ---- P2: per-block penalized DC relaxation ---------------------------------

struct BlockRelaxState {
    Vec x;          // [p pairs, delta pairs]
    double true_obj = -std::numeric_limits<double>::infinity();
};

struct P2Builder {
    const Scaled& sc;
    const AllocationProblem& prob;
    int n_pair;
    std::vector<int> p_var;      // pair -> var
    std::vector<int> d_var;      // pair -> var
    std::vector<Affine> qs;      // per pair in row-major (z, d)
    std::vector<Affine> rivals;  // f2 arguments
    std::vector<Affine> interf;  // C4 interference forms

    explicit P2Builder(const Scaled& s) : sc(s), prob(s.prob), n_pair(s.prob.n_ue * s.prob.n_rb) {
        p_var.resize(static_cast<size_t>(n_pair));
        d_var.resize(static_cast<size_t>(n_pair));
        for (int i = 0; i < n_pair; ++i) {
            p_var[static_cast<size_t>(i)] = i;
            d_var[static_cast<size_t>(i)] = n_pair + i;
        }
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                qs.push_back(q_affine(sc, z, d, p_var));
                rivals.push_back(rival_affine(sc, z, d, p_var));
                interf.push_back(interference_affine(sc, z, d, p_var));
            }
        }
    }

    // xi-penalized surrogate at linearization point x0 for Dinkelbach weight
    // lambda (normalized units)
    ipm::Problem build(double lambda, double xi, const Vec& x0) const {
        ipm::Problem p;
        p.resize(2 * n_pair);
        for (int i = 0; i < n_pair; ++i) {
            p.lower(i) = 0.0;
            p.upper(i) = 1.0;
            p.lower(n_pair + i) = 0.0;
            p.upper(n_pair + i) = 1.0;
        }
        // -f1: -sum ln q + lambda sum p + xi sum delta
        p.objective.add(std::make_shared<ipm::NegLogTerm>(qs, std::vector<double>{}));
        Affine lin = linearize_logs(rivals, x0);  // f2's log part
        for (int i = 0; i < n_pair; ++i) {
            lin.add(p_var[static_cast<size_t>(i)], lambda);
            lin.add(d_var[static_cast<size_t>(i)], xi);
            // -xi delta^2 linearized (enters f2, so added back here)
            lin.add(d_var[static_cast<size_t>(i)], -2.0 * xi * x0(d_var[static_cast<size_t>(i)]));
        }
        p.objective.add_affine(std::move(lin));

        for (int k = 0; k < prob.n_bs; ++k) {
            for (int d = 0; d < prob.n_rb; ++d) {
                Affine c1(-1.0);
                for (int z = 0; z < prob.n_ue; ++z) {
                    if (prob.serving[static_cast<size_t>(z)] == k) {
                        c1.add(d_var[static_cast<size_t>(pair_index(prob, z, d))], 1.0);
                    }
                }
                Expr e;
                e.add_affine(std::move(c1));
                p.ineqs.push_back(std::move(e));
            }
        }
        for (int z = 0; z < prob.n_ue; ++z) {
            Affine c2(1.0);
            for (int d = 0; d < prob.n_rb; ++d) {
                c2.add(d_var[static_cast<size_t>(pair_index(prob, z, d))], -1.0);
            }
            Expr e;
            e.add_affine(std::move(c2));
            p.ineqs.push_back(std::move(e));
        }
        for (int i = 0; i < n_pair; ++i) {
            Affine c5;
            c5.add(p_var[static_cast<size_t>(i)], 1.0);
            c5.add(d_var[static_cast<size_t>(i)], -1.0);
            Expr e;
            e.add_affine(std::move(c5));
            p.ineqs.push_back(std::move(e));
        }
        for (int k = 0; k < prob.n_bs; ++k) {
            Affine c6(-sc.bs_cap);
            for (int z = 0; z < prob.n_ue; ++z) {
                if (prob.serving[static_cast<size_t>(z)] != k) {
                    continue;
                }
                for (int d = 0; d < prob.n_rb; ++d) {
                    c6.add(p_var[static_cast<size_t>(pair_index(prob, z, d))], 1.0);
                }
            }
            Expr e;
            e.add_affine(std::move(c6));
            p.ineqs.push_back(std::move(e));
        }
        // C4 in DC form, divided through by s/gamma so the row is O(1) in the
        // normalized power variables: phi/2 delta^2 + Gt^2/(2 phi) <= p + eps
        // where Gt = gamma G / s, phi tight at the linearization point. The
        // eps keeps an interior where delta and p both vanish (the constraint
        // is vacuous there but would otherwise pinch to measure zero).
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                const int i = pair_index(prob, z, d);
                const double k = sc.own(z, d) / prob.gamma_lin(z, d);
                Affine gt(interf[static_cast<size_t>(i)].constant / k);
                for (const auto& [idx, c] : interf[static_cast<size_t>(i)].terms) {
                    gt.add(idx, c / k);
                }
                const double gv = gt.eval(x0);
                const double dv = std::max(x0(d_var[static_cast<size_t>(i)]), 1e-9);
                const double phi = std::max(gv / dv, 1e-30);
                Expr e;
                e.add(std::make_shared<ipm::QuadTerm>(
                    std::vector<Affine>{Affine{}.add(d_var[static_cast<size_t>(i)], 1.0)},
                    std::vector<double>{phi / 2.0}));
                e.add(std::make_shared<ipm::QuadTerm>(
                    std::vector<Affine>{std::move(gt)},
                    std::vector<double>{1.0 / (2.0 * phi)}));
                Affine slope(-1e-9);
                slope.add(p_var[static_cast<size_t>(i)], -1.0);
                e.add_affine(std::move(slope));
                p.ineqs.push_back(std::move(e));
            }
        }
        return p;
    }

    // true penalized objective f1 - f2 - lambda g - xi sum delta (1 - delta)
    double true_objective(const Vec& x, double lambda, double xi) const {
        double v = 0.0;
        for (int i = 0; i < n_pair; ++i) {
            v += std::log(qs[static_cast<size_t>(i)].eval(x)) -
                 std::log(rivals[static_cast<size_t>(i)].eval(x));
            const double pd = x(p_var[static_cast<size_t>(i)]);
            const double dd = x(d_var[static_cast<size_t>(i)]);
            v -= lambda * pd + xi * dd * (1.0 - dd);
        }
        return v;
    }
};

Vec p2_start(const P2Builder& b, Rng& rng) {
    const AllocationProblem& prob = b.prob;
    std::vector<int> cell_size(static_cast<size_t>(prob.n_bs), 0);
    for (const int k : prob.serving) {
        ++cell_size[static_cast<size_t>(k)];
    }
    Vec x = Vec::Zero(2 * b.n_pair);
    const double p_eq = std::min(1.0, b.sc.bs_cap / prob.n_rb);
    for (int z = 0; z < prob.n_ue; ++z) {
        const int zk = cell_size[static_cast<size_t>(prob.serving[static_cast<size_t>(z)])];
        const double base = std::min(0.9, std::max(0.85 / zk, 1.1 / prob.n_rb));
        for (int d = 0; d < prob.n_rb; ++d) {
            const int i = pair_index(prob, z, d);
            const double delta = base * rng.uniform(0.9, 1.0);
            x(b.d_var[static_cast<size_t>(i)]) = delta;
            x(b.p_var[static_cast<size_t>(i)]) = 0.9 * delta * p_eq * rng.uniform(0.9, 1.0);
        }
    }
    return x;
}

// ---- rounding and repair ----------------------------------------------------

Eigen::MatrixXi round_block(const AllocationProblem& prob, const P2Builder& b, const Vec& x) {
    Eigen::MatrixXi assign = Eigen::MatrixXi::Zero(prob.n_ue, prob.n_rb);
    Eigen::MatrixXd delta(prob.n_ue, prob.n_rb);
    for (int z = 0; z < prob.n_ue; ++z) {
        for (int d = 0; d < prob.n_rb; ++d) {
            delta(z, d) = x(b.d_var[static_cast<size_t>(pair_index(prob, z, d))]);
        }
    }
    for (int k = 0; k < prob.n_bs; ++k) {
        for (int d = 0; d < prob.n_rb; ++d) {
            int best = -1;
            double best_v = 0.5;  // assign only clear winners first
            for (int z = 0; z < prob.n_ue; ++z) {
                if (prob.serving[static_cast<size_t>(z)] == k && delta(z, d) >= best_v) {
                    best = z;
                    best_v = delta(z, d);
                }
            }
            if (best >= 0) {
                assign(best, d) = 1;
            }
        }
    }
    // every UE needs at least one RB; every (BS, RB) must end up used so each
    // source transmits in every block of the probing schedule
    for (int z = 0; z < prob.n_ue; ++z) {
        if (assign.row(z).sum() > 0) {
            continue;
        }
        const int k = prob.serving[static_cast<size_t>(z)];
        int best_d = -1;
        double best_v = -1.0;
        for (int d = 0; d < prob.n_rb; ++d) {
            bool taken = false;
            for (int z2 = 0; z2 < prob.n_ue; ++z2) {
                taken = taken || (prob.serving[static_cast<size_t>(z2)] == k && assign(z2, d) == 1);
            }
            if (!taken && delta(z, d) > best_v) {
                best_v = delta(z, d);
                best_d = d;
            }
        }
        if (best_d < 0) {
            // no free RB in the cell: steal from the incumbent with most RBs
            int victim = -1;
            int victim_count = 1;
            for (int d = 0; d < prob.n_rb; ++d) {
                for (int z2 = 0; z2 < prob.n_ue; ++z2) {
                    if (prob.serving[static_cast<size_t>(z2)] == k && assign(z2, d) == 1 &&
                        assign.row(z2).sum() > victim_count) {
                        victim = z2;
                        victim_count = assign.row(z2).sum();
                        best_d = d;
                    }
                }
            }
            if (victim < 0) {
                throw std::logic_error("cannot serve every UE with the cell's RBs");
            }
            assign(victim, best_d) = 0;
        }
        assign(z, best_d) = 1;
    }
    for (int k = 0; k < prob.n_bs; ++k) {
        for (int d = 0; d < prob.n_rb; ++d) {
            bool taken = false;
            for (int z = 0; z < prob.n_ue; ++z) {
                taken = taken || (prob.serving[static_cast<size_t>(z)] == k && assign(z, d) == 1);
            }
            if (!taken) {
                int best = -1;
                double best_v = -1.0;
                for (int z = 0; z < prob.n_ue; ++z) {
                    if (prob.serving[static_cast<size_t>(z)] == k && delta(z, d) > best_v) {
                        best_v = delta(z, d);
                        best = z;
                    }
                }
                assign(best, d) = 1;
            }
        }
    }
    return assign;
}

// ---- fixed-assignment power refit (exact C4, still DC in the objective) ----

struct RefitBuilder {
    const Scaled& sc;
    const AllocationProblem& prob;
    std::vector<int> var_of;  // pair -> var or -1
    std::vector<std::pair<int, int>> pairs;  // var -> (z, d)
    std::vector<Affine> qs, rivals, interf;

    RefitBuilder(const Scaled& s, const Eigen::MatrixXi& assign)
        : sc(s), prob(s.prob), var_of(static_cast<size_t>(prob.n_ue * prob.n_rb), -1) {
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                if (assign(z, d) == 1) {
                    var_of[static_cast<size_t>(pair_index(prob, z, d))] =
                        static_cast<int>(pairs.size());
                    pairs.emplace_back(z, d);
                }
            }
        }
        for (const auto& [z, d] : pairs) {
            qs.push_back(q_affine(sc, z, d, var_of));
            rivals.push_back(rival_affine(sc, z, d, var_of));
            interf.push_back(interference_affine(sc, z, d, var_of));
        }
    }

    ipm::Problem build(double lambda, const Vec& x0) const {
        ipm::Problem p;
        p.resize(static_cast<int>(pairs.size()));
        p.lower.setZero();
        p.upper.setOnes();
        p.objective.add(std::make_shared<ipm::NegLogTerm>(qs, std::vector<double>{}));
        Affine lin = linearize_logs(rivals, x0);
        for (int v = 0; v < static_cast<int>(pairs.size()); ++v) {
            lin.add(v, lambda);
        }
        p.objective.add_affine(std::move(lin));
        for (int v = 0; v < static_cast<int>(pairs.size()); ++v) {
            const auto& [z, d] = pairs[static_cast<size_t>(v)];
            const Affine& c4 = interf[static_cast<size_t>(v)];
            // SINR floor divided by the own-link slope so the row is O(1)
            const double k = sc.own(z, d) / prob.gamma_lin(z, d);
            Affine lhs(c4.constant / k);
            for (const auto& [idx, c] : c4.terms) {
                lhs.add(idx, c / k);
            }
            lhs.add(v, -1.0);
            Expr e;
            e.add_affine(std::move(lhs));
            p.ineqs.push_back(std::move(e));
        }
        for (int k = 0; k < prob.n_bs; ++k) {
            Affine c6(-sc.bs_cap);
            for (int v = 0; v < static_cast<int>(pairs.size()); ++v) {
                if (prob.serving[static_cast<size_t>(pairs[static_cast<size_t>(v)].first)] == k) {
                    c6.add(v, 1.0);
                }
            }
            Expr e;
            e.add_affine(std::move(c6));
            p.ineqs.push_back(std::move(e));
        }
        return p;
    }

    double true_objective(const Vec& x, double lambda) const {
        double v = 0.0;
        for (size_t j = 0; j < pairs.size(); ++j) {
            v += std::log(qs[j].eval(x)) - std::log(rivals[j].eval(x));
        }
        v -= lambda * x.sum();
        return v;
    }

    Vec start(Rng& rng) const {
        Vec x(static_cast<int>(pairs.size()));
        const double p_eq = std::min(1.0, sc.bs_cap / prob.n_rb);
        for (int v = 0; v < x.size(); ++v) {
            x(v) = 0.85 * p_eq * rng.uniform(0.95, 1.05);
        }
        return x;
    }
};

std::string first_violation(const ipm::Problem& p, const Vec& x) {
    for (int i = 0; i < p.n; ++i) {
        if (x(i) <= p.lower(i) || x(i) >= p.upper(i)) {
            return "box var " + std::to_string(i) + " = " + std::to_string(x(i));
        }
    }
    if (!p.objective.in_domain(x)) {
        return "objective domain";
    }
    for (size_t c = 0; c < p.ineqs.size(); ++c) {
        if (!p.ineqs[c].in_domain(x)) {
            return "ineq " + std::to_string(c) + " domain";
        }
        const double v = p.ineqs[c].eval(x);
        if (v >= 0.0) {
            return "ineq " + std::to_string(c) + " = " + std::to_string(v);
        }
    }
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        Mat s(p.lmis[j].dim, p.lmis[j].dim);
        p.lmis[j].materialize(x, s);
        const double lam = Eigen::SelfAdjointEigenSolver<Mat>(s).eigenvalues()(0);
        if (lam <= 0.0) {
            return "lmi " + std::to_string(j) + " min eig = " + std::to_string(lam);
        }
    }
    return "unknown";
}

// numerical tightness after a warm start can leave the new surrogate's
// interior; re-center through phase I instead of failing
Vec centered_start(const ipm::Problem& p, const Vec& x, const ipm::SolveOptions& opts,
                   const char* where) {
    if (ipm::interior_point(p, x)) {
        return x;
    }
    const auto fixed = ipm::find_feasible(p, x, opts);
    if (!fixed) {
        throw std::runtime_error(std::string("no interior point recovering ") + where +
                                 " (" + first_violation(p, x) + ")");
    }
    return *fixed;
}

Vec solve_refit(const RefitBuilder& rb, double lambda, Vec x, const P2Options& opts) {
    double prev = rb.true_objective(x, lambda);
    for (int pass = 0; pass < opts.max_sca; ++pass) {
        const ipm::Problem p = rb.build(lambda, x);
        const ipm::SolveResult res =
            ipm::solve(p, centered_start(p, x, opts.ipm, "refit"), opts.ipm);
        x = res.x;
        const double cur = rb.true_objective(x, lambda);
        if (std::abs(cur - prev) <= opts.sca_tol * (1.0 + std::abs(cur))) {
            break;
        }
        prev = cur;
    }
    return x;
}

BlockPowers powers_from_refit(const AllocationProblem& prob,
                              const std::vector<RefitBuilder>& builders,
                              const std::vector<Vec>& xs) {
    BlockPowers out;
    for (size_t l = 0; l < builders.size(); ++l) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(prob.n_ue, prob.n_rb);
        for (size_t v = 0; v < builders[l].pairs.size(); ++v) {
            const auto& [z, d] = builders[l].pairs[v];
            p(z, d) = xs[l](static_cast<int>(v)) * prob.max_rb_w;
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

P2Result solve_p2(const AllocationProblem& prob, Rng& rng, const P2Options& opts) {
    const Scaled sc(prob);
    const P2Builder builder(sc);
    P2Result res;

    std::vector<BlockRelaxState> blocks(static_cast<size_t>(prob.n_blocks));
    std::vector<Rng> block_rngs;
    for (int l = 0; l < prob.n_blocks; ++l) {
        block_rngs.push_back(rng.fork(static_cast<std::uint64_t>(l) + 17));
    }
    {
        // a strictly feasible randomized start per block
        for (int l = 0; l < prob.n_blocks; ++l) {
            Vec x = p2_start(builder, block_rngs[static_cast<size_t>(l)]);
            const ipm::Problem probe = builder.build(0.0, 0.0, x);
            bool ok = true;
            for (const auto& c : probe.ineqs) {
                ok = ok && c.eval(x) < 0.0;
            }
            if (!ok) {
                const auto fixed = ipm::find_feasible(probe, x, opts.ipm);
                if (!fixed) {
                    res.message = "no feasible relaxed point found";
                    return res;
                }
                x = *fixed;
            }
            blocks[static_cast<size_t>(l)].x = x;
        }
    }

    // Dinkelbach ratio from the starting powers
    double lambda_n = 0.0;
    {
        BlockPowers p0;
        for (int l = 0; l < prob.n_blocks; ++l) {
            Eigen::MatrixXd p(prob.n_ue, prob.n_rb);
            for (int z = 0; z < prob.n_ue; ++z) {
                for (int d = 0; d < prob.n_rb; ++d) {
                    p(z, d) = blocks[static_cast<size_t>(l)].x(
                                  builder.p_var[static_cast<size_t>(pair_index(prob, z, d))]) *
                              prob.max_rb_w;
                }
            }
            p0.push_back(std::move(p));
        }
        lambda_n = energy_efficiency(prob, p0) * prob.max_rb_w;
    }

    double xi = 0.0;  // set after the first pass from the objective scale
    bool binarizing = false;
    for (int it = 0; it < opts.max_dinkelbach; ++it) {
        ++res.dinkelbach_iters;
        double f_sum = 0.0;
        double g_sum = 0.0;
        for (int l = 0; l < prob.n_blocks; ++l) {
            BlockRelaxState& st = blocks[static_cast<size_t>(l)];
            if (xi == 0.0) {
                const double scale = std::abs(builder.true_objective(st.x, lambda_n, 0.0));
                xi = opts.xi0_rel * (1.0 + scale) / builder.n_pair;
            }
            double prev = builder.true_objective(st.x, lambda_n, xi);
            for (int pass = 0; pass < opts.max_sca; ++pass) {
                res.sca_iters_max = std::max(res.sca_iters_max, pass + 1);
                const ipm::Problem p = builder.build(lambda_n, xi, st.x);
                const ipm::SolveResult sol =
                    ipm::solve(p, centered_start(p, st.x, opts.ipm, "sca"), opts.ipm);
                st.x = sol.x;
                const double cur = builder.true_objective(st.x, lambda_n, xi);
                if (std::abs(cur - prev) <= opts.sca_tol * (1.0 + std::abs(cur))) {
                    break;
                }
                prev = cur;
            }
            for (int i = 0; i < builder.n_pair; ++i) {
                const double pd = st.x(builder.p_var[static_cast<size_t>(i)]);
                f_sum += std::log(builder.qs[static_cast<size_t>(i)].eval(st.x)) -
                         std::log(builder.rivals[static_cast<size_t>(i)].eval(st.x));
                g_sum += pd;
            }
        }
        const double ratio = f_sum / std::max(g_sum, 1e-12);
        if (!binarizing) {
            res.lambda_trace.push_back(ratio);
        }
        const double gap = f_sum - lambda_n * g_sum;
        // push deltas toward binary once the ratio stabilizes
        double worst = 0.0;
        for (const auto& st : blocks) {
            for (int i = 0; i < builder.n_pair; ++i) {
                const double dd = st.x(builder.d_var[static_cast<size_t>(i)]);
                worst = std::max(worst, dd * (1.0 - dd));
            }
        }
        const bool ratio_done = std::abs(gap) <= opts.dinkelbach_tol * (1.0 + std::abs(f_sum));
        if ((ratio_done || binarizing) && worst < opts.binary_tol) {
            break;
        }
        if (ratio_done || binarizing) {
            // ratio converged; hold it fixed while the penalty binarizes deltas
            binarizing = true;
            xi *= opts.xi_growth;
            if (res.dinkelbach_iters > opts.max_xi_rounds + 2) {
                break;  // rounding cleans up what the penalty did not
            }
            continue;
        }
        lambda_n = ratio;
    }

    // round, repair, and refit powers under the fixed assignment
    res.assignment.clear();
    std::vector<RefitBuilder> refits;
    std::vector<Vec> xs;
    for (int l = 0; l < prob.n_blocks; ++l) {
        res.assignment.push_back(round_block(prob, builder, blocks[static_cast<size_t>(l)].x));
        refits.emplace_back(sc, res.assignment.back());
        Vec x0 = refits.back().start(block_rngs[static_cast<size_t>(l)]);
        const ipm::Problem probe = refits.back().build(lambda_n, x0);
        bool ok = true;
        for (const auto& c : probe.ineqs) {
            ok = ok && c.eval(x0) < 0.0;
        }
        if (!ok) {
            const auto fixed = ipm::find_feasible(probe, x0, opts.ipm);
            if (!fixed) {
                res.message = "rounded assignment admits no feasible powers";
                return res;
            }
            x0 = *fixed;
        }
        xs.push_back(std::move(x0));
    }
    for (int round = 0; round < 6; ++round) {
        for (int l = 0; l < prob.n_blocks; ++l) {
            xs[static_cast<size_t>(l)] =
                solve_refit(refits[static_cast<size_t>(l)], lambda_n, xs[static_cast<size_t>(l)],
                            opts);
        }
        const BlockPowers p_w = powers_from_refit(prob, refits, xs);
        const double f = sum_rate(prob, p_w);
        const double g = total_power(p_w) / prob.max_rb_w;
        if (std::abs(f - lambda_n * g) <= opts.dinkelbach_tol * (1.0 + std::abs(f))) {
            break;
        }
        lambda_n = f / g;
    }
    res.power_w = powers_from_refit(prob, refits, xs);
    res.rate = sum_rate(prob, res.power_w);
    res.power = total_power(res.power_w);
    res.lambda = res.power > 0.0 ? res.rate / res.power : 0.0;
    res.feasible = true;
    return res;
}

// ---- P3 stage one: rank enforcement ----------------------------------------

namespace {

struct P3Layout {
    const AllocationProblem& prob;
    const Assignment& assign;
    const std::vector<std::vector<int>>& groups;
    int n_b;          // group size == blocks
    int n_p;          // power variables
    std::vector<int> z_base, e_idx;  // per group
    int n_vars;
    // pair -> power var per block; sources are unique per (k, d, l)
    std::vector<std::vector<int>> var_of_block;   // [l][pair]
    std::vector<std::vector<int>> src_var;        // [l][src]

    P3Layout(const AllocationProblem& p, const Assignment& a,
             const std::vector<std::vector<int>>& g, bool with_z)
        : prob(p), assign(a), groups(g) {
        n_b = static_cast<int>(groups.front().size());
        for (const auto& grp : groups) {
            if (static_cast<int>(grp.size()) != n_b) {
                throw std::invalid_argument("conditioning needs uniform group sizes");
            }
        }
        if (n_b != prob.n_blocks) {
            throw std::invalid_argument("schedule length must equal the group size");
        }
        n_p = prob.n_bs * prob.n_rb * prob.n_blocks;
        int next = n_p;
        if (with_z) {
            for (size_t gi = 0; gi < groups.size(); ++gi) {
                z_base.push_back(next);
                next += n_b * (n_b + 1) / 2;
                e_idx.push_back(next++);
            }
        }
        n_vars = next;
        var_of_block.assign(static_cast<size_t>(prob.n_blocks),
                            std::vector<int>(static_cast<size_t>(prob.n_ue * prob.n_rb), -1));
        src_var.assign(static_cast<size_t>(prob.n_blocks),
                       std::vector<int>(static_cast<size_t>(prob.n_bs * prob.n_rb), -1));
        for (int l = 0; l < prob.n_blocks; ++l) {
            for (int z = 0; z < prob.n_ue; ++z) {
                for (int d = 0; d < prob.n_rb; ++d) {
                    if (assign[static_cast<size_t>(l)](z, d) != 1) {
                        continue;
                    }
                    const int k = prob.serving[static_cast<size_t>(z)];
                    const int v = p_index(l, k, d);
                    var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                        pair_index(prob, z, d))] = v;
                    src_var[static_cast<size_t>(l)][static_cast<size_t>(prob.src(k, d))] = v;
                }
            }
            for (int k = 0; k < prob.n_bs; ++k) {
                for (int d = 0; d < prob.n_rb; ++d) {
                    if (src_var[static_cast<size_t>(l)][static_cast<size_t>(prob.src(k, d))] < 0) {
                        throw std::invalid_argument(
                            "every source must be assigned in every block");
                    }
                }
            }
        }
    }

    int p_index(int l, int k, int d) const {
        return (l * prob.n_bs + k) * prob.n_rb + d;
    }
    int z_index(int g, int a, int b) const {  // a <= b
        return z_base[static_cast<size_t>(g)] + a * n_b - a * (a - 1) / 2 + (b - a);
    }

    Mat group_matrix(const Vec& x, int g) const {  // rows blocks, cols sources
        Mat p(n_b, n_b);
        for (int l = 0; l < n_b; ++l) {
            for (int j = 0; j < n_b; ++j) {
                p(l, j) = x(src_var[static_cast<size_t>(l)][static_cast<size_t>(
                    groups[static_cast<size_t>(g)][static_cast<size_t>(j)])]);
            }
        }
        return p;
    }
    Mat z_matrix(const Vec& x, int g) const {
        Mat z(n_b, n_b);
        for (int a = 0; a < n_b; ++a) {
            for (int b = a; b < n_b; ++b) {
                z(a, b) = z(b, a) = x(z_index(g, a, b));
            }
        }
        return z;
    }
};

// rate/power exprs per block for the fixed assignment, over P3Layout power vars
struct P3Rate {
    std::vector<Affine> qs, rivals;               // all blocks concatenated
    std::vector<std::vector<Affine>> interf;      // [l][assigned pair order]
    std::vector<std::vector<std::pair<int, int>>> pairs;  // [l] -> (z, d)

    P3Rate(const Scaled& sc, const P3Layout& lay) {
        const AllocationProblem& prob = lay.prob;
        interf.resize(static_cast<size_t>(prob.n_blocks));
        pairs.resize(static_cast<size_t>(prob.n_blocks));
        for (int l = 0; l < prob.n_blocks; ++l) {
            const std::vector<int>& var_of = lay.var_of_block[static_cast<size_t>(l)];
            for (int z = 0; z < prob.n_ue; ++z) {
                for (int d = 0; d < prob.n_rb; ++d) {
                    if (var_of[static_cast<size_t>(pair_index(prob, z, d))] < 0) {
                        continue;
                    }
                    qs.push_back(q_affine(sc, z, d, var_of));
                    rivals.push_back(rival_affine(sc, z, d, var_of));
                    interf[static_cast<size_t>(l)].push_back(
                        interference_affine(sc, z, d, var_of));
                    pairs[static_cast<size_t>(l)].emplace_back(z, d);
                }
            }
        }
    }

    double rate(const Vec& x) const {
        double v = 0.0;
        for (size_t j = 0; j < qs.size(); ++j) {
            v += std::log(qs[j].eval(x)) - std::log(rivals[j].eval(x));
        }
        return v;
    }
};

void add_feasibility_constraints(ipm::Problem& p, const Scaled& sc, const P3Layout& lay,
                                 const P3Rate& rate) {
    const AllocationProblem& prob = lay.prob;
    for (int l = 0; l < prob.n_blocks; ++l) {
        for (size_t j = 0; j < rate.pairs[static_cast<size_t>(l)].size(); ++j) {
            const auto& [z, d] = rate.pairs[static_cast<size_t>(l)][j];
            const Affine& g = rate.interf[static_cast<size_t>(l)][j];
            // SINR floor divided by the own-link slope so the row is O(1)
            const double k = sc.own(z, d) / prob.gamma_lin(z, d);
            Affine lhs(g.constant / k);
            for (const auto& [idx, c] : g.terms) {
                lhs.add(idx, c / k);
            }
            lhs.add(lay.var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                        pair_index(prob, z, d))],
                    -1.0);
            Expr e;
            e.add_affine(std::move(lhs));
            p.ineqs.push_back(std::move(e));
        }
        for (int k = 0; k < prob.n_bs; ++k) {
            Affine c6(-sc.bs_cap);
            for (int d = 0; d < prob.n_rb; ++d) {
                c6.add(lay.p_index(l, k, d), 1.0);
            }
            Expr e;
            e.add_affine(std::move(c6));
            p.ineqs.push_back(std::move(e));
        }
    }
}

Vec powers_to_x(const AllocationProblem& prob, const P3Layout& lay, const BlockPowers& p_w,
                int n_vars) {
    Vec x = Vec::Zero(n_vars);
    for (int l = 0; l < prob.n_blocks; ++l) {
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                const int v =
                    lay.var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                        pair_index(prob, z, d))];
                if (v >= 0) {
                    x(v) = p_w[static_cast<size_t>(l)](z, d) / prob.max_rb_w;
                }
            }
        }
    }
    return x;
}

BlockPowers x_to_powers(const AllocationProblem& prob, const P3Layout& lay, const Vec& x,
                        double scale = 1.0) {
    BlockPowers out;
    for (int l = 0; l < prob.n_blocks; ++l) {
        Eigen::MatrixXd p = Eigen::MatrixXd::Zero(prob.n_ue, prob.n_rb);
        for (int z = 0; z < prob.n_ue; ++z) {
            for (int d = 0; d < prob.n_rb; ++d) {
                const int v =
                    lay.var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                        pair_index(prob, z, d))];
                if (v >= 0) {
                    p(z, d) = x(v) * prob.max_rb_w * scale;
                }
            }
        }
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace

P31Result solve_p3_rank(const AllocationProblem& prob, const Assignment& assign,
                        const BlockPowers& init_power_w, double lambda,
                        const std::vector<std::vector<int>>& groups, const P3Options& opts) {
    const Scaled sc(prob);
    const P3Layout lay(prob, assign, groups, true);
    const P3Rate rate(sc, lay);
    const int n_g = static_cast<int>(groups.size());
    const double lambda_n = lambda * prob.max_rb_w;
    P31Result res;

    Vec x = powers_to_x(prob, lay, init_power_w, lay.n_vars);

    // the scaled schedule sits below some SINR floors (the scaling only lowers
    // entries and the source design is floor-tight); a few monotone
    // power-control sweeps restore C4 strictly before the first surrogate
    for (int sweep = 0; sweep < 20; ++sweep) {
        bool raised = false;
        for (int l = 0; l < prob.n_blocks; ++l) {
            for (size_t j = 0; j < rate.pairs[static_cast<size_t>(l)].size(); ++j) {
                const auto& [z, d] = rate.pairs[static_cast<size_t>(l)][j];
                const double k = sc.own(z, d) / prob.gamma_lin(z, d);
                const double target =
                    rate.interf[static_cast<size_t>(l)][j].eval(x) / k * (1.0 + 1e-2);
                const int v = lay.var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                    pair_index(prob, z, d))];
                if (x(v) < target) {
                    x(v) = std::min(target, 1.0 - 1e-9);
                    raised = true;
                }
            }
        }
        if (!raised) {
            break;
        }
    }

    // lift per group in certificate units: the raw Gram lives at the square of
    // the power scale, so Z and the P block are divided by sigma_g and
    // sqrt(sigma_g) to bring the certificate next to the identity block.
    // Z' = P' P'^T + ridge at the start, e just above the n_b-th eigenvalue.
    std::vector<double> eps_rank(static_cast<size_t>(n_g));
    std::vector<double> scale_g(static_cast<size_t>(n_g));
    double w_pen = 0.0;
    {
        for (int g = 0; g < n_g; ++g) {
            const Mat p = lay.group_matrix(x, g);
            Mat z = p * p.transpose();
            scale_g[static_cast<size_t>(g)] = std::max(z.trace() / lay.n_b, 1e-30);
            z /= scale_g[static_cast<size_t>(g)];
            z += 1e-3 * Mat::Identity(lay.n_b, lay.n_b);
            eps_rank[static_cast<size_t>(g)] = opts.eps_rank_rel;
            for (int a = 0; a < lay.n_b; ++a) {
                for (int b = a; b < lay.n_b; ++b) {
                    x(lay.z_index(g, a, b)) = z(a, b);
                }
            }
        }
    }

    const double f0 = rate.rate(x);
    std::vector<Mat> w_g(static_cast<size_t>(n_g));
    std::vector<double> e_prev(static_cast<size_t>(n_g));

    auto lifted_u = [&](const Vec& xv, int g) {
        Mat u = Mat::Zero(2 * lay.n_b, 2 * lay.n_b);
        u.topLeftCorner(lay.n_b, lay.n_b).setIdentity();
        const Mat p =
            lay.group_matrix(xv, g) / std::sqrt(scale_g[static_cast<size_t>(g)]);
        u.bottomLeftCorner(lay.n_b, lay.n_b) = p;
        u.topRightCorner(lay.n_b, lay.n_b) = p.transpose();
        u.bottomRightCorner(lay.n_b, lay.n_b) = lay.z_matrix(xv, g);
        return u;
    };

    for (int g = 0; g < n_g; ++g) {
        const Mat u = lifted_u(x, g);
        const Eigen::SelfAdjointEigenSolver<Mat> eig(u);
        w_g[static_cast<size_t>(g)] = eig.eigenvectors().leftCols(lay.n_b);
        e_prev[static_cast<size_t>(g)] =
            eig.eigenvalues()(lay.n_b - 1) * 1.05 + 1e-12;
    }
    w_pen = opts.w0_rel * (1.0 + std::abs(f0)) /
            std::max(1e-12, std::accumulate(e_prev.begin(), e_prev.end(), 0.0));

    for (int it = 0; it < opts.max_iters; ++it) {
        ipm::Problem p;
        p.resize(lay.n_vars);
        for (int v = 0; v < lay.n_p; ++v) {
            p.lower(v) = 0.0;
            p.upper(v) = 1.0;
        }
        for (int g = 0; g < n_g; ++g) {
            p.lower(lay.e_idx[static_cast<size_t>(g)]) = 0.0;
            p.upper(lay.e_idx[static_cast<size_t>(g)]) = e_prev[static_cast<size_t>(g)];
        }
        p.objective.add(std::make_shared<ipm::NegLogTerm>(rate.qs, std::vector<double>{}));
        Affine lin = linearize_logs(rate.rivals, x);
        for (int v = 0; v < lay.n_p; ++v) {
            lin.add(v, lambda_n);
        }
        for (int g = 0; g < n_g; ++g) {
            lin.add(lay.e_idx[static_cast<size_t>(g)], w_pen * std::pow(opts.w_growth, it));
        }
        p.objective.add_affine(std::move(lin));
        add_feasibility_constraints(p, sc, lay, rate);
        if (it == 0) {
            for (size_t ci = 0; ci < p.ineqs.size(); ++ci) {
                const double v = p.ineqs[ci].eval(x);
                if (v > -1e-6) {
                    std::fprintf(stderr, "[p31 init] ineq %zu margin %.3e\n", ci, v);
                }
            }
        }

        for (int g = 0; g < n_g; ++g) {
            LmiBlock u;
            u.dim = 2 * lay.n_b;
            u.f0 = Mat::Zero(u.dim, u.dim);
            u.f0.topLeftCorner(lay.n_b, lay.n_b).setIdentity();
            LmiBlock cut;  // e I - W^T U W >= 0
            cut.dim = lay.n_b;
            const Mat& w = w_g[static_cast<size_t>(g)];
            cut.f0 = -w.transpose() * u.f0 * w;
            cut.coefs.emplace_back(lay.e_idx[static_cast<size_t>(g)],
                                   Mat::Identity(lay.n_b, lay.n_b));
            const double root = std::sqrt(scale_g[static_cast<size_t>(g)]);
            for (int l = 0; l < lay.n_b; ++l) {
                for (int j = 0; j < lay.n_b; ++j) {
                    const int v = lay.src_var[static_cast<size_t>(l)][static_cast<size_t>(
                        groups[static_cast<size_t>(g)][static_cast<size_t>(j)])];
                    Mat f = Mat::Zero(u.dim, u.dim);
                    f(lay.n_b + l, j) = 1.0 / root;
                    f(j, lay.n_b + l) = 1.0 / root;
                    cut.coefs.emplace_back(v, Mat(-w.transpose() * f * w));
                    u.coefs.emplace_back(v, std::move(f));
                }
            }
            // Z stays uniformly positive definite; pinning only the current
            // smallest eigenvector lets the solver collapse Z in the
            // directions not yet seen, so the floor is spectral
            LmiBlock floor_c;  // Z - eps I >= 0
            floor_c.dim = lay.n_b;
            floor_c.f0 = -eps_rank[static_cast<size_t>(g)] * Mat::Identity(lay.n_b, lay.n_b);
            for (int a = 0; a < lay.n_b; ++a) {
                for (int b = a; b < lay.n_b; ++b) {
                    Mat f = Mat::Zero(u.dim, u.dim);
                    f(lay.n_b + a, lay.n_b + b) = 1.0;
                    f(lay.n_b + b, lay.n_b + a) = 1.0;
                    cut.coefs.emplace_back(lay.z_index(g, a, b), Mat(-w.transpose() * f * w));
                    u.coefs.emplace_back(lay.z_index(g, a, b), std::move(f));
                    Mat zf = Mat::Zero(lay.n_b, lay.n_b);
                    zf(a, b) = 1.0;
                    zf(b, a) = 1.0;
                    floor_c.coefs.emplace_back(lay.z_index(g, a, b), std::move(zf));
                }
            }
            p.lmis.push_back(std::move(u));
            p.lmis.push_back(std::move(cut));
            p.lmis.push_back(std::move(floor_c));
        }

        // refreshing W only tightens the cut, never cuts off the previous
        // iterate, so the warm start stays feasible; recenter e inside its cap
        for (int g = 0; g < n_g; ++g) {
            const Mat u = lifted_u(x, g);
            const Mat proj = w_g[static_cast<size_t>(g)].transpose() * u *
                             w_g[static_cast<size_t>(g)];
            const Eigen::SelfAdjointEigenSolver<Mat> peig(proj);
            const double need = peig.eigenvalues()(lay.n_b - 1);
            const double cap = e_prev[static_cast<size_t>(g)];
            if (need >= cap) {
                res.e_trace.push_back(*std::max_element(e_prev.begin(), e_prev.end()));
                res.iters = it;
                res.message = "rank residual stalled";
                goto finish;
            }
            x(lay.e_idx[static_cast<size_t>(g)]) = need + 0.25 * (cap - need);
        }

        {
            const ipm::SolveResult sol =
                ipm::solve(p, centered_start(p, x, opts.ipm, "rank stage"), opts.ipm);
            x = sol.x;
            std::fprintf(stderr, "[p31 it %d] conv=%d newton=%d obj=%.6f rate=%.4f\n", it,
                         sol.converged, sol.newton_steps, sol.objective, rate.rate(x));
        }
        double e_max = 0.0;
        bool all_ok = true;
        for (int g = 0; g < n_g; ++g) {
            const double achieved = x(lay.e_idx[static_cast<size_t>(g)]);
            // keep converged groups' caps at half the floor instead of the
            // achieved residual: sources are shared across groups, and a cap
            // ratcheted to ~0 freezes every power entry a laggard still
            // needs; the growing penalty holds closed groups down regardless
            e_prev[static_cast<size_t>(g)] =
                std::max(achieved, 0.5 * eps_rank[static_cast<size_t>(g)]);
            const Mat u = lifted_u(x, g);
            const Eigen::SelfAdjointEigenSolver<Mat> eig(u);
            w_g[static_cast<size_t>(g)] = eig.eigenvectors().leftCols(lay.n_b);
            e_max = std::max(e_max, achieved);
            {
                const Mat pm = lay.group_matrix(x, g) /
                               std::sqrt(scale_g[static_cast<size_t>(g)]);
                const Eigen::JacobiSVD<Mat> svd(pm);
                const double sm = svd.singularValues()(lay.n_b - 1);
                std::fprintf(stderr, "  g%d e=%.2e gap=%.2e smin2=%.2e zmin=%.2e\n", g,
                             e_prev[static_cast<size_t>(g)], eig.eigenvalues()(lay.n_b - 1),
                             sm * sm,
                             Eigen::SelfAdjointEigenSolver<Mat>(lay.z_matrix(x, g))
                                 .eigenvalues()(0));
            }
            // the gap between Z and the Gram must close to well under the
            // eigenvalue floor, otherwise the floor says nothing about P
            all_ok = all_ok && eig.eigenvalues()(lay.n_b - 1) <=
                                   opts.e_tol_rel * eps_rank[static_cast<size_t>(g)];
        }
        res.e_trace.push_back(e_max);
        res.iters = it + 1;
        if (all_ok) {
            res.rank_ok = true;
            break;
        }
    }

finish:
    res.power_w = x_to_powers(prob, lay, x);
    res.rate = sum_rate(prob, res.power_w);
    res.power = total_power(res.power_w);
    res.lambda_star = res.power > 0.0 ? res.rate / res.power : 0.0;
    for (int g = 0; g < n_g; ++g) {
        // back to raw power-squared units for the conditioning stage
        res.z_g.push_back(scale_g[static_cast<size_t>(g)] * lay.z_matrix(x, g));
    }
    res.feasible = true;
    return res;
}

// ---- P3 stage two: conditioning under an EE floor ---------------------------

P32Result solve_p3_condition(const AllocationProblem& prob, const Assignment& assign,
                             const P31Result& rank_stage,
                             const std::vector<std::vector<int>>& groups,
                             const P3Options& opts) {
    const Scaled sc(prob);
    const P3Layout lay(prob, assign, groups, false);  // z handled below
    const P3Rate rate(sc, lay);
    const int n_g = static_cast<int>(groups.size());
    const int n_b = lay.n_b;
    P32Result res;
    res.ee_floor = opts.retention * rank_stage.lambda_star;

    // variable layout: [p~ (n_p) | nu | per group: z~ upper triangle, e~, eta]
    const int nu = lay.n_p;
    std::vector<int> zt_base(static_cast<size_t>(n_g));
    std::vector<int> et_idx(static_cast<size_t>(n_g));
    std::vector<int> eta_idx(static_cast<size_t>(n_g));
    int next = nu + 1;
    for (int g = 0; g < n_g; ++g) {
        zt_base[static_cast<size_t>(g)] = next;
        next += n_b * (n_b + 1) / 2;
        et_idx[static_cast<size_t>(g)] = next++;
        eta_idx[static_cast<size_t>(g)] = next++;
    }
    const int n_vars = next;
    auto zt_index = [&](int g, int a, int b) {
        return zt_base[static_cast<size_t>(g)] + a * n_b - a * (a - 1) / 2 + (b - a);
    };

    // each certificate is congruence-normalized by its own smallest Gram
    // eigenvalue mu_g so the lifted block starts O(1)-conditioned: the top
    // left carries nu^ = mu0 nu (exactly 1 at the start), Z^ = Z / mu_g sits
    // on the unit floor, and the scale-free Schur coupling
    // lmin(Gram) >= mu_g / nu^ survives, which is what lets the compression
    // raise the small singular values instead of only chasing the top one
    Vec x = Vec::Zero(n_vars);
    std::vector<double> fac(static_cast<size_t>(n_g));
    double mu0 = std::numeric_limits<double>::infinity();
    {
        std::vector<double> mu_g(static_cast<size_t>(n_g));
        for (int g = 0; g < n_g; ++g) {
            const Eigen::SelfAdjointEigenSolver<Mat> eig(
                rank_stage.z_g[static_cast<size_t>(g)]);
            mu_g[static_cast<size_t>(g)] = eig.eigenvalues()(0) * (1.0 - 1e-3);
            mu0 = std::min(mu0, mu_g[static_cast<size_t>(g)]);
        }
        if (!(mu0 > 0.0)) {
            res.message = "rank stage left a singular design";
            return res;
        }
        const Vec p0 = powers_to_x(prob, lay, rank_stage.power_w, lay.n_p);
        x.head(lay.n_p) = p0 / mu0;
        x(nu) = 1.0 / mu0;
        for (int g = 0; g < n_g; ++g) {
            fac[static_cast<size_t>(g)] = mu0 / std::sqrt(mu_g[static_cast<size_t>(g)]);
            // no ridge: the rank stage hands over Z strictly above the Gram,
            // and any added slack lands in the lifted gap this stage has to
            // grind back down
            Mat zt =
                rank_stage.z_g[static_cast<size_t>(g)] / mu_g[static_cast<size_t>(g)];
            for (int a = 0; a < n_b; ++a) {
                for (int b = a; b < n_b; ++b) {
                    x(zt_index(g, a, b)) = zt(a, b);
                }
            }
            const Eigen::SelfAdjointEigenSolver<Mat> eig(zt);
            x(eta_idx[static_cast<size_t>(g)]) = eig.eigenvalues()(n_b - 1) * 1.05 + 1e-9;
        }
    }

    auto lifted_u = [&](const Vec& xv, int g) {
        Mat u = Mat::Zero(2 * n_b, 2 * n_b);
        u.topLeftCorner(n_b, n_b) = mu0 * xv(nu) * Mat::Identity(n_b, n_b);
        Mat p(n_b, n_b);
        for (int l = 0; l < n_b; ++l) {
            for (int j = 0; j < n_b; ++j) {
                p(l, j) = fac[static_cast<size_t>(g)] *
                          xv(lay.src_var[static_cast<size_t>(l)][static_cast<size_t>(
                              groups[static_cast<size_t>(g)][static_cast<size_t>(j)])]);
            }
        }
        u.bottomLeftCorner(n_b, n_b) = p;
        u.topRightCorner(n_b, n_b) = p.transpose();
        for (int a = 0; a < n_b; ++a) {
            for (int b = a; b < n_b; ++b) {
                u(n_b + a, n_b + b) = u(n_b + b, n_b + a) = xv(zt_index(g, a, b));
            }
        }
        return u;
    };

    std::vector<Mat> w_g(static_cast<size_t>(n_g));
    std::vector<double> e_prev(static_cast<size_t>(n_g));
    for (int g = 0; g < n_g; ++g) {
        const Mat u = lifted_u(x, g);
        const Eigen::SelfAdjointEigenSolver<Mat> eig(u);
        w_g[static_cast<size_t>(g)] = eig.eigenvectors().leftCols(n_b);
        // compression does not fight these caps: Z~ shadows the Gram as the
        // design moves, so the residual only measures divergence between them
        e_prev[static_cast<size_t>(g)] = eig.eigenvalues()(n_b - 1) * 1.05 + 1e-12;
    }
    // the spread penalty has to register against eta ~ kappa^2
    double w_base;
    {
        double eta0 = 0.0;
        for (int g = 0; g < n_g; ++g) {
            eta0 += x(eta_idx[static_cast<size_t>(g)]);
        }
        const double et0 = std::accumulate(e_prev.begin(), e_prev.end(), 0.0);
        w_base = opts.w0_rel * eta0 / std::max(et0, 1e-12);
    }

    const double lambda_floor_n = res.ee_floor * prob.max_rb_w;
    double eta_sum_prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opts.max_iters; ++it) {
        // linearize the concave rate part at the current true powers
        const double nu_v = x(nu);
        Vec p_true = x.head(lay.n_p) / nu_v;
        Affine f2_lin;
        {
            Vec full = Vec::Zero(lay.n_p);
            full = p_true;
            f2_lin = linearize_logs(rate.rivals, full);
        }

        ipm::Problem p;
        p.resize(n_vars);
        for (int v = 0; v < lay.n_p; ++v) {
            p.lower(v) = 0.0;
        }
        p.lower(nu) = 1e-12;
        for (int g = 0; g < n_g; ++g) {
            p.lower(et_idx[static_cast<size_t>(g)]) = 0.0;
            p.upper(et_idx[static_cast<size_t>(g)]) = e_prev[static_cast<size_t>(g)];
            p.lower(eta_idx[static_cast<size_t>(g)]) = 1.0;
        }
        {
            Affine obj;
            for (int g = 0; g < n_g; ++g) {
                obj.add(eta_idx[static_cast<size_t>(g)], 1.0);
                obj.add(et_idx[static_cast<size_t>(g)], w_base * std::pow(opts.w_growth, it));
            }
            p.objective.add_affine(std::move(obj));
        }

        // scheduling feasibility, scaled by nu: gamma (G~ + nu V) <= p~ s,
        // p~ <= nu, sum_d p~ <= nu cap
        for (int l = 0; l < prob.n_blocks; ++l) {
            for (size_t j = 0; j < rate.pairs[static_cast<size_t>(l)].size(); ++j) {
                const auto& [z, d] = rate.pairs[static_cast<size_t>(l)][j];
                const Affine& g = rate.interf[static_cast<size_t>(l)][j];
                // divided by the own-link slope so the row is O(1)
                const double k = sc.own(z, d) / prob.gamma_lin(z, d);
                Affine lhs;
                lhs.add(nu, g.constant / k);
                for (const auto& [idx, c] : g.terms) {
                    lhs.add(idx, c / k);
                }
                lhs.add(lay.var_of_block[static_cast<size_t>(l)][static_cast<size_t>(
                            pair_index(prob, z, d))],
                        -1.0);
                Expr e;
                e.add_affine(std::move(lhs));
                p.ineqs.push_back(std::move(e));
            }
            for (int k = 0; k < prob.n_bs; ++k) {
                Affine c6;
                c6.add(nu, -sc.bs_cap);
                for (int d = 0; d < prob.n_rb; ++d) {
                    c6.add(lay.p_index(l, k, d), 1.0);
                }
                Expr e;
                e.add_affine(std::move(c6));
                p.ineqs.push_back(std::move(e));
            }
        }
        for (int v = 0; v < lay.n_p; ++v) {
            Affine c5;
            c5.add(v, 1.0).add(nu, -1.0);
            Expr e;
            e.add_affine(std::move(c5));
            p.ineqs.push_back(std::move(e));
        }

        // EE retention via the perspective of the true-variable constraint:
        // r lambda* sum p~ + sum [nu ln nu - nu ln q~] + nu f2~(p~/nu) <= 0
        {
            Expr e;
            std::vector<Affine> q_persp;
            for (const Affine& q : rate.qs) {
                Affine qt;
                qt.add(nu, q.constant);
                for (const auto& [idx, c] : q.terms) {
                    qt.add(idx, c);
                }
                q_persp.push_back(std::move(qt));
            }
            e.add(std::make_shared<ipm::PerspectiveLogTerm>(nu, std::move(q_persp),
                                                            std::vector<double>{}));
            Affine lin;
            lin.add(nu, f2_lin.constant);
            for (const auto& [idx, c] : f2_lin.terms) {
                lin.add(idx, c);
            }
            for (int v = 0; v < lay.n_p; ++v) {
                lin.add(v, lambda_floor_n);
            }
            e.add_affine(std::move(lin));
            p.ineqs.push_back(std::move(e));
        }

        // spectral box I <= Z~ <= eta I and the lifted PSD/cut blocks
        for (int g = 0; g < n_g; ++g) {
            LmiBlock u;
            u.dim = 2 * n_b;
            u.f0 = Mat::Zero(u.dim, u.dim);
            Mat top = Mat::Zero(u.dim, u.dim);
            top.topLeftCorner(n_b, n_b) = mu0 * Mat::Identity(n_b, n_b);
            LmiBlock cut;
            cut.dim = n_b;
            const Mat& w = w_g[static_cast<size_t>(g)];
            cut.f0 = Mat::Zero(n_b, n_b);
            cut.coefs.emplace_back(et_idx[static_cast<size_t>(g)], Mat::Identity(n_b, n_b));
            cut.coefs.emplace_back(nu, Mat(-w.transpose() * top * w));
            u.coefs.emplace_back(nu, std::move(top));
            LmiBlock lower;  // Z~ - I >= 0
            lower.dim = n_b;
            lower.f0 = -Mat::Identity(n_b, n_b);
            LmiBlock upper;  // eta I - Z~ >= 0
            upper.dim = n_b;
            upper.f0 = Mat::Zero(n_b, n_b);
            upper.coefs.emplace_back(eta_idx[static_cast<size_t>(g)],
                                     Mat::Identity(n_b, n_b));
            for (int l = 0; l < n_b; ++l) {
                for (int j = 0; j < n_b; ++j) {
                    const int v = lay.src_var[static_cast<size_t>(l)][static_cast<size_t>(
                        groups[static_cast<size_t>(g)][static_cast<size_t>(j)])];
                    Mat f = Mat::Zero(u.dim, u.dim);
                    f(n_b + l, j) = fac[static_cast<size_t>(g)];
                    f(j, n_b + l) = fac[static_cast<size_t>(g)];
                    cut.coefs.emplace_back(v, Mat(-w.transpose() * f * w));
                    u.coefs.emplace_back(v, std::move(f));
                }
            }
            for (int a = 0; a < n_b; ++a) {
                for (int b = a; b < n_b; ++b) {
                    Mat f = Mat::Zero(u.dim, u.dim);
                    f(n_b + a, n_b + b) = 1.0;
                    f(n_b + b, n_b + a) = 1.0;
                    cut.coefs.emplace_back(zt_index(g, a, b), Mat(-w.transpose() * f * w));
                    u.coefs.emplace_back(zt_index(g, a, b), std::move(f));
                    Mat fz = Mat::Zero(n_b, n_b);
                    fz(a, b) = fz(b, a) = 1.0;
                    lower.coefs.emplace_back(zt_index(g, a, b), fz);
                    upper.coefs.emplace_back(zt_index(g, a, b), Mat(-fz));
                }
            }
            p.lmis.push_back(std::move(u));
            p.lmis.push_back(std::move(cut));
            p.lmis.push_back(std::move(lower));
            p.lmis.push_back(std::move(upper));
        }

        // nudge the warm start strictly inside the refreshed cuts
        bool stalled = false;
        for (int g = 0; g < n_g; ++g) {
            const Mat u = lifted_u(x, g);
            const Mat proj =
                w_g[static_cast<size_t>(g)].transpose() * u * w_g[static_cast<size_t>(g)];
            const Eigen::SelfAdjointEigenSolver<Mat> peig(proj);
            const double need = peig.eigenvalues()(n_b - 1);
            const double cap = e_prev[static_cast<size_t>(g)];
            if (need >= cap) {
                stalled = true;
                break;
            }
            x(et_idx[static_cast<size_t>(g)]) = need + 0.25 * (cap - need);
        }
        if (stalled) {
            res.message = "spread residual stalled";
            break;
        }

        fprintf(stderr, "[p32 it %d] pre-solve nu^=%.6f\n", it, mu0 * x(nu));
        const ipm::SolveResult sol =
            ipm::solve(p, centered_start(p, x, opts.ipm, "conditioning stage"), opts.ipm);
        x = sol.x;
        double e_max = 0.0;
        double eta_sum = 0.0;
        bool all_ok = true;
        for (int g = 0; g < n_g; ++g) {
            const double achieved = x(et_idx[static_cast<size_t>(g)]);
            e_prev[static_cast<size_t>(g)] = std::max(achieved, 0.5 * opts.e_tol_rel);
            eta_sum += x(eta_idx[static_cast<size_t>(g)]);
            const Mat u = lifted_u(x, g);
            const Eigen::SelfAdjointEigenSolver<Mat> eig(u);
            w_g[static_cast<size_t>(g)] = eig.eigenvectors().leftCols(n_b);
            e_max = std::max(e_max, achieved);
            fprintf(stderr, "  g%d e=%.3e lnb=%.3e eta=%.4g\n", g, achieved,
                    eig.eigenvalues()(n_b - 1), x(eta_idx[static_cast<size_t>(g)]));
            // the spectral box pins the smallest Gram eigenvalue at 1, so the
            // residual only needs to be small against that floor
            all_ok = all_ok && eig.eigenvalues()(n_b - 1) <= opts.e_tol_rel;
        }
        fprintf(stderr, "[p32 it %d] conv=%d newton=%d nu^=%.6f eta_sum=%.4g emax=%.3e\n",
                it, sol.converged ? 1 : 0, sol.newton_steps, mu0 * x(nu), eta_sum, e_max);
        res.e_trace.push_back(e_max);
        res.iters = it + 1;
        // the residual can be small from the start; stop only once the
        // compression itself has levelled off
        if (all_ok && it > 0 && std::abs(eta_sum - eta_sum_prev) <=
                                    1e-3 * (1.0 + std::abs(eta_sum))) {
            break;
        }
        eta_sum_prev = eta_sum;
    }

    res.power_w = x_to_powers(prob, lay, x, 1.0 / x(nu));
    res.ee = energy_efficiency(prob, res.power_w);
    res.eta_sum = 0.0;
    for (int g = 0; g < n_g; ++g) {
        res.eta_sum += x(eta_idx[static_cast<size_t>(g)]);
    }
    const TransmitPowerMatrix pm = to_power_matrix(prob, res.power_w);
    std::vector<GroupCheck> checks = verify_groups(pm, groups);
    for (const GroupCheck& c : checks) {
        res.kappa.push_back(c.kappa);
    }
    res.feasible = true;
    return res;
}

std::vector<ParetoPoint> pareto_sweep(const AllocationProblem& prob, const Assignment& assign,
                                      const P31Result& rank_stage,
                                      const std::vector<std::vector<int>>& groups,
                                      const std::vector<double>& retentions,
                                      const P3Options& opts) {
    std::vector<ParetoPoint> out;
    for (const double r : retentions) {
        P3Options o = opts;
        o.retention = r;
        const P32Result res = solve_p3_condition(prob, assign, rank_stage, groups, o);
        ParetoPoint pt;
        pt.retention = r;
        pt.feasible = res.feasible;
        pt.ee = res.ee;
        double ks = 0.0;
        for (const double k : res.kappa) {
            ks += k;
        }
        pt.kappa_sum = ks;
        out.push_back(pt);
    }
    return out;
}

}  // namespace mnige
