#pragma once

#include "mnige/ipm.hpp"
#include "mnige/power_design.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace mnige {

// Inputs of the joint scheduling / power / probing-design problem, physical
// units. gains_w holds steady per-RB couplings (source k*n_rb+l into sink
// z*n_rb+d); gamma_lin the per-(UE, RB) SINR floor that applies when the RB is
// assigned. n_blocks is the number of scheduling blocks in one measurement
// period, normally the interferer group size.
struct AllocationProblem {
    Eigen::MatrixXd gains_w;
    std::vector<double> noise_w;
    std::vector<int> serving;
    int n_bs = 0;
    int n_ue = 0;
    int n_rb = 0;
    int n_blocks = 0;
    double max_rb_w = 1.0;
    double max_bs_w = 40.0;
    Eigen::MatrixXd gamma_lin;

    int src(int bs, int rb) const { return bs * n_rb + rb; }
    int dst(int ue, int rb) const { return ue * n_rb + rb; }
    double own_gain(int ue, int rb) const {
        return gains_w(src(serving[static_cast<size_t>(ue)], rb), dst(ue, rb));
    }
};

// binary RB-to-UE map per block (n_ue x n_rb, at most one UE per (BS, RB))
using Assignment = std::vector<Eigen::MatrixXi>;

// per-UE transmit powers per block, n_ue x n_rb watts
using BlockPowers = std::vector<Eigen::MatrixXd>;

// sum over blocks/UEs/RBs of ln(1 + SINR) with successive decoding off:
// ln(total received) - ln(total received minus own signal)
double sum_rate(const AllocationProblem& prob, const BlockPowers& p_w);

double total_power(const BlockPowers& p_w);

// Dinkelbach ratio value: sum_rate / total transmit power
double energy_efficiency(const AllocationProblem& prob, const BlockPowers& p_w);

// BS-total transmit powers in probing-matrix form (blocks x sources)
TransmitPowerMatrix to_power_matrix(const AllocationProblem& prob, const BlockPowers& p_w);

// Per-entry variant of the probing scaling pass: every per-block power picks up
// an independent factor in [1, 1 + spread). Repeated block rows become linearly
// independent, which both makes the schedule usable as a probing design and
// seeds the rank stage away from its blind spot at exactly duplicated rows.
BlockPowers scale_to_full_rank(const BlockPowers& base, double spread, Rng& rng);

// deduplicated sink groups (each appears once regardless of how many sinks
// share it), used as the conditioning targets
std::vector<std::vector<int>> unique_groups(const std::vector<std::vector<int>>& sink_groups);

struct P2Options {
    double dinkelbach_tol = 1e-4;
    int max_dinkelbach = 30;
    double sca_tol = 1e-4;
    int max_sca = 10;
    double xi0_rel = 0.02;
    double xi_growth = 2.0;
    int max_xi_rounds = 14;
    double binary_tol = 1e-3;
    ipm::SolveOptions ipm;
};

struct P2Result {
    bool feasible = false;
    std::string message;
    Assignment assignment;
    BlockPowers power_w;
    double lambda = 0.0;  // final EE ratio
    double rate = 0.0;
    double power = 0.0;
    int dinkelbach_iters = 0;
    int sca_iters_max = 0;
    std::vector<double> lambda_trace;
};

// Energy-efficiency maximization with RB assignment: Dinkelbach outer loop, a
// penalized DC relaxation of the binaries solved per block by SCA over an
// interior-point core, then rounding, feasibility repair and a fixed-assignment
// power refit.
P2Result solve_p2(const AllocationProblem& prob, Rng& rng, const P2Options& opts = {});

struct P3Options {
    double e_tol_rel = 0.05;  // rank residual target, as a fraction of the Gram floor
    int max_iters = 30;
    double w0_rel = 0.1;
    double w_growth = 1.5;
    double eps_rank_rel = 1e-3;  // Gram eigenvalue floor vs its mean eigenvalue
    double retention = 0.95;  // EE floor factor r
    ipm::SolveOptions ipm;
};

struct P31Result {
    bool feasible = false;
    std::string message;
    BlockPowers power_w;
    double lambda_star = 0.0;  // EE of the rank-enforced design
    double rate = 0.0;
    double power = 0.0;
    std::vector<double> e_trace;  // max over groups, per iteration
    int iters = 0;
    bool rank_ok = false;
    std::vector<Eigen::MatrixXd> z_g;  // final Gram surrogates per group
};

// Rank enforcement: keeps the EE objective (lambda fixed from P2) and drives
// the n_blocks-th eigenvalue residual e_g of every group's lifted matrix to
// zero through eigenspace cuts, so each group's power submatrix reaches full
// rank.
P31Result solve_p3_rank(const AllocationProblem& prob, const Assignment& assign,
                        const BlockPowers& init_power_w, double lambda,
                        const std::vector<std::vector<int>>& groups,
                        const P3Options& opts = {});

struct P32Result {
    bool feasible = false;
    std::string message;
    BlockPowers power_w;
    double ee = 0.0;
    double ee_floor = 0.0;  // retention * lambda_star
    double eta_sum = 0.0;
    std::vector<double> kappa;    // per group, final design
    std::vector<double> e_trace;  // max over groups, per iteration
    int iters = 0;
};

// Conditioning stage: minimizes the sum of per-group spectral spread bounds
// subject to retaining at least retention * lambda_star energy efficiency,
// via the inverse-scale substitution that makes the EE constraint convex.
P32Result solve_p3_condition(const AllocationProblem& prob, const Assignment& assign,
                             const P31Result& rank_stage,
                             const std::vector<std::vector<int>>& groups,
                             const P3Options& opts = {});

struct ParetoPoint {
    double retention = 0.0;
    bool feasible = false;
    double ee = 0.0;
    double kappa_sum = 0.0;
};

std::vector<ParetoPoint> pareto_sweep(const AllocationProblem& prob, const Assignment& assign,
                                      const P31Result& rank_stage,
                                      const std::vector<std::vector<int>>& groups,
                                      const std::vector<double>& retentions,
                                      const P3Options& opts = {});

}  // namespace mnige
