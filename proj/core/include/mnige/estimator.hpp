#pragma once

#include "mnige/channel.hpp"
#include "mnige/gain_oracle.hpp"
#include "mnige/grid.hpp"
#include "mnige/power_design.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace mnige {

// Per sink (z, d): the handful of sources whose gain into that sink is worth
// estimating. Co-channel RBs of every BS dominate by path loss; in-band
// frequency neighbors of the serving BS cover spectral leakage. Groups are
// padded with further serving-BS neighbors to a uniform size so one short
// probing design serves every sink.
struct InterfererSelection {
    int group_size = 0;
    std::vector<std::vector<int>> groups;  // [z * n_rb + d] -> source indices

    const std::vector<int>& group(int ue, int rb, int n_rb) const {
        return groups[static_cast<size_t>(ue * n_rb + rb)];
    }
};

InterfererSelection select_interferers(const ResourceGrid& grid, const Topology& topo,
                                       int group_size = 0);

struct EstimationOptions {
    bool subtract_noise = true;
};

struct EstimatedGraph {
    Eigen::MatrixXd s_hat;             // n_src x n_dst, NaN outside the groups
    std::vector<double> residual_rel;  // per sink, ||A x - b|| / ||b||
};

// Solves each sink's linear system measured = P_group * s + noise over the
// probing blocks. Square designs invert exactly; extra blocks turn into least
// squares. Estimates can come out nonpositive under noise; they are kept as-is
// and flagged downstream via log_error_db.
EstimatedGraph estimate_gains(const TransmitPowerMatrix& p,
                              const std::vector<Eigen::MatrixXd>& measured_w,
                              const ResourceGrid& grid, const InterfererSelection& sel,
                              const std::vector<double>& noise_w,
                              const EstimationOptions& opts = {});

// |10 log10(s_hat / s_true)| in dB; empty when either side is nonpositive.
std::optional<double> log_error_db(double s_hat, double s_true);

// First-order relative error transfer of the group solve.
inline double error_bound(double kappa, double power_rel_err, double noise_rel_err) {
    return kappa * (power_rel_err + noise_rel_err);
}

// Distance-only prediction: path gain times the flat-channel RB coupling.
// Rows/columns use the same source/sink indexing as InterferenceGraph.
Eigen::MatrixXd model_based_baseline(const ResourceGrid& grid, const Topology& topo,
                                     double fc_ghz);

}  // namespace mnige
