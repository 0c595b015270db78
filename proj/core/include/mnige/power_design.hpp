#pragma once

#include "mnige/common.hpp"
#include "mnige/grid.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mnige {

struct PowerBounds {
    double max_rb_w = 1.0;  // per RB per block
    double max_bs_w = 40.0; // per BS per block, summed over its RBs
};

// Probing transmit powers over one measurement period: one row per block, one
// column per source (BS k's RB l sits at column k * n_rb + l), physical watts.
struct TransmitPowerMatrix {
    Eigen::MatrixXd entries_w;
    int n_bs = 0;
    int n_rb = 0;

    int n_blocks() const { return static_cast<int>(entries_w.rows()); }
    int n_src() const { return static_cast<int>(entries_w.cols()); }
    int src_index(int bs, int rb) const { return bs * n_rb + rb; }
};

// Square design: as many blocks as sources, iid positive entries. Any source
// subset is almost surely independent; regenerates on a degenerate draw.
TransmitPowerMatrix construct_full_rank(const ResourceGrid& grid, int n_bs,
                                        const PowerBounds& bounds, Rng& rng);

// Short design: only group_size blocks. The first group_size trajectories seed
// a random invertible matrix; every further source transmits a positive random
// combination of group_size existing trajectories, which keeps every
// group_size-subset of columns independent almost surely (checked exhaustively
// when the subset count is small). n_blocks > group_size gives an
// overdetermined design with the same subset property.
TransmitPowerMatrix construct_reduced(const ResourceGrid& grid, int n_bs, int group_size,
                                      const PowerBounds& bounds, Rng& rng, int n_blocks = 0);

// Practical probing variant of a nominal design: every entry is scaled by an
// independent factor in (1 - spread, 1], which makes duplicated rows linearly
// independent almost surely while never exceeding the nominal power. Small
// spreads leave the matrix poorly conditioned on purpose; the conditioning
// stage is what brings kappa down.
TransmitPowerMatrix scale_to_full_rank(const TransmitPowerMatrix& base, double spread,
                                       Rng& rng);

struct GroupCheck {
    bool full_rank = false;
    double kappa = 0.0;
};

// Condition/rank report of the design restricted to each sink's source group.
std::vector<GroupCheck> verify_groups(const TransmitPowerMatrix& p,
                                      const std::vector<std::vector<int>>& groups);

// Central moments of |X|^2 for square QAM with levels at odd multiples of
// level_unit: per-axis variance sigma_sq, fourth-moment spread sigma_tilde_sq
// of the power samples, and the worst-case deviation bound b.
struct QamMoments {
    double sigma_sq = 0.0;
    double sigma_tilde_sq = 0.0;
    double b = 0.0;
    double mean_power = 0.0;  // 2 sigma_sq
};
QamMoments qam_moments(int order, double level_unit = 1.0);

// Two-sided Bennett bound on P(|mean of n power samples - mu| >= delta mu).
// QPSK has constant per-sample power, so the probability is exactly zero.
double bennett_deviation_bound(int order, double delta, double n_samples);

// Smallest n with bennett_deviation_bound <= 1 - confidence.
double required_samples(int order, double delta, double confidence);

// Power samples an RB contributes per probing block: rb_size * 2^mu * n_rbg.
long samples_per_rb_block(const ResourceGrid& grid, int rb);

}  // namespace mnige
