#pragma once

#include "mnige/channel.hpp"
#include "mnige/common.hpp"
#include "mnige/grid.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mnige {

// Power coupling between two resource blocks of one link, averaged over the
// receive-symbol instances of a probing block. s_cur multiplies the block's
// own transmit power, q_prev the previous block's (inter-block leakage from
// delay spread plus timing offset exceeding the receive CP).
struct RbCoupling {
    double s_cur = 0.0;
    double q_prev = 0.0;
    double steady() const { return s_cur + q_prev; }
};

// Closed-form expected per-RB gains for one BS -> UE link: every receive
// window instance in a block is expanded into geometric sums over the
// overlapping transmit symbols, so values are exact expectations over the
// symbol distribution, not Monte Carlo. Units are physical: received watts =
// transmit watts * gain.
class GainOracle {
  public:
    GainOracle(const ResourceGrid& grid, const LinkChannel& ch);

    RbCoupling rb_gain(int src_rb, int dst_rb) const;

  private:
    const ResourceGrid& grid_;
    const LinkChannel& ch_;
    double rho_;  // rotation, cycles per sample
    std::vector<std::vector<cd>> band_response_;  // H[m] per band
};

// Whole interference graph: rows index sources (k * n_rb + l), columns sinks
// (z * n_rb + d). noise_w is the per-RB integrated noise floor.
struct InterferenceGraph {
    int n_bs = 0;
    int n_ue = 0;
    int n_rb = 0;
    Eigen::MatrixXd s_cur;
    Eigen::MatrixXd q_prev;
    std::vector<double> noise_w;

    Eigen::MatrixXd steady() const { return s_cur + q_prev; }
    int src_index(int bs, int rb) const { return bs * n_rb + rb; }
    int dst_index(int ue, int rb) const { return ue * n_rb + rb; }
};

InterferenceGraph build_graph(const ResourceGrid& grid,
                              const std::vector<std::vector<LinkChannel>>& links,
                              double noise_psd_w_hz);

// Flat unit channel, perfectly aligned, same numerology: the scaled-unit
// subcarrier gain is 2^mu on the diagonal and exactly zero otherwise.
double gain_subcarrier_same(const Numerology& num, int m, int d);

// Flat unit channel, aligned, source and sink on different numerologies:
// physical-unit gain of source bin m into sink bin d. Peaks at 1 when the
// bins share a center frequency.
double gain_subcarrier_cross(const Numerology& src, const Numerology& dst, int m, int d);

// Literal per-RB aggregation of a bin-pair gain table: sum / B^2.
double aggregate_rb(const Eigen::MatrixXd& bin_gains);

// Envelope of the aligned cross-numerology gain at sink-bin offset delta:
// 2^(2 mu - 1) / delta^2, and the one-RB-away floor 1 / (2 B^2).
struct DecayBound {
    double envelope;
    double rb_edge_floor;
};
DecayBound decay_bound(int mu_dst, int delta_bins, int rb_size);

// Leakage-to-signal ratio approximation for a co-channel source whose delay
// spread plus timing offset exceeds the receive CP: N_L / ((N - zeta) n_rbg)
// with N_L = max(0, n_taps + zeta - n_cp).
double q_over_s_approx(const Numerology& dst, int n_taps, int zeta, int n_rbg);

}  // namespace mnige
