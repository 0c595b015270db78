#pragma once

#include "mnige/common.hpp"

#include <vector>

namespace mnige {

// urban macro fit, distance in meters, carrier in GHz
double path_loss_db(double distance_m, double fc_ghz);

struct Vec2 {
    double x = 0;
    double y = 0;
};

inline double distance(const Vec2& a, const Vec2& b) {
    return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y));
}

struct Topology {
    std::vector<Vec2> bs;
    std::vector<Vec2> ue;
    std::vector<int> serving;  // serving BS per UE
    double cell_radius_m = 250.0;

    int n_bs() const { return static_cast<int>(bs.size()); }
    int n_ue() const { return static_cast<int>(ue.size()); }
};

// Up to three BSs sit on a mutual-distance simplex (500 m apart by default);
// larger layouts place one BS at the center and the rest on a ring. UEs drop
// uniformly in their serving cell's disk, at least min_ue_dist_m from the BS.
Topology build_topology(int n_bs, int ues_per_cell, Rng& rng, double cell_radius_m = 250.0,
                        double inter_bs_m = 500.0, double min_ue_dist_m = 10.0);

// One directed BS -> UE link. Taps embed path loss; delays are whole samples
// on the shared grid clock. to_samples is the symbol-timing offset of this
// source as seen in the UE's receive window (nonnegative; the window is
// anchored to the serving link). cfo is normalized to the numerology-0
// subcarrier spacing; the per-sample rotation is cfo / base_fft cycles.
struct LinkChannel {
    std::vector<cd> taps;
    double cfo = 0.0;
    int to_samples = 0;
    double path_gain_lin = 1.0;
};

// n_taps Rayleigh taps, uniform power profile, unit-mean total energy before
// path loss: E[sum |h_l|^2] = path gain.
LinkChannel sample_channel(Rng& rng, int n_taps, double loss_db, double cfo, int to_samples);

// H[m] = sum_l h_l exp(-j 2 pi m l / n_fft)
std::vector<cd> freq_response(const std::vector<cd>& taps, int n_fft);

}  // namespace mnige
