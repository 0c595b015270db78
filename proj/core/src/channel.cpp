#include "mnige/channel.hpp"

#include <stdexcept>

namespace mnige {

double path_loss_db(double distance_m, double fc_ghz) {
    if (distance_m <= 0.0 || fc_ghz <= 0.0) {
        throw std::invalid_argument("path loss needs positive distance and carrier");
    }
    return 22.4 + 35.3 * std::log10(distance_m) + 21.3 * std::log10(fc_ghz);
}

Topology build_topology(int n_bs, int ues_per_cell, Rng& rng, double cell_radius_m,
                        double inter_bs_m, double min_ue_dist_m) {
    if (n_bs < 1 || ues_per_cell < 1) {
        throw std::invalid_argument("topology needs at least one BS and one UE per cell");
    }
    Topology topo;
    topo.cell_radius_m = cell_radius_m;
    switch (n_bs) {
        case 1:
            topo.bs = {{0.0, 0.0}};
            break;
        case 2:
            topo.bs = {{0.0, 0.0}, {inter_bs_m, 0.0}};
            break;
        case 3:
            // equilateral triangle, every pair inter_bs_m apart
            topo.bs = {{0.0, 0.0},
                       {inter_bs_m, 0.0},
                       {inter_bs_m * 0.5, inter_bs_m * std::numbers::sqrt3 / 2.0}};
            break;
        default: {
            topo.bs.push_back({0.0, 0.0});
            for (int k = 1; k < n_bs; ++k) {
                const double phi = two_pi * static_cast<double>(k - 1) / (n_bs - 1);
                topo.bs.push_back({inter_bs_m * std::cos(phi), inter_bs_m * std::sin(phi)});
            }
            break;
        }
    }
    for (int k = 0; k < n_bs; ++k) {
        for (int z = 0; z < ues_per_cell; ++z) {
            // uniform over the annulus [min_ue_dist_m, cell_radius_m]
            const double r2_lo = min_ue_dist_m * min_ue_dist_m;
            const double r2_hi = cell_radius_m * cell_radius_m;
            const double r = std::sqrt(rng.uniform(r2_lo, r2_hi));
            const double phi = rng.uniform(0.0, two_pi);
            topo.ue.push_back(
                {topo.bs[static_cast<size_t>(k)].x + r * std::cos(phi),
                 topo.bs[static_cast<size_t>(k)].y + r * std::sin(phi)});
            topo.serving.push_back(k);
        }
    }
    return topo;
}

LinkChannel sample_channel(Rng& rng, int n_taps, double loss_db, double cfo, int to_samples) {
    if (n_taps < 1) {
        throw std::invalid_argument("channel needs at least one tap");
    }
    if (to_samples < 0) {
        throw std::invalid_argument("timing offsets are nonnegative in the receive window");
    }
    LinkChannel ch;
    ch.cfo = cfo;
    ch.to_samples = to_samples;
    ch.path_gain_lin = db_to_lin(-loss_db);
    const double tap_scale = std::sqrt(ch.path_gain_lin / n_taps);
    ch.taps.resize(static_cast<size_t>(n_taps));
    for (auto& tap : ch.taps) {
        tap = tap_scale * rng.cnormal();
    }
    return ch;
}

std::vector<cd> freq_response(const std::vector<cd>& taps, int n_fft) {
    std::vector<cd> h(static_cast<size_t>(n_fft));
    for (int m = 0; m < n_fft; ++m) {
        cd acc{0.0, 0.0};
        for (size_t l = 0; l < taps.size(); ++l) {
            acc += taps[l] * std::polar(1.0, -two_pi * m * static_cast<double>(l) / n_fft);
        }
        h[static_cast<size_t>(m)] = acc;
    }
    return h;
}

}  // namespace mnige
