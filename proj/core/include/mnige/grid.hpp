#pragma once

#include <utility>
#include <vector>

namespace mnige {

// One OFDM numerology: subcarrier spacing doubles per index while the FFT
// length halves, so every numerology spans the same sample rate and bandwidth.
struct Numerology {
    int index = 0;       // mu
    double scs_hz = 0;   // 15 kHz * 2^mu by default
    int n_fft = 0;       // base_fft >> mu
    int n_cp = 0;        // round(cp_fraction * n_fft)

    int symbol_samples() const { return n_fft + n_cp; }
};

Numerology build_numerology(int index, int base_fft = 512, double cp_fraction = 0.07,
                            double base_scs_hz = 15e3);

struct RbInfo {
    int band = 0;         // index into ResourceGrid::numerologies
    int first_bin = 0;    // absolute bin index on this band's numerology grid
    double center_hz = 0;
};

// A single frequency layout shared by every base station: contiguous bands,
// each carrying one numerology, split into resource blocks of rb_size
// subcarriers. Time is organized in resource block groups (RBGs) whose sample
// count equals one numerology-0 symbol, so 2^mu symbols of numerology mu fit
// exactly; probing blocks are a fixed number of RBGs.
struct ResourceGrid {
    int rb_size = 12;  // subcarriers per RB, B
    int base_fft = 512;
    int base_cp = 36;
    double base_scs_hz = 15e3;
    int block_len_rbgs = 28;

    std::vector<Numerology> numerologies;  // one per band
    std::vector<int> band_rb_count;
    std::vector<int> band_first_bin;  // start bin on the band's own grid
    std::vector<RbInfo> rbs;          // all RBs in frequency order

    int n_rb() const { return static_cast<int>(rbs.size()); }
    int rbg_samples() const { return base_fft + base_cp; }
    int block_samples() const { return block_len_rbgs * rbg_samples(); }
    double sample_rate_hz() const { return base_scs_hz * base_fft; }

    int mu(int rb) const { return numerologies[static_cast<size_t>(rbs[static_cast<size_t>(rb)].band)].index; }
    const Numerology& rb_numerology(int rb) const {
        return numerologies[static_cast<size_t>(rbs[static_cast<size_t>(rb)].band)];
    }
    int rb_first_bin(int rb) const { return rbs[static_cast<size_t>(rb)].first_bin; }

    // symbols of the RB's numerology inside one RBG / one block
    int symbols_per_rbg(int rb) const { return 1 << mu(rb); }
    int symbols_per_block(int rb) const { return block_len_rbgs * symbols_per_rbg(rb); }

    // per-subcarrier noise floor is N0 * scs; an RB integrates rb_size bins
    double rb_noise_watt(int rb, double noise_psd_w_hz) const {
        return noise_psd_w_hz * rb_numerology(rb).scs_hz * rb_size;
    }
};

// bands: (numerology index, RB count) in increasing frequency order
ResourceGrid build_grid(const std::vector<std::pair<int, int>>& bands, int rb_size = 12,
                        int block_len_rbgs = 28, int base_fft = 512, double cp_fraction = 0.07,
                        double base_scs_hz = 15e3);

// 1-based inclusive subcarrier span of RB d on its own numerology grid,
// counted from the grid origin: [B(d-1)+1, Bd] for uniform rb_size B.
std::pair<int, int> rb_subcarriers(const ResourceGrid& grid, int rb_one_based);

}  // namespace mnige
