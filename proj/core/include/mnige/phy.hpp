#pragma once

#include "mnige/channel.hpp"
#include "mnige/common.hpp"
#include "mnige/grid.hpp"

#include <Eigen/Dense>

#include <vector>

namespace mnige {

// Square QAM with points at odd multiples of level_unit on each axis.
// mean_power = 2 (M - 1) / 3 * level_unit^2; corner power caps at
// 2 (sqrt(M) - 1)^2 level_unit^2.
struct Constellation {
    int order = 4;
    double level_unit = 1.0;
    std::vector<cd> points;
    double mean_power = 0.0;

    static Constellation square_qam(int order, double level_unit = 1.0);
};

std::vector<cd> draw_symbols(const Constellation& c, Rng& rng, int count, double mean_power);

// Transmit powers for one BS over the measurement period, physical watts per
// RB per probing block. A zero entry silences the RB for that block.
struct TxPlan {
    Eigen::MatrixXd rb_power_w;     // n_blocks x n_rb
    std::vector<int> rb_qam_order;  // per RB, one of {4, 16, 64, 256}

    int n_blocks() const { return static_cast<int>(rb_power_w.rows()); }
};

// Supplies frequency-domain coefficients for one band symbol at a time. bins
// has the band numerology's full fft length and arrives zeroed; implementations
// write the occupied bins. sym counts symbols of that numerology from the start
// of the emitted stream (warm-up included).
class SymbolSource {
  public:
    virtual ~SymbolSource() = default;
    virtual void fill(int band, long sym, cd* bins) = 0;
};

// Draws iid QAM symbols per RB with E|X|^2 = n_fft * watts / rb_size so that
// measured bin power is physical. Warm-up symbols replay block 0's powers.
class RandomQamSource : public SymbolSource {
  public:
    RandomQamSource(const ResourceGrid& grid, const TxPlan& plan, Rng rng, int warmup_blocks);
    void fill(int band, long sym, cd* bins) override;

  private:
    const ResourceGrid& grid_;
    const TxPlan& plan_;
    Rng rng_;
    int warmup_blocks_;
    std::vector<Constellation> constellations_;  // per RB
};

// Time-domain baseband for one BS: warmup_blocks + n_blocks probing blocks,
// all bands summed, unitary synthesis (1/sqrt(N) IDFT) with cyclic prefixes.
std::vector<cd> synthesize(const ResourceGrid& grid, SymbolSource& source, int n_blocks,
                           int warmup_blocks = 1);

// y[n] = sum_k exp(j 2 pi rho_k n) sum_l h_kl x_k[n - l - to_k] + v[n],
// rho_k = cfo_k / base_fft, v complex white with variance noise_psd * f_sample.
// Samples before the stream start are zero; keep timing offsets inside the
// warm-up region.
std::vector<cd> receive(const std::vector<const std::vector<cd>*>& tx_streams,
                        const std::vector<const LinkChannel*>& links, const ResourceGrid& grid,
                        double noise_psd_w_hz, Rng& rng);

// Per-RB received power, physical watts: average over the block's symbols of
// sum_bins |Y|^2 / n_fft. Warm-up blocks are skipped.
Eigen::MatrixXd measure_rx_power(const ResourceGrid& grid, const std::vector<cd>& y, int n_blocks,
                                 int warmup_blocks = 1);

// Full downlink sweep: every BS transmits its plan, every UE measures.
// links[k][z] is the BS k -> UE z channel. Returns one n_blocks x n_rb watts
// matrix per UE.
std::vector<Eigen::MatrixXd> simulate_period(const ResourceGrid& grid,
                                             const std::vector<TxPlan>& plans,
                                             const std::vector<std::vector<LinkChannel>>& links,
                                             double noise_psd_w_hz, Rng& rng,
                                             int warmup_blocks = 1);

}  // namespace mnige
