#include "mnige/gain_oracle.hpp"

#include <stdexcept>

namespace mnige {

namespace {

long floordiv(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) {
        --q;
    }
    return q;
}

}  // namespace

GainOracle::GainOracle(const ResourceGrid& grid, const LinkChannel& ch)
    : grid_(grid), ch_(ch), rho_(ch.cfo / grid.base_fft) {
    const int spread = ch.to_samples + static_cast<int>(ch.taps.size()) - 1;
    if (spread > grid.rbg_samples()) {
        // every window past the first RBG must see only the current block
        throw std::invalid_argument("timing offset plus delay spread exceeds one RBG");
    }
    band_response_.reserve(grid.numerologies.size());
    for (const Numerology& num : grid.numerologies) {
        band_response_.push_back(freq_response(ch.taps, num.n_fft));
    }
}

RbCoupling GainOracle::rb_gain(int src_rb, int dst_rb) const {
    const RbInfo& src = grid_.rbs[static_cast<size_t>(src_rb)];
    const RbInfo& dst = grid_.rbs[static_cast<size_t>(dst_rb)];
    const Numerology& nj = grid_.numerologies[static_cast<size_t>(src.band)];
    const Numerology& ni = grid_.numerologies[static_cast<size_t>(dst.band)];
    const std::vector<cd>& h_src = band_response_[static_cast<size_t>(src.band)];

    const int n_rbg = grid_.block_len_rbgs;
    const long sym_len_j = nj.symbol_samples();
    const long sym_per_block_j = static_cast<long>(n_rbg) << nj.index;
    const long zeta = ch_.to_samples;
    const long n_taps = static_cast<long>(ch_.taps.size());
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(ni.n_fft) *
                                            static_cast<double>(nj.n_fft));
    const double unit_conv = static_cast<double>(nj.n_fft) / static_cast<double>(ni.n_fft);

    double s_acc = 0.0;
    double q_acc = 0.0;

    const int inst_rbgs = n_rbg == 1 ? 1 : 2;
    for (int r = 0; r < inst_rbgs; ++r) {
        const double weight = r == 0 ? 1.0 : static_cast<double>(n_rbg - 1);
        for (int s = 0; s < (1 << ni.index); ++s) {
            const long w0 =
                static_cast<long>(r * (1 << ni.index) + s) * ni.symbol_samples() + ni.n_cp;
            const long u_min = floordiv(w0 - zeta - (n_taps - 1), sym_len_j);
            const long u_max = floordiv(w0 + ni.n_fft - 1 - zeta, sym_len_j);
            for (long u = u_min; u <= u_max; ++u) {
                const long base = u * sym_len_j - w0 + zeta;  // n at the symbol's first sample
                const bool full_window =
                    base + n_taps - 1 <= 0 && base + sym_len_j - 1 >= ni.n_fft - 1;
                const long t_ref = u * sym_len_j + nj.n_cp;
                const long block_of_u = floordiv(u, sym_per_block_j);
                if (block_of_u < -1 || block_of_u > 0) {
                    throw std::logic_error("transmit symbol outside current/previous block");
                }
                double& acc = block_of_u == 0 ? s_acc : q_acc;
                for (int db = 0; db < grid_.rb_size; ++db) {
                    const int d = dst.first_bin + db;
                    for (int mb = 0; mb < grid_.rb_size; ++mb) {
                        const int m = src.first_bin + mb;
                        const double theta =
                            two_pi * (rho_ + static_cast<double>(m) / nj.n_fft -
                                      static_cast<double>(d) / ni.n_fft);
                        const double psi =
                            two_pi * (rho_ * static_cast<double>(w0) +
                                      static_cast<double>(m) *
                                          static_cast<double>(w0 - zeta - t_ref) / nj.n_fft);
                        cd a;
                        if (full_window) {
                            a = geometric_sum(theta, 0, ni.n_fft - 1) * std::polar(1.0, psi) *
                                h_src[static_cast<size_t>(m)];
                        } else {
                            cd sum{0.0, 0.0};
                            for (long l = 0; l < n_taps; ++l) {
                                const long lo = std::max<long>(0, base + l);
                                const long hi =
                                    std::min<long>(ni.n_fft - 1, base + sym_len_j - 1 + l);
                                if (lo > hi) {
                                    continue;
                                }
                                const double phase =
                                    psi - two_pi * static_cast<double>(m) *
                                              static_cast<double>(l) / nj.n_fft;
                                sum += ch_.taps[static_cast<size_t>(l)] *
                                       std::polar(1.0, phase) * geometric_sum(theta, lo, hi);
                            }
                            a = sum;
                        }
                        acc += weight * std::norm(inv_sqrt * a) * unit_conv;
                    }
                }
            }
        }
    }
    const double norm = static_cast<double>(grid_.rb_size) * static_cast<double>(n_rbg) *
                        static_cast<double>(1 << ni.index);
    return {s_acc / norm, q_acc / norm};
}

InterferenceGraph build_graph(const ResourceGrid& grid,
                              const std::vector<std::vector<LinkChannel>>& links,
                              double noise_psd_w_hz) {
    InterferenceGraph g;
    g.n_bs = static_cast<int>(links.size());
    g.n_ue = static_cast<int>(links.front().size());
    g.n_rb = grid.n_rb();
    g.s_cur = Eigen::MatrixXd::Zero(g.n_bs * g.n_rb, g.n_ue * g.n_rb);
    g.q_prev = Eigen::MatrixXd::Zero(g.n_bs * g.n_rb, g.n_ue * g.n_rb);
    g.noise_w.resize(static_cast<size_t>(g.n_rb));
    for (int d = 0; d < g.n_rb; ++d) {
        g.noise_w[static_cast<size_t>(d)] = grid.rb_noise_watt(d, noise_psd_w_hz);
    }
    for (int k = 0; k < g.n_bs; ++k) {
        for (int z = 0; z < g.n_ue; ++z) {
            const GainOracle oracle(grid, links[static_cast<size_t>(k)][static_cast<size_t>(z)]);
            for (int l = 0; l < g.n_rb; ++l) {
                for (int d = 0; d < g.n_rb; ++d) {
                    const RbCoupling c = oracle.rb_gain(l, d);
                    g.s_cur(g.src_index(k, l), g.dst_index(z, d)) = c.s_cur;
                    g.q_prev(g.src_index(k, l), g.dst_index(z, d)) = c.q_prev;
                }
            }
        }
    }
    return g;
}

double gain_subcarrier_same(const Numerology& num, int m, int d) {
    const double theta = two_pi * static_cast<double>(m - d) / num.n_fft;
    const cd a = geometric_sum(theta, 0, num.n_fft - 1) / static_cast<double>(num.n_fft);
    return static_cast<double>(1 << num.index) * std::norm(a);
}

double gain_subcarrier_cross(const Numerology& src, const Numerology& dst, int m, int d) {
    if (src.index == dst.index) {
        throw std::invalid_argument("cross-numerology gain needs distinct numerologies");
    }
    const double theta = two_pi * (static_cast<double>(m) / src.n_fft -
                                   static_cast<double>(d) / dst.n_fft);
    const cd a = geometric_sum(theta, 0, dst.n_fft - 1) /
                 std::sqrt(static_cast<double>(src.n_fft) * static_cast<double>(dst.n_fft));
    return std::norm(a) * static_cast<double>(src.n_fft) / static_cast<double>(dst.n_fft);
}

double aggregate_rb(const Eigen::MatrixXd& bin_gains) {
    const double b = static_cast<double>(bin_gains.rows());
    if (bin_gains.rows() != bin_gains.cols() || b < 1) {
        throw std::invalid_argument("bin gain table must be square");
    }
    return bin_gains.sum() / (b * b);
}

DecayBound decay_bound(int mu_dst, int delta_bins, int rb_size) {
    if (delta_bins < 1) {
        throw std::invalid_argument("offset must be at least one bin");
    }
    DecayBound bound;
    bound.envelope = std::pow(2.0, 2 * mu_dst - 1) / (static_cast<double>(delta_bins) *
                                                      static_cast<double>(delta_bins));
    bound.rb_edge_floor = 1.0 / (2.0 * rb_size * rb_size);
    return bound;
}

double q_over_s_approx(const Numerology& dst, int n_taps, int zeta, int n_rbg) {
    const double leak = std::max(0, n_taps + zeta - dst.n_cp);
    return leak / (static_cast<double>(dst.n_fft - zeta) * n_rbg);
}

}  // namespace mnige
