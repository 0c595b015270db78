#include "mnige/phy.hpp"

#include <stdexcept>

namespace mnige {

Constellation Constellation::square_qam(int order, double level_unit) {
    const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(order))));
    if (side * side != order || side < 2 || (side & (side - 1)) != 0) {
        throw std::invalid_argument("QAM order must be an even power of two");
    }
    Constellation c;
    c.order = order;
    c.level_unit = level_unit;
    c.points.reserve(static_cast<size_t>(order));
    for (int i = 0; i < side; ++i) {
        for (int q = 0; q < side; ++q) {
            const double re = (2 * i - side + 1) * level_unit;
            const double im = (2 * q - side + 1) * level_unit;
            c.points.push_back({re, im});
        }
    }
    c.mean_power = 2.0 * (order - 1) / 3.0 * level_unit * level_unit;
    return c;
}

std::vector<cd> draw_symbols(const Constellation& c, Rng& rng, int count, double mean_power) {
    const double scale = std::sqrt(mean_power / c.mean_power);
    std::vector<cd> out(static_cast<size_t>(count));
    for (auto& x : out) {
        x = scale * c.points[static_cast<size_t>(rng.uniform_int(0, c.order - 1))];
    }
    return out;
}

RandomQamSource::RandomQamSource(const ResourceGrid& grid, const TxPlan& plan, Rng rng,
                                 int warmup_blocks)
    : grid_(grid), plan_(plan), rng_(rng), warmup_blocks_(warmup_blocks) {
    if (plan.rb_power_w.cols() != grid.n_rb()) {
        throw std::invalid_argument("plan does not cover the grid's resource blocks");
    }
    if (static_cast<int>(plan.rb_qam_order.size()) != grid.n_rb()) {
        throw std::invalid_argument("every resource block needs a constellation order");
    }
    constellations_.reserve(static_cast<size_t>(grid.n_rb()));
    for (const int order : plan.rb_qam_order) {
        constellations_.push_back(Constellation::square_qam(order));
    }
}

void RandomQamSource::fill(int band, long sym, cd* bins) {
    const Numerology& num = grid_.numerologies[static_cast<size_t>(band)];
    const long rbg = sym >> num.index;
    long block = rbg / grid_.block_len_rbgs - warmup_blocks_;
    if (block < 0) {
        block = 0;  // warm-up replays the first block's powers
    }
    for (int rb = 0; rb < grid_.n_rb(); ++rb) {
        if (grid_.rbs[static_cast<size_t>(rb)].band != band) {
            continue;
        }
        const double watts = plan_.rb_power_w(block, rb);
        if (watts <= 0.0) {
            continue;
        }
        const Constellation& c = constellations_[static_cast<size_t>(rb)];
        const double bin_power = static_cast<double>(num.n_fft) * watts / grid_.rb_size;
        const double scale = std::sqrt(bin_power / c.mean_power);
        const int first = grid_.rbs[static_cast<size_t>(rb)].first_bin;
        for (int b = 0; b < grid_.rb_size; ++b) {
            bins[first + b] =
                scale * c.points[static_cast<size_t>(rng_.uniform_int(0, c.order - 1))];
        }
    }
}

std::vector<cd> synthesize(const ResourceGrid& grid, SymbolSource& source, int n_blocks,
                           int warmup_blocks) {
    const long total_rbgs = static_cast<long>(n_blocks + warmup_blocks) * grid.block_len_rbgs;
    const long total_samples = total_rbgs * grid.rbg_samples();
    std::vector<cd> out(static_cast<size_t>(total_samples), cd{0.0, 0.0});
    std::vector<cd> buf;
    for (size_t band = 0; band < grid.numerologies.size(); ++band) {
        const Numerology& num = grid.numerologies[band];
        const Fft fft(num.n_fft);
        const double unit = 1.0 / std::sqrt(static_cast<double>(num.n_fft));
        const long n_sym = total_rbgs << num.index;
        const int sym_len = num.symbol_samples();
        buf.assign(static_cast<size_t>(num.n_fft), cd{0.0, 0.0});
        for (long s = 0; s < n_sym; ++s) {
            std::fill(buf.begin(), buf.end(), cd{0.0, 0.0});
            source.fill(static_cast<int>(band), s, buf.data());
            fft.inverse(buf.data());
            const long start = s * sym_len;
            cd* dst = out.data() + start;
            // cyclic prefix copies the symbol tail
            for (int n = 0; n < num.n_cp; ++n) {
                dst[n] += unit * buf[static_cast<size_t>(num.n_fft - num.n_cp + n)];
            }
            for (int n = 0; n < num.n_fft; ++n) {
                dst[num.n_cp + n] += unit * buf[static_cast<size_t>(n)];
            }
        }
    }
    return out;
}

std::vector<cd> receive(const std::vector<const std::vector<cd>*>& tx_streams,
                        const std::vector<const LinkChannel*>& links, const ResourceGrid& grid,
                        double noise_psd_w_hz, Rng& rng) {
    if (tx_streams.size() != links.size()) {
        throw std::invalid_argument("one channel per transmit stream required");
    }
    size_t n = 0;
    for (const auto* s : tx_streams) {
        n = std::max(n, s->size());
    }
    std::vector<cd> y(n, cd{0.0, 0.0});
    std::vector<cd> conv;
    for (size_t k = 0; k < tx_streams.size(); ++k) {
        const std::vector<cd>& x = *tx_streams[k];
        const LinkChannel& ch = *links[k];
        const long len = static_cast<long>(x.size());
        conv.assign(n, cd{0.0, 0.0});
        for (size_t l = 0; l < ch.taps.size(); ++l) {
            const long off = ch.to_samples + static_cast<long>(l);
            const long lo = std::max<long>(0, off);
            const long hi = std::min<long>(static_cast<long>(n), len + off);
            if (lo >= hi) {
                continue;
            }
            Eigen::Map<Eigen::ArrayXcd> cv(conv.data() + lo, hi - lo);
            Eigen::Map<const Eigen::ArrayXcd> xs(x.data() + (lo - off), hi - lo);
            cv += ch.taps[l] * xs;
        }
        if (ch.cfo == 0.0) {
            Eigen::Map<Eigen::ArrayXcd>(y.data(), static_cast<long>(n)) +=
                Eigen::Map<const Eigen::ArrayXcd>(conv.data(), static_cast<long>(n));
        } else {
            const double rho = ch.cfo / grid.base_fft;
            const cd step = std::polar(1.0, two_pi * rho);
            cd rot{1.0, 0.0};
            for (long i = 0; i < static_cast<long>(n); ++i) {
                y[static_cast<size_t>(i)] += rot * conv[static_cast<size_t>(i)];
                rot *= step;
                if ((i & 0xfff) == 0xfff) {
                    rot /= std::abs(rot);  // keep the oscillator on the unit circle
                }
            }
        }
    }
    if (noise_psd_w_hz > 0.0) {
        const double sigma = std::sqrt(noise_psd_w_hz * grid.sample_rate_hz());
        for (auto& v : y) {
            v += sigma * rng.cnormal();
        }
    }
    return y;
}

Eigen::MatrixXd measure_rx_power(const ResourceGrid& grid, const std::vector<cd>& y, int n_blocks,
                                 int warmup_blocks) {
    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n_blocks, grid.n_rb());
    std::vector<cd> buf;
    const long skip = static_cast<long>(warmup_blocks) * grid.block_samples();
    for (size_t band = 0; band < grid.numerologies.size(); ++band) {
        const Numerology& num = grid.numerologies[band];
        const Fft fft(num.n_fft);
        const int sym_len = num.symbol_samples();
        const long sym_per_block = static_cast<long>(grid.block_len_rbgs) << num.index;
        buf.resize(static_cast<size_t>(num.n_fft));
        for (int blk = 0; blk < n_blocks; ++blk) {
            const long block_start = skip + static_cast<long>(blk) * grid.block_samples();
            for (long s = 0; s < sym_per_block; ++s) {
                const long w0 = block_start + s * sym_len + num.n_cp;
                if (w0 + num.n_fft > static_cast<long>(y.size())) {
                    throw std::invalid_argument("receive stream shorter than the block layout");
                }
                std::copy(y.begin() + w0, y.begin() + w0 + num.n_fft, buf.begin());
                fft.forward(buf.data());
                for (int rb = 0; rb < grid.n_rb(); ++rb) {
                    if (grid.rbs[static_cast<size_t>(rb)].band != static_cast<int>(band)) {
                        continue;
                    }
                    const int first = grid.rbs[static_cast<size_t>(rb)].first_bin;
                    double acc = 0.0;
                    for (int b = 0; b < grid.rb_size; ++b) {
                        acc += std::norm(buf[static_cast<size_t>(first + b)]);
                    }
                    p(blk, rb) += acc;
                }
            }
            for (int rb = 0; rb < grid.n_rb(); ++rb) {
                if (grid.rbs[static_cast<size_t>(rb)].band == static_cast<int>(band)) {
                    // n_fft once for unitary analysis, once more because a bin
                    // carries n_fft * watts / B; then average the symbols
                    const double nf = static_cast<double>(num.n_fft);
                    p(blk, rb) /= nf * nf * static_cast<double>(sym_per_block);
                }
            }
        }
    }
    return p;
}

std::vector<Eigen::MatrixXd> simulate_period(const ResourceGrid& grid,
                                             const std::vector<TxPlan>& plans,
                                             const std::vector<std::vector<LinkChannel>>& links,
                                             double noise_psd_w_hz, Rng& rng, int warmup_blocks) {
    const int n_bs = static_cast<int>(plans.size());
    if (static_cast<int>(links.size()) != n_bs) {
        throw std::invalid_argument("links must have one row per BS");
    }
    const int n_blocks = plans.front().n_blocks();
    std::vector<std::vector<cd>> streams;
    streams.reserve(static_cast<size_t>(n_bs));
    for (int k = 0; k < n_bs; ++k) {
        if (plans[static_cast<size_t>(k)].n_blocks() != n_blocks) {
            throw std::invalid_argument("all plans must cover the same number of blocks");
        }
        RandomQamSource src(grid, plans[static_cast<size_t>(k)], rng.fork(static_cast<std::uint64_t>(k)),
                            warmup_blocks);
        streams.push_back(synthesize(grid, src, n_blocks, warmup_blocks));
    }
    const int n_ue = static_cast<int>(links.front().size());
    std::vector<Eigen::MatrixXd> out;
    out.reserve(static_cast<size_t>(n_ue));
    for (int z = 0; z < n_ue; ++z) {
        std::vector<const std::vector<cd>*> xs;
        std::vector<const LinkChannel*> chs;
        for (int k = 0; k < n_bs; ++k) {
            xs.push_back(&streams[static_cast<size_t>(k)]);
            chs.push_back(&links[static_cast<size_t>(k)][static_cast<size_t>(z)]);
        }
        Rng noise_rng = rng.fork(0x1000u + static_cast<std::uint64_t>(z));
        const std::vector<cd> y = receive(xs, chs, grid, noise_psd_w_hz, noise_rng);
        out.push_back(measure_rx_power(grid, y, n_blocks, warmup_blocks));
    }
    return out;
}

}  // namespace mnige
