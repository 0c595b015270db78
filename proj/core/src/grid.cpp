#include "mnige/grid.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mnige {

Numerology build_numerology(int index, int base_fft, double cp_fraction, double base_scs_hz) {
    if (index < 0) {
        throw std::invalid_argument("numerology index must be nonnegative");
    }
    if (base_fft < 2 || (base_fft & (base_fft - 1)) != 0) {
        throw std::invalid_argument("base fft length must be a power of two");
    }
    if (base_fft % (1 << index) != 0 || (base_fft >> index) < 2) {
        throw std::invalid_argument("fft length not divisible down to numerology " +
                                    std::to_string(index));
    }
    if (cp_fraction <= 0.0 || cp_fraction >= 1.0) {
        throw std::invalid_argument("cp fraction must lie in (0, 1)");
    }
    Numerology num;
    num.index = index;
    num.scs_hz = base_scs_hz * static_cast<double>(1 << index);
    num.n_fft = base_fft >> index;
    num.n_cp = static_cast<int>(std::lround(cp_fraction * num.n_fft));
    if (num.n_cp < 1) {
        throw std::invalid_argument("cyclic prefix rounds to zero samples");
    }
    return num;
}

ResourceGrid build_grid(const std::vector<std::pair<int, int>>& bands, int rb_size,
                        int block_len_rbgs, int base_fft, double cp_fraction,
                        double base_scs_hz) {
    if (bands.empty()) {
        throw std::invalid_argument("grid needs at least one band");
    }
    if (rb_size < 1 || block_len_rbgs < 1) {
        throw std::invalid_argument("rb size and block length must be positive");
    }
    ResourceGrid grid;
    grid.rb_size = rb_size;
    grid.base_fft = base_fft;
    grid.base_scs_hz = base_scs_hz;
    grid.block_len_rbgs = block_len_rbgs;

    const Numerology base = build_numerology(0, base_fft, cp_fraction, base_scs_hz);
    grid.base_cp = base.n_cp;

    double offset_hz = 0.0;
    for (const auto& [mu, count] : bands) {
        if (count < 1) {
            throw std::invalid_argument("band must contain at least one resource block");
        }
        const Numerology num = build_numerology(mu, base_fft, cp_fraction, base_scs_hz);
        // RBGs must tile identically on every band or symbol windows drift
        if (num.symbol_samples() * (1 << mu) != base.symbol_samples()) {
            throw std::invalid_argument("cyclic prefix rounding breaks RBG alignment");
        }
        const double bins = offset_hz / num.scs_hz;
        const auto first_bin = static_cast<int>(std::lround(bins));
        if (std::abs(bins - first_bin) > 1e-9) {
            throw std::invalid_argument("band offset is not an integer bin of its numerology");
        }
        if (first_bin + count * rb_size > num.n_fft) {
            throw std::invalid_argument("band does not fit inside its numerology's fft span");
        }
        const int band_index = static_cast<int>(grid.numerologies.size());
        grid.numerologies.push_back(num);
        grid.band_rb_count.push_back(count);
        grid.band_first_bin.push_back(first_bin);
        for (int r = 0; r < count; ++r) {
            RbInfo rb;
            rb.band = band_index;
            rb.first_bin = first_bin + r * rb_size;
            rb.center_hz = (static_cast<double>(rb.first_bin) + (rb_size - 1) * 0.5) * num.scs_hz;
            grid.rbs.push_back(rb);
        }
        offset_hz += static_cast<double>(count * rb_size) * num.scs_hz;
    }
    if (offset_hz > grid.sample_rate_hz()) {
        throw std::invalid_argument("bands exceed the sample rate");
    }
    return grid;
}

std::pair<int, int> rb_subcarriers(const ResourceGrid& grid, int rb_one_based) {
    if (rb_one_based < 1 || rb_one_based > grid.n_rb()) {
        throw std::out_of_range("resource block index out of range");
    }
    const int b = grid.rb_size;
    return {b * (rb_one_based - 1) + 1, b * rb_one_based};
}

}  // namespace mnige
