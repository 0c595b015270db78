#include "mnige/common.hpp"

#include <algorithm>
#include <stdexcept>

namespace mnige {

cd geometric_sum(double theta, long long a, long long b) {
    if (b < a) {
        return {0.0, 0.0};
    }
    const auto len = static_cast<double>(b - a + 1);
    const double k = std::round(theta / two_pi);
    const double eps = theta - two_pi * k;
    const double center = static_cast<double>(a) + (len - 1.0) * 0.5;
    // exp(j*theta*n) == exp(j*eps*n) for integer n, so only eps matters.
    if (std::abs(eps) * len < 1e-9) {
        return std::polar(len, eps * center);
    }
    // Reducing theta to eps is exact for integer n; the k-dependent signs of
    // the sine ratio and of exp(j theta center) cancel because a is integral.
    const double ratio = std::sin(eps * len * 0.5) / std::sin(eps * 0.5);
    return std::polar(ratio, eps * center);
}

Fft::Fft(int n) : n_(n), bitrev_(static_cast<size_t>(n)), twiddle_(static_cast<size_t>(n / 2)) {
    if (n < 2 || (n & (n - 1)) != 0) {
        throw std::invalid_argument("fft size must be a power of two >= 2");
    }
    int log2n = 0;
    while ((1 << log2n) < n) {
        ++log2n;
    }
    for (int i = 0; i < n; ++i) {
        int rev = 0;
        for (int bit = 0; bit < log2n; ++bit) {
            rev = (rev << 1) | ((i >> bit) & 1);
        }
        bitrev_[static_cast<size_t>(i)] = rev;
    }
    for (int k = 0; k < n / 2; ++k) {
        twiddle_[static_cast<size_t>(k)] = std::polar(1.0, -two_pi * k / n);
    }
}

void Fft::transform(cd* data, bool invert) const {
    for (int i = 0; i < n_; ++i) {
        const int j = bitrev_[static_cast<size_t>(i)];
        if (i < j) {
            std::swap(data[i], data[j]);
        }
    }
    for (int len = 2; len <= n_; len <<= 1) {
        const int half = len >> 1;
        const int stride = n_ / len;
        for (int start = 0; start < n_; start += len) {
            for (int k = 0; k < half; ++k) {
                cd w = twiddle_[static_cast<size_t>(k * stride)];
                if (invert) {
                    w = std::conj(w);
                }
                const cd even = data[start + k];
                const cd odd = data[start + k + half] * w;
                data[start + k] = even + odd;
                data[start + k + half] = even - odd;
            }
        }
    }
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) {
        throw std::invalid_argument("quantile of empty sample");
    }
    std::sort(values.begin(), values.end());
    const double pos = q * (static_cast<double>(values.size()) - 1.0);
    const auto lo = static_cast<size_t>(std::floor(pos));
    const auto hi = static_cast<size_t>(std::ceil(pos));
    const double frac = pos - std::floor(pos);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

}  // namespace mnige
