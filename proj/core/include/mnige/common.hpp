#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace mnige {

using cd = std::complex<double>;

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double dbm_to_watt(double dbm) { return std::pow(10.0, (dbm - 30.0) / 10.0); }
inline double watt_to_dbm(double w) { return 10.0 * std::log10(w) + 30.0; }

// Deterministic across standard libraries: the engine is pinned by the C++
// standard and the real-valued mappings below are hand-rolled, so a (seed,
// stream) pair reproduces the same draws everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(mix(seed, stream)) {}

    std::uint64_t next_u64() { return engine_(); }

    // uniform on [0, 1) with 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double phi = two_pi * uniform();
        spare_ = r * std::sin(phi);
        have_spare_ = true;
        return r * std::cos(phi);
    }

    // circularly symmetric complex normal, unit variance (E|x|^2 = 1)
    cd cnormal() {
        const double re = normal();
        const double im = normal();
        return {re * std::numbers::sqrt2 / 2.0, im * std::numbers::sqrt2 / 2.0};
    }

    Rng fork(std::uint64_t stream) { return Rng(engine_(), stream); }

  private:
    static std::uint64_t splitmix(std::uint64_t& state) {
        state += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t s = seed;
        const std::uint64_t a = splitmix(s);
        s ^= 0x632be59bd9b4e019ull * (stream + 1);
        const std::uint64_t b = splitmix(s);
        return a ^ (b + 0x9e3779b97f4a7c15ull);
    }

    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// sum_{n=a}^{b} exp(j*theta*n), exact closed form; empty range gives 0.
// Stable near theta = 2*pi*k where the ratio form degenerates.
cd geometric_sum(double theta, long long a, long long b);

// Radix-2 decimation-in-time transform with cached twiddles. forward() uses the
// unitary-analysis sign convention exp(-j 2 pi m n / N); inverse() the opposite
// sign. Neither applies a 1/N or 1/sqrt(N) factor; callers own normalization.
class Fft {
  public:
    explicit Fft(int n);

    int size() const { return n_; }
    void forward(cd* data) const { transform(data, false); }
    void inverse(cd* data) const { transform(data, true); }

  private:
    void transform(cd* data, bool invert) const;

    int n_;
    std::vector<int> bitrev_;
    std::vector<cd> twiddle_;  // exp(-j 2 pi k / n), k < n/2
};

std::uint64_t fnv1a64(std::string_view bytes);

// quantile with linear interpolation; q in [0, 1]; data need not be sorted
double quantile(std::vector<double> values, double q);

double median(std::vector<double> values);

}  // namespace mnige
