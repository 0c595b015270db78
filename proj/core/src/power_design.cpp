#include "mnige/power_design.hpp"

#include <cmath>
#include <stdexcept>

namespace mnige {

namespace {

constexpr double kRankTol = 1e-9;
constexpr int kMaxDraws = 32;

bool subset_ok(const Eigen::MatrixXd& m) {
    const Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const auto& s = svd.singularValues();
    return s(s.size() - 1) > kRankTol * s(0);
}

// every group_size-subset of columns must be independent; exhaust when cheap
bool all_subsets_ok(const Eigen::MatrixXd& m, int group_size, long budget) {
    const int n = static_cast<int>(m.cols());
    std::vector<int> pick(static_cast<size_t>(group_size));
    for (int i = 0; i < group_size; ++i) {
        pick[static_cast<size_t>(i)] = i;
    }
    long visited = 0;
    while (true) {
        if (++visited > budget) {
            return true;  // spot-checked enough; generic position carries the rest
        }
        Eigen::MatrixXd sub(m.rows(), group_size);
        for (int i = 0; i < group_size; ++i) {
            sub.col(i) = m.col(pick[static_cast<size_t>(i)]);
        }
        if (!subset_ok(sub)) {
            return false;
        }
        int i = group_size - 1;
        while (i >= 0 && pick[static_cast<size_t>(i)] == n - group_size + i) {
            --i;
        }
        if (i < 0) {
            return true;
        }
        ++pick[static_cast<size_t>(i)];
        for (int j = i + 1; j < group_size; ++j) {
            pick[static_cast<size_t>(j)] = pick[static_cast<size_t>(j - 1)] + 1;
        }
    }
}

// scale columns to the per-RB cap, then everything to the per-BS cap
void apply_bounds(Eigen::MatrixXd& entries, int n_bs, int n_rb, const PowerBounds& bounds) {
    for (int c = 0; c < entries.cols(); ++c) {
        const double peak = entries.col(c).maxCoeff();
        if (peak > bounds.max_rb_w) {
            entries.col(c) *= bounds.max_rb_w / peak;
        }
    }
    double worst = 0.0;
    for (int k = 0; k < n_bs; ++k) {
        const auto block = entries.middleCols(k * n_rb, n_rb);
        worst = std::max(worst, block.rowwise().sum().maxCoeff());
    }
    if (worst > bounds.max_bs_w) {
        entries *= bounds.max_bs_w / worst;
    }
}

}  // namespace

TransmitPowerMatrix construct_full_rank(const ResourceGrid& grid, int n_bs,
                                        const PowerBounds& bounds, Rng& rng) {
    if (n_bs < 1) {
        throw std::invalid_argument("need at least one BS");
    }
    TransmitPowerMatrix p;
    p.n_bs = n_bs;
    p.n_rb = grid.n_rb();
    const int n = n_bs * grid.n_rb();
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        p.entries_w = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return rng.uniform(0.5, 1.5); });
        if (subset_ok(p.entries_w)) {
            apply_bounds(p.entries_w, n_bs, p.n_rb, bounds);
            return p;
        }
    }
    throw std::runtime_error("could not draw an invertible probing matrix");
}

TransmitPowerMatrix construct_reduced(const ResourceGrid& grid, int n_bs, int group_size,
                                      const PowerBounds& bounds, Rng& rng, int n_blocks) {
    const int n = n_bs * grid.n_rb();
    if (group_size < 1 || group_size > n) {
        throw std::invalid_argument("group size must lie in [1, number of sources]");
    }
    if (n_blocks == 0) {
        n_blocks = group_size;
    }
    if (n_blocks < group_size) {
        throw std::invalid_argument("fewer blocks than the group size cannot identify a group");
    }
    TransmitPowerMatrix p;
    p.n_bs = n_bs;
    p.n_rb = grid.n_rb();
    for (int attempt = 0; attempt < kMaxDraws; ++attempt) {
        Eigen::MatrixXd entries(n_blocks, n);
        for (int c = 0; c < std::min(group_size, n); ++c) {
            for (int r = 0; r < n_blocks; ++r) {
                entries(r, c) = rng.uniform(0.5, 1.5);
            }
        }
        for (int c = group_size; c < n; ++c) {
            Eigen::VectorXd combo = Eigen::VectorXd::Zero(n_blocks);
            // mix group_size distinct earlier trajectories with positive weights
            std::vector<int> chosen;
            while (static_cast<int>(chosen.size()) < group_size) {
                const int cand = rng.uniform_int(0, c - 1);
                bool seen = false;
                for (const int x : chosen) {
                    seen = seen || x == cand;
                }
                if (!seen) {
                    chosen.push_back(cand);
                }
            }
            for (const int src : chosen) {
                combo += rng.uniform(0.5, 1.5) * entries.col(src);
            }
            entries.col(c) = combo / static_cast<double>(group_size);
        }
        if (all_subsets_ok(entries, group_size, 20000)) {
            p.entries_w = entries;
            apply_bounds(p.entries_w, n_bs, p.n_rb, bounds);
            return p;
        }
    }
    throw std::runtime_error("could not draw a reduced design with independent groups");
}

TransmitPowerMatrix scale_to_full_rank(const TransmitPowerMatrix& base, double spread,
                                       Rng& rng) {
    if (!(spread > 0.0) || spread >= 1.0) {
        throw std::invalid_argument("scale spread must lie in (0, 1)");
    }
    TransmitPowerMatrix out = base;
    for (int l = 0; l < out.entries_w.rows(); ++l) {
        for (int s = 0; s < out.entries_w.cols(); ++s) {
            out.entries_w(l, s) *= 1.0 - spread * rng.uniform(0.0, 1.0);
        }
    }
    return out;
}

std::vector<GroupCheck> verify_groups(const TransmitPowerMatrix& p,
                                      const std::vector<std::vector<int>>& groups) {
    std::vector<GroupCheck> out;
    out.reserve(groups.size());
    for (const auto& group : groups) {
        Eigen::MatrixXd sub(p.n_blocks(), static_cast<int>(group.size()));
        for (size_t i = 0; i < group.size(); ++i) {
            sub.col(static_cast<int>(i)) = p.entries_w.col(group[i]);
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(sub);
        const auto& s = svd.singularValues();
        GroupCheck check;
        check.full_rank = s(s.size() - 1) > kRankTol * s(0);
        check.kappa = check.full_rank ? s(0) / s(s.size() - 1)
                                      : std::numeric_limits<double>::infinity();
        out.push_back(check);
    }
    return out;
}

QamMoments qam_moments(int order, double level_unit) {
    const double m = static_cast<double>(order);
    const double root = std::sqrt(m);
    if (std::lround(root) * std::lround(root) != order || order < 4) {
        throw std::invalid_argument("square QAM order required");
    }
    const double d2 = level_unit * level_unit;
    QamMoments mom;
    mom.sigma_sq = (m - 1.0) / 3.0 * d2;
    mom.sigma_tilde_sq = 8.0 * d2 * d2 * (m * m - 5.0 * m + 4.0) / 45.0;
    mom.b = 4.0 / 3.0 * d2 * std::abs(m - 3.0 * root + 2.0);
    mom.mean_power = 2.0 * mom.sigma_sq;
    return mom;
}

double bennett_deviation_bound(int order, double delta, double n_samples) {
    if (delta <= 0.0 || n_samples < 1.0) {
        throw std::invalid_argument("bound needs delta > 0 and n >= 1");
    }
    const QamMoments mom = qam_moments(order);
    if (mom.b == 0.0) {
        return 0.0;  // constant power samples never deviate
    }
    const double t = 2.0 * mom.b * mom.sigma_sq * delta / mom.sigma_tilde_sq;
    const double h = (1.0 + t) * std::log1p(t) - t;
    const double exponent = n_samples * mom.sigma_tilde_sq / (mom.b * mom.b) * h;
    return std::min(1.0, 2.0 * std::exp(-exponent));
}

double required_samples(int order, double delta, double confidence) {
    if (confidence <= 0.0 || confidence >= 1.0) {
        throw std::invalid_argument("confidence must lie in (0, 1)");
    }
    const QamMoments mom = qam_moments(order);
    if (mom.b == 0.0) {
        return 1.0;
    }
    const double t = 2.0 * mom.b * mom.sigma_sq * delta / mom.sigma_tilde_sq;
    const double h = (1.0 + t) * std::log1p(t) - t;
    return std::ceil(std::log(2.0 / (1.0 - confidence)) * mom.b * mom.b /
                     (mom.sigma_tilde_sq * h));
}

long samples_per_rb_block(const ResourceGrid& grid, int rb) {
    return static_cast<long>(grid.rb_size) * grid.symbols_per_block(rb);
}

}  // namespace mnige
