#include "mnige/estimator.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace mnige {

InterfererSelection select_interferers(const ResourceGrid& grid, const Topology& topo,
                                       int group_size) {
    const int n_rb = grid.n_rb();
    const int n_bs = topo.n_bs();
    const int n_src = n_bs * n_rb;
    if (group_size == 0) {
        group_size = std::min(n_src, n_bs + 2);
    }
    if (group_size < n_bs || group_size > n_src) {
        throw std::invalid_argument("group size must cover the co-channel sources");
    }
    InterfererSelection sel;
    sel.group_size = group_size;
    sel.groups.resize(static_cast<size_t>(topo.n_ue() * n_rb));
    for (int z = 0; z < topo.n_ue(); ++z) {
        const int serv = topo.serving[static_cast<size_t>(z)];
        for (int d = 0; d < n_rb; ++d) {
            std::vector<int>& group = sel.groups[static_cast<size_t>(z * n_rb + d)];
            group.push_back(serv * n_rb + d);
            for (int k = 0; k < n_bs; ++k) {
                if (k != serv) {
                    group.push_back(k * n_rb + d);
                }
            }
            // serving-BS frequency neighbors by growing distance
            for (int radius = 1; static_cast<int>(group.size()) < group_size; ++radius) {
                if (radius > n_rb) {
                    throw std::logic_error("group padding exhausted the grid");
                }
                if (d - radius >= 0) {
                    group.push_back(serv * n_rb + d - radius);
                }
                if (static_cast<int>(group.size()) < group_size && d + radius < n_rb) {
                    group.push_back(serv * n_rb + d + radius);
                }
            }
        }
    }
    return sel;
}

EstimatedGraph estimate_gains(const TransmitPowerMatrix& p,
                              const std::vector<Eigen::MatrixXd>& measured_w,
                              const ResourceGrid& grid, const InterfererSelection& sel,
                              const std::vector<double>& noise_w,
                              const EstimationOptions& opts) {
    const int n_rb = grid.n_rb();
    const int n_ue = static_cast<int>(measured_w.size());
    if (sel.groups.size() != static_cast<size_t>(n_ue * n_rb)) {
        throw std::invalid_argument("selection does not match the measurement layout");
    }
    EstimatedGraph out;
    out.s_hat = Eigen::MatrixXd::Constant(p.n_src(), n_ue * n_rb,
                                          std::numeric_limits<double>::quiet_NaN());
    out.residual_rel.resize(static_cast<size_t>(n_ue * n_rb), 0.0);
    for (int z = 0; z < n_ue; ++z) {
        const Eigen::MatrixXd& meas = measured_w[static_cast<size_t>(z)];
        if (meas.rows() != p.n_blocks() || meas.cols() != n_rb) {
            throw std::invalid_argument("measurement shape does not match the design");
        }
        for (int d = 0; d < n_rb; ++d) {
            const std::vector<int>& group = sel.groups[static_cast<size_t>(z * n_rb + d)];
            Eigen::MatrixXd a(p.n_blocks(), static_cast<int>(group.size()));
            for (size_t i = 0; i < group.size(); ++i) {
                a.col(static_cast<int>(i)) = p.entries_w.col(group[i]);
            }
            Eigen::VectorXd b = meas.col(d);
            if (opts.subtract_noise) {
                b.array() -= noise_w[static_cast<size_t>(d)];
            }
            const Eigen::VectorXd x = a.colPivHouseholderQr().solve(b);
            for (size_t i = 0; i < group.size(); ++i) {
                out.s_hat(group[i], z * n_rb + d) = x(static_cast<int>(i));
            }
            const double scale = b.norm();
            out.residual_rel[static_cast<size_t>(z * n_rb + d)] =
                scale > 0.0 ? (a * x - b).norm() / scale : 0.0;
        }
    }
    return out;
}

std::optional<double> log_error_db(double s_hat, double s_true) {
    if (s_hat <= 0.0 || s_true <= 0.0) {
        return std::nullopt;
    }
    return std::abs(10.0 * std::log10(s_hat / s_true));
}

Eigen::MatrixXd model_based_baseline(const ResourceGrid& grid, const Topology& topo,
                                     double fc_ghz) {
    const int n_rb = grid.n_rb();
    LinkChannel flat;
    flat.taps = {cd{1.0, 0.0}};
    const GainOracle oracle(grid, flat);
    Eigen::MatrixXd coupling(n_rb, n_rb);
    for (int l = 0; l < n_rb; ++l) {
        for (int d = 0; d < n_rb; ++d) {
            coupling(l, d) = oracle.rb_gain(l, d).steady();
        }
    }
    Eigen::MatrixXd base(topo.n_bs() * n_rb, topo.n_ue() * n_rb);
    for (int k = 0; k < topo.n_bs(); ++k) {
        for (int z = 0; z < topo.n_ue(); ++z) {
            const double dist =
                distance(topo.bs[static_cast<size_t>(k)], topo.ue[static_cast<size_t>(z)]);
            const double gain = db_to_lin(-path_loss_db(dist, fc_ghz));
            base.block(k * n_rb, z * n_rb, n_rb, n_rb) = gain * coupling;
        }
    }
    return base;
}

}  // namespace mnige
