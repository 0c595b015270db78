#include "mnige/ipm.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <stdexcept>

namespace mnige::ipm {

void AffineTerm::accumulate(const Vec&, double wg, double, Vec& grad, Mat&) const {
    for (const auto& [i, c] : a_.terms) {
        grad(i) += wg * c;
    }
}

NegLogTerm::NegLogTerm(std::vector<Affine> rs, std::vector<double> weights)
    : rs_(std::move(rs)), w_(std::move(weights)) {
    if (w_.empty()) {
        w_.assign(rs_.size(), 1.0);
    }
    if (w_.size() != rs_.size()) {
        throw std::invalid_argument("one weight per log argument");
    }
}

bool NegLogTerm::in_domain(const Vec& x) const {
    for (const auto& r : rs_) {
        if (r.eval(x) <= 0.0) {
            return false;
        }
    }
    return true;
}

double NegLogTerm::eval(const Vec& x) const {
    double v = 0.0;
    for (size_t j = 0; j < rs_.size(); ++j) {
        v -= w_[j] * std::log(rs_[j].eval(x));
    }
    return v;
}

void NegLogTerm::accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const {
    for (size_t j = 0; j < rs_.size(); ++j) {
        const Affine& r = rs_[j];
        const double rv = r.eval(x);
        const double g = -w_[j] * wg / rv;
        const double h = w_[j] * wh / (rv * rv);
        for (const auto& [i, ci] : r.terms) {
            grad(i) += g * ci;
            for (const auto& [k, ck] : r.terms) {
                hess(i, k) += h * ci * ck;
            }
        }
    }
}

PerspectiveLogTerm::PerspectiveLogTerm(int nu_index, std::vector<Affine> rs,
                                       std::vector<double> weights)
    : nu_(nu_index), rs_(std::move(rs)), w_(std::move(weights)) {
    if (w_.empty()) {
        w_.assign(rs_.size(), 1.0);
    }
    if (w_.size() != rs_.size()) {
        throw std::invalid_argument("one weight per log argument");
    }
}

bool PerspectiveLogTerm::in_domain(const Vec& x) const {
    if (x(nu_) <= 0.0) {
        return false;
    }
    for (const auto& r : rs_) {
        if (r.eval(x) <= 0.0) {
            return false;
        }
    }
    return true;
}

double PerspectiveLogTerm::eval(const Vec& x) const {
    const double nu = x(nu_);
    double v = 0.0;
    for (size_t j = 0; j < rs_.size(); ++j) {
        v += w_[j] * nu * (std::log(nu) - std::log(rs_[j].eval(x)));
    }
    return v;
}

void PerspectiveLogTerm::accumulate(const Vec& x, double wg, double wh, Vec& grad,
                                    Mat& hess) const {
    const double nu = x(nu_);
    const double log_nu = std::log(nu);
    for (size_t j = 0; j < rs_.size(); ++j) {
        const Affine& r = rs_[j];
        const double rv = r.eval(x);
        const double w = w_[j];
        grad(nu_) += wg * w * (log_nu + 1.0 - std::log(rv));
        hess(nu_, nu_) += wh * w / nu;
        for (const auto& [i, ci] : r.terms) {
            grad(i) += -wg * w * nu / rv * ci;
            hess(i, nu_) += -wh * w / rv * ci;
            hess(nu_, i) += -wh * w / rv * ci;
            for (const auto& [k, ck] : r.terms) {
                hess(i, k) += wh * w * nu / (rv * rv) * ci * ck;
            }
        }
    }
}

QuadTerm::QuadTerm(std::vector<Affine> rs, std::vector<double> weights)
    : rs_(std::move(rs)), w_(std::move(weights)) {
    if (w_.empty()) {
        w_.assign(rs_.size(), 1.0);
    }
    if (w_.size() != rs_.size()) {
        throw std::invalid_argument("one weight per squared residual");
    }
}

double QuadTerm::eval(const Vec& x) const {
    double v = 0.0;
    for (size_t j = 0; j < rs_.size(); ++j) {
        const double r = rs_[j].eval(x);
        v += w_[j] * r * r;
    }
    return v;
}

void QuadTerm::accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const {
    for (size_t j = 0; j < rs_.size(); ++j) {
        const Affine& r = rs_[j];
        const double rv = r.eval(x);
        for (const auto& [i, ci] : r.terms) {
            grad(i) += 2.0 * wg * w_[j] * rv * ci;
            for (const auto& [k, ck] : r.terms) {
                hess(i, k) += 2.0 * wh * w_[j] * ci * ck;
            }
        }
    }
}

bool Expr::in_domain(const Vec& x) const {
    for (const auto& t : parts) {
        if (!t->in_domain(x)) {
            return false;
        }
    }
    return true;
}

double Expr::eval(const Vec& x) const {
    double v = 0.0;
    for (const auto& t : parts) {
        v += t->eval(x);
    }
    return v;
}

void Expr::accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const {
    for (const auto& t : parts) {
        t->accumulate(x, wg, wh, grad, hess);
    }
}

void LmiBlock::materialize(const Vec& x, Mat& s) const {
    s = f0;
    for (const auto& [i, f] : coefs) {
        s.noalias() += x(i) * f;
    }
}

namespace {

struct Workspace {
    Vec grad;
    Mat hess;
    Vec cgrad;
    std::vector<Mat> s;      // materialized LMI values
    std::vector<Eigen::LLT<Mat>> llt;
};

int barrier_count(const Problem& p) {
    int m = static_cast<int>(p.ineqs.size());
    for (const auto& lmi : p.lmis) {
        m += lmi.dim;
    }
    for (int i = 0; i < p.n; ++i) {
        m += std::isfinite(p.lower(i)) ? 1 : 0;
        m += std::isfinite(p.upper(i)) ? 1 : 0;
    }
    return m;
}

// strict feasibility incl. every log/llt domain; refreshes ws.s and ws.llt
bool strictly_feasible(const Problem& p, const Vec& x, Workspace& ws) {
    for (int i = 0; i < p.n; ++i) {
        if (x(i) <= p.lower(i) || x(i) >= p.upper(i)) {
            return false;
        }
    }
    if (!p.objective.in_domain(x)) {
        return false;
    }
    for (const auto& c : p.ineqs) {
        if (!c.in_domain(x) || c.eval(x) >= 0.0) {
            return false;
        }
    }
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        p.lmis[j].materialize(x, ws.s[j]);
        ws.llt[j].compute(ws.s[j]);
        if (ws.llt[j].info() != Eigen::Success) {
            return false;
        }
        // LLT can succeed on marginally indefinite input; insist on a margin
        for (int d = 0; d < p.lmis[j].dim; ++d) {
            if (ws.llt[j].matrixLLT()(d, d) <= 0.0) {
                return false;
            }
        }
    }
    return true;
}

double barrier_value(const Problem& p, const Vec& x, double t, Workspace& ws) {
    double v = t * p.objective.eval(x);
    for (const auto& c : p.ineqs) {
        v -= std::log(-c.eval(x));
    }
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        p.lmis[j].materialize(x, ws.s[j]);
        ws.llt[j].compute(ws.s[j]);
        double logdet = 0.0;
        for (int d = 0; d < p.lmis[j].dim; ++d) {
            logdet += std::log(ws.llt[j].matrixLLT()(d, d));
        }
        v -= 2.0 * logdet;
    }
    for (int i = 0; i < p.n; ++i) {
        if (std::isfinite(p.lower(i))) {
            v -= std::log(x(i) - p.lower(i));
        }
        if (std::isfinite(p.upper(i))) {
            v -= std::log(p.upper(i) - x(i));
        }
    }
    return v;
}

void assemble(const Problem& p, const Vec& x, double t, Workspace& ws) {
    ws.grad.setZero();
    ws.hess.setZero();
    p.objective.accumulate(x, t, t, ws.grad, ws.hess);
    for (const auto& c : p.ineqs) {
        const double cv = c.eval(x);
        const double w = 1.0 / (-cv);
        ws.cgrad.setZero();
        c.accumulate(x, w, w, ws.cgrad, ws.hess);
        ws.grad += ws.cgrad;
        ws.hess.noalias() += ws.cgrad * ws.cgrad.transpose();
    }
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        const LmiBlock& lmi = p.lmis[j];
        lmi.materialize(x, ws.s[j]);
        ws.llt[j].compute(ws.s[j]);
        const Mat sinv = ws.llt[j].solve(Mat::Identity(lmi.dim, lmi.dim));
        std::vector<Mat> gs;
        gs.reserve(lmi.coefs.size());
        for (const auto& [idx, f] : lmi.coefs) {
            gs.push_back(sinv * f);
            ws.grad(idx) -= gs.back().trace();
        }
        for (size_t a = 0; a < lmi.coefs.size(); ++a) {
            const int ia = lmi.coefs[a].first;
            for (size_t b = a; b < lmi.coefs.size(); ++b) {
                const int ib = lmi.coefs[b].first;
                const double v = gs[a].cwiseProduct(gs[b].transpose()).sum();
                ws.hess(ia, ib) += v;
                if (ia != ib) {
                    ws.hess(ib, ia) += v;
                }
            }
        }
    }
    for (int i = 0; i < p.n; ++i) {
        if (std::isfinite(p.lower(i))) {
            const double d = x(i) - p.lower(i);
            ws.grad(i) -= 1.0 / d;
            ws.hess(i, i) += 1.0 / (d * d);
        }
        if (std::isfinite(p.upper(i))) {
            const double d = p.upper(i) - x(i);
            ws.grad(i) += 1.0 / d;
            ws.hess(i, i) += 1.0 / (d * d);
        }
    }
}

// H dir = -grad, with escalating ridge on factorization trouble. Dense
// Cholesky below the size cutoff, sparse elsewhere (the coupling pattern of
// the surrogate problems is block-arrow, which sparse LDLT exploits).
bool newton_direction(const Mat& hess, const Vec& grad, Vec& dir) {
    const int n = static_cast<int>(grad.size());
    double ridge = 0.0;
    for (int attempt = 0; attempt < 12; ++attempt) {
        if (n <= 400) {
            Eigen::LDLT<Mat> ldlt(ridge == 0.0 ? hess : Mat(hess + ridge * Mat::Identity(n, n)));
            if (ldlt.info() == Eigen::Success) {
                dir = ldlt.solve(-grad);
                if (dir.allFinite() && grad.dot(dir) < 0.0) {
                    return true;
                }
            }
        } else {
            Eigen::SparseMatrix<double> h =
                (ridge == 0.0 ? hess : Mat(hess + ridge * Mat::Identity(n, n)))
                    .sparseView(1.0, 1e-300);
            Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(h);
            if (ldlt.info() == Eigen::Success) {
                dir = ldlt.solve(-grad);
                if (dir.allFinite() && grad.dot(dir) < 0.0) {
                    return true;
                }
            }
        }
        ridge = ridge == 0.0 ? 1e-10 * (1.0 + hess.diagonal().cwiseAbs().maxCoeff()) : ridge * 100.0;
    }
    return false;
}

}  // namespace

SolveResult solve(const Problem& p, const Vec& x0, const SolveOptions& opts) {
    Workspace ws;
    ws.grad.resize(p.n);
    ws.hess.resize(p.n, p.n);
    ws.cgrad.resize(p.n);
    ws.s.resize(p.lmis.size());
    ws.llt.resize(p.lmis.size());
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        ws.s[j].resize(p.lmis[j].dim, p.lmis[j].dim);
    }

    Vec x = x0;
    if (!strictly_feasible(p, x, ws)) {
        throw std::invalid_argument("interior point start must be strictly feasible");
    }
    const int m = barrier_count(p);
    double t = opts.t0;
    SolveResult res;
    for (int stage = 0; stage < opts.max_stages; ++stage) {
        for (int it = 0; it < opts.max_newton_per_stage; ++it) {
            assemble(p, x, t, ws);
            Vec dir;
            if (!newton_direction(ws.hess, ws.grad, dir)) {
                break;
            }
            const double slope = ws.grad.dot(dir);
            if (-slope * 0.5 < opts.newton_tol * (1.0 + std::abs(t))) {
                break;
            }
            const double f0 = barrier_value(p, x, t, ws);
            double alpha = 1.0;
            bool stepped = false;
            while (alpha > 1e-14) {
                const Vec cand = x + alpha * dir;
                if (strictly_feasible(p, cand, ws) &&
                    barrier_value(p, cand, t, ws) <= f0 + opts.armijo * alpha * slope) {
                    x = cand;
                    stepped = true;
                    break;
                }
                alpha *= opts.backtrack;
            }
            ++res.newton_steps;
            if (!stepped) {
                break;
            }
        }
        const double obj = p.objective.eval(x);
        if (static_cast<double>(m) / t <= opts.tol * (1.0 + std::abs(obj))) {
            res.converged = true;
            break;
        }
        t *= opts.mu;
    }
    res.x = x;
    res.objective = p.objective.eval(x);
    // leave llt/s coherent with the final x for callers that inspect them
    strictly_feasible(p, x, ws);
    return res;
}

bool interior_point(const Problem& p, const Vec& x) {
    Workspace ws;
    ws.s.resize(p.lmis.size());
    ws.llt.resize(p.lmis.size());
    for (size_t j = 0; j < p.lmis.size(); ++j) {
        ws.s[j].resize(p.lmis[j].dim, p.lmis[j].dim);
    }
    return strictly_feasible(p, x, ws);
}

std::optional<Vec> find_feasible(const Problem& p, const Vec& x0, const SolveOptions& opts) {
    Problem aug;
    aug.resize(p.n + 1);
    const int slack = p.n;
    aug.lower.head(p.n) = p.lower;
    aug.upper.head(p.n) = p.upper;
    aug.lower(slack) = -1.0;

    aug.objective.add_affine(Affine{}.add(slack, 1.0));
    for (const auto& c : p.ineqs) {
        Expr shifted = c;
        shifted.add_affine(Affine{}.add(slack, -1.0));
        aug.ineqs.push_back(std::move(shifted));
    }
    for (const auto& lmi : p.lmis) {
        LmiBlock shifted = lmi;
        shifted.coefs.emplace_back(slack, Mat::Identity(lmi.dim, lmi.dim));
        aug.lmis.push_back(std::move(shifted));
    }

    // slack big enough to clear every constraint strictly
    double s0 = 1.0;
    for (const auto& c : p.ineqs) {
        if (!c.in_domain(x0)) {
            return std::nullopt;  // log-type constraints need a domain-valid guess
        }
        s0 = std::max(s0, 2.0 * std::abs(c.eval(x0)) + 1.0);
    }
    for (const auto& lmi : p.lmis) {
        Mat s(lmi.dim, lmi.dim);
        lmi.materialize(x0, s);
        const Eigen::SelfAdjointEigenSolver<Mat> eig(s);
        s0 = std::max(s0, 2.0 * std::abs(eig.eigenvalues().minCoeff()) + 1.0);
    }

    Vec x = Vec::Zero(p.n + 1);
    x.head(p.n) = x0;
    for (int i = 0; i < p.n; ++i) {
        // the augmented solve needs a strict box interior to start from
        if (std::isfinite(p.lower(i))) {
            const double span = std::isfinite(p.upper(i)) ? p.upper(i) - p.lower(i) : 1.0;
            x(i) = std::max(x(i), p.lower(i) + 1e-12 * span);
        }
        if (std::isfinite(p.upper(i))) {
            const double span = std::isfinite(p.lower(i)) ? p.upper(i) - p.lower(i) : 1.0;
            x(i) = std::min(x(i), p.upper(i) - 1e-12 * span);
        }
    }
    x(slack) = s0;

    SolveOptions fopts = opts;
    fopts.tol = 1e-2;
    Workspace probe;  // reuse the main loop by early exit on negative slack
    SolveResult res;
    double t = fopts.t0;
    Vec cur = x;
    for (int stage = 0; stage < fopts.max_stages; ++stage) {
        SolveOptions stage_opts = fopts;
        stage_opts.max_stages = 1;
        stage_opts.t0 = t;
        res = solve(aug, cur, stage_opts);
        cur = res.x;
        if (cur(slack) < 0.0) {
            Vec out = cur.head(p.n);
            Workspace ws;
            ws.s.resize(p.lmis.size());
            ws.llt.resize(p.lmis.size());
            for (size_t j = 0; j < p.lmis.size(); ++j) {
                ws.s[j].resize(p.lmis[j].dim, p.lmis[j].dim);
            }
            if (strictly_feasible(p, out, ws)) {
                return out;
            }
        }
        t *= fopts.mu;
    }
    return std::nullopt;
}

}  // namespace mnige::ipm
