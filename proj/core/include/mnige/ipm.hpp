#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace mnige::ipm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// sparse affine form: sum coef * x_idx + constant
struct Affine {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    Affine() = default;
    explicit Affine(double c) : constant(c) {}

    Affine& add(int idx, double coef) {
        if (coef != 0.0) {
            terms.emplace_back(idx, coef);
        }
        return *this;
    }
    double eval(const Vec& x) const {
        double v = constant;
        for (const auto& [i, c] : terms) {
            v += c * x(i);
        }
        return v;
    }
};

// One additive piece of a smooth convex function. accumulate() adds
// wg * gradient into grad and wh * hessian into hess; the split lets a
// log-barrier wrap a constraint without recomputing derivatives.
class Term {
  public:
    virtual ~Term() = default;
    virtual bool in_domain(const Vec&) const { return true; }
    virtual double eval(const Vec& x) const = 0;
    virtual void accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const = 0;
};

class AffineTerm final : public Term {
  public:
    explicit AffineTerm(Affine a) : a_(std::move(a)) {}
    double eval(const Vec& x) const override { return a_.eval(x); }
    void accumulate(const Vec& x, double wg, double, Vec& grad, Mat&) const override;

  private:
    Affine a_;
};

// sum_j -w_j log(r_j(x))
class NegLogTerm final : public Term {
  public:
    NegLogTerm(std::vector<Affine> rs, std::vector<double> weights);
    bool in_domain(const Vec& x) const override;
    double eval(const Vec& x) const override;
    void accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const override;

  private:
    std::vector<Affine> rs_;
    std::vector<double> w_;
};

// sum_j w_j (nu log nu - nu log r_j(x)): the perspective of -log, jointly
// convex in (nu, x) even when r_j carries a nu coefficient.
class PerspectiveLogTerm final : public Term {
  public:
    PerspectiveLogTerm(int nu_index, std::vector<Affine> rs, std::vector<double> weights);
    bool in_domain(const Vec& x) const override;
    double eval(const Vec& x) const override;
    void accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const override;

  private:
    int nu_;
    std::vector<Affine> rs_;
    std::vector<double> w_;
};

// sum_j w_j r_j(x)^2
class QuadTerm final : public Term {
  public:
    QuadTerm(std::vector<Affine> rs, std::vector<double> weights);
    double eval(const Vec& x) const override;
    void accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const override;

  private:
    std::vector<Affine> rs_;
    std::vector<double> w_;
};

// additive bundle of terms; empty means the zero function
struct Expr {
    std::vector<std::shared_ptr<const Term>> parts;

    void add(std::shared_ptr<const Term> t) { parts.push_back(std::move(t)); }
    void add_affine(Affine a) { add(std::make_shared<AffineTerm>(std::move(a))); }
    bool in_domain(const Vec& x) const;
    double eval(const Vec& x) const;
    void accumulate(const Vec& x, double wg, double wh, Vec& grad, Mat& hess) const;
};

// S(x) = f0 + sum_i x_idx(i) * F_i, required positive semidefinite
struct LmiBlock {
    int dim = 0;
    Mat f0;
    std::vector<std::pair<int, Mat>> coefs;

    void materialize(const Vec& x, Mat& s) const;
};

struct Problem {
    int n = 0;
    Expr objective;           // minimized
    std::vector<Expr> ineqs;  // c_i(x) <= 0
    std::vector<LmiBlock> lmis;
    Vec lower;  // -inf for free
    Vec upper;  // +inf for free

    void resize(int vars) {
        n = vars;
        lower = Vec::Constant(vars, -std::numeric_limits<double>::infinity());
        upper = Vec::Constant(vars, std::numeric_limits<double>::infinity());
    }
};

struct SolveOptions {
    double t0 = 1.0;
    double mu = 20.0;
    double tol = 1e-7;  // stop once barrier_count / t <= tol * (1 + |objective|)
    int max_stages = 64;
    int max_newton_per_stage = 60;
    double newton_tol = 1e-9;
    double armijo = 0.01;
    double backtrack = 0.5;
};

struct SolveResult {
    Vec x;
    double objective = 0.0;
    int newton_steps = 0;
    bool converged = false;
};

// Log-barrier path following from a strictly feasible start. Throws
// std::invalid_argument if x0 is infeasible.
SolveResult solve(const Problem& p, const Vec& x0, const SolveOptions& opts = {});

// The start check solve applies: strict box interior, objective domain,
// ineqs strictly negative, LMI blocks positive definite.
bool interior_point(const Problem& p, const Vec& x);

// Phase I on the slack-augmented problem; x0 only needs to respect the box
// strictly. Returns a strictly feasible point, or nullopt if none was found.
std::optional<Vec> find_feasible(const Problem& p, const Vec& x0,
                                 const SolveOptions& opts = {});

}  // namespace mnige::ipm
