#include "mcopf/nlp/solver.hpp"

#include <algorithm>
#include <cassert>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

namespace mcopf::nlp {

const char* to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::Infeasible: return "infeasible";
        case SolveStatus::IterLimit: return "iter_limit";
        case SolveStatus::NumericalFailure: return "numerical_failure";
    }
    return "?";
}

double KktResiduals::max() const {
    return std::max(std::max(stationarity, primal_feasibility),
                    std::max(dual_feasibility, complementarity));
}

namespace {

constexpr double kInfinity = 1e19;
constexpr double kKappaSigma = 1e10;  // dual safeguard width
constexpr double kKappaEps = 10.0;    // barrier reduction trigger
constexpr double kKappaMu = 0.2;      // linear mu shrink factor
constexpr double kThetaMu = 1.5;      // superlinear mu exponent
constexpr double kTauMin = 0.99;      // fraction-to-boundary floor
constexpr double kGammaTheta = 1e-5;
constexpr double kGammaPhi = 1e-5;
constexpr double kDelta = 1.0;
constexpr double kSTheta = 1.1;
constexpr double kSPhi = 2.3;
constexpr double kEta = 1e-4;  // Armijo constant
constexpr double kGammaAlpha = 0.05;
constexpr double kKappaSoc = 0.99;
constexpr int kMaxSoc = 3;
constexpr int kMaxRestorations = 4;

using Vec = Eigen::VectorXd;

/// The solver works on the slack-extended form: every inequality row
/// c_i(x) <= 0 becomes c_i(x) + s_i = 0 with s_i >= 0, so all rows are
/// equalities over w = (x, s).
struct InternalProblem {
    const Problem* p = nullptr;
    int n = 0;  // original variables
    int m = 0;  // rows
    int n_slack = 0;
    int N = 0;  // n + n_slack
    std::vector<int> slack_of_row;  // -1 for equality rows, else w-index
    Vec lb, ub;
    std::vector<bool> has_lb, has_ub;
    SparsityPattern jac;  // original pattern plus slack columns

    explicit InternalProblem(const Problem& problem) : p(&problem) {
        n = problem.num_vars();
        m = problem.num_rows();
        slack_of_row.assign(m, -1);
        for (int i = 0; i < m; ++i) {
            if (problem.row_kind(i) == RowKind::Inequality) {
                slack_of_row[i] = n + n_slack;
                ++n_slack;
            }
        }
        N = n + n_slack;

        lb.resize(N);
        ub.resize(N);
        const auto& plb = problem.lower_bounds();
        const auto& pub = problem.upper_bounds();
        for (int i = 0; i < n; ++i) {
            lb[i] = plb[i];
            ub[i] = pub[i];
            // Equal bounds would collapse the barrier; relax symmetrically.
            if (ub[i] - lb[i] < 1e-12 * std::max(1.0, std::abs(lb[i]))) {
                const double eps = 1e-8 * std::max(1.0, std::abs(lb[i]));
                lb[i] -= eps;
                ub[i] += eps;
            }
        }
        for (int i = n; i < N; ++i) {
            lb[i] = 0.0;
            ub[i] = kInfinity;
        }
        has_lb.resize(N);
        has_ub.resize(N);
        for (int i = 0; i < N; ++i) {
            has_lb[i] = lb[i] > -kInfinity;
            has_ub[i] = ub[i] < kInfinity;
        }

        jac = problem.jacobian_pattern();
        for (int i = 0; i < m; ++i) {
            if (slack_of_row[i] >= 0) {
                jac.rows.push_back(i);
                jac.cols.push_back(slack_of_row[i]);
            }
        }
    }

    double objective(const Vec& w) const {
        return p->objective(std::span<const double>(w.data(), n));
    }

    void gradient(const Vec& w, Vec& g) const {
        g.setZero(N);
        p->objective_gradient(std::span<const double>(w.data(), n),
                              std::span<double>(g.data(), n));
    }

    void constraints(const Vec& w, Vec& c) const {
        c.resize(m);
        p->constraints(std::span<const double>(w.data(), n), std::span<double>(c.data(), m));
        for (int i = 0; i < m; ++i) {
            if (slack_of_row[i] >= 0) c[i] += w[slack_of_row[i]];
        }
    }

    void jacobian(const Vec& w, Vec& vals) const {
        const std::size_t base = p->jacobian_pattern().size();
        vals.resize(static_cast<Eigen::Index>(jac.size()));
        p->jacobian_values(std::span<const double>(w.data(), n),
                           std::span<double>(vals.data(), base));
        for (std::size_t k = base; k < jac.size(); ++k) {
            vals[static_cast<Eigen::Index>(k)] = 1.0;
        }
    }

    void hessian(const Vec& w, double obj_factor, const Vec& lambda, Vec& vals) const {
        vals.resize(static_cast<Eigen::Index>(p->hessian_pattern().size()));
        p->hessian_values(std::span<const double>(w.data(), n), obj_factor,
                          std::span<const double>(lambda.data(), m),
                          std::span<double>(vals.data(), vals.size()));
    }
};

/// Symmetric KKT system
///     [ H + Sigma + dw*I   J^T  ]
///     [ J                 -dc*I ]
/// factored as LDL^T; inertia read off the diagonal of D.
class KktSystem {
public:
    KktSystem(const InternalProblem& ip, bool dense) : ip_(ip), dense_(dense) {
        K_ = ip.N + ip.m;
        hess_nnz_ = static_cast<int>(ip.p->hessian_pattern().size());
    }

    // hess_vals is aligned with the problem's Hessian pattern (x block only);
    // a non-null dense_hessian replaces it (BFGS mode).
    bool factorize(const Vec* hess_vals, const Eigen::MatrixXd* dense_hessian, const Vec& sigma,
                   double delta_w, const Vec& jac_vals, double delta_c) {
        if (dense_) {
            return factorize_dense(hess_vals, dense_hessian, sigma, delta_w, jac_vals, delta_c);
        }
        return factorize_sparse(hess_vals, sigma, delta_w, jac_vals, delta_c);
    }

    Vec solve(const Vec& rhs) const {
        if (!dense_) return sparse_.solve(rhs);
        Vec x = rhs;
        for (int j = 0; j < K_; ++j) {
            const double xj = x[j];
            for (int i = j + 1; i < K_; ++i) x[i] -= dense_L_(i, j) * xj;
        }
        for (int j = 0; j < K_; ++j) x[j] /= dense_D_[j];
        for (int j = K_ - 1; j >= 0; --j) {
            double acc = x[j];
            for (int i = j + 1; i < K_; ++i) acc -= dense_L_(i, j) * x[i];
            x[j] = acc;
        }
        return x;
    }

    int zero() const { return zero_; }
    bool inertia_ok() const { return pos_ == ip_.N && neg_ == ip_.m && zero_ == 0; }

private:
    // Sign-only classification: small pivots are legitimate near convergence
    // (dual regularization is ~1e-9), so only non-finite and vanishing pivots
    // count as singular. A wrong sign from a near-singular factorization is
    // caught by the inertia test itself.
    void count_inertia(const Vec& d) {
        pos_ = neg_ = zero_ = 0;
        for (int i = 0; i < d.size(); ++i) {
            if (!std::isfinite(d[i]) || std::abs(d[i]) < 1e-100) {
                ++zero_;
            } else if (d[i] > 0) {
                ++pos_;
            } else {
                ++neg_;
            }
        }
    }

    bool factorize_sparse(const Vec* hess_vals, const Vec& sigma, double delta_w,
                          const Vec& jac_vals, double delta_c) {
        std::vector<Eigen::Triplet<double>> trip;
        trip.reserve(hess_nnz_ + ip_.N + ip_.jac.size() + ip_.m);
        if (hess_vals != nullptr) {
            const auto& hp = ip_.p->hessian_pattern();
            for (int k = 0; k < hess_nnz_; ++k) {
                int r = hp.rows[k], c = hp.cols[k];
                if (r < c) std::swap(r, c);
                trip.emplace_back(r, c, (*hess_vals)[k]);
            }
        }
        for (int i = 0; i < ip_.N; ++i) {
            trip.emplace_back(i, i, sigma[i] + delta_w);
        }
        for (std::size_t k = 0; k < ip_.jac.size(); ++k) {
            trip.emplace_back(ip_.N + ip_.jac.rows[k], ip_.jac.cols[k],
                              jac_vals[static_cast<Eigen::Index>(k)]);
        }
        for (int i = 0; i < ip_.m; ++i) {
            trip.emplace_back(ip_.N + i, ip_.N + i, -delta_c);
        }
        Eigen::SparseMatrix<double> M(K_, K_);
        M.setFromTriplets(trip.begin(), trip.end());
        if (!analyzed_) {
            sparse_.analyzePattern(M);
            analyzed_ = true;
        }
        sparse_.factorize(M);
        if (sparse_.info() != Eigen::Success) {
            pos_ = neg_ = 0;
            zero_ = K_;
            return false;
        }
        Vec d = sparse_.vectorD();
        if (!d.allFinite()) {
            pos_ = neg_ = 0;
            zero_ = K_;
            return false;
        }
        count_inertia(d);
        return zero_ == 0;
    }

    bool factorize_dense(const Vec* hess_vals, const Eigen::MatrixXd* dense_hessian,
                         const Vec& sigma, double delta_w, const Vec& jac_vals, double delta_c) {
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(K_, K_);
        if (dense_hessian != nullptr) {
            A.topLeftCorner(ip_.N, ip_.N) = *dense_hessian;
        } else if (hess_vals != nullptr) {
            const auto& hp = ip_.p->hessian_pattern();
            for (int k = 0; k < hess_nnz_; ++k) {
                int r = hp.rows[k], c = hp.cols[k];
                if (r < c) std::swap(r, c);
                A(r, c) += (*hess_vals)[k];
                if (r != c) A(c, r) += (*hess_vals)[k];
            }
        }
        for (int i = 0; i < ip_.N; ++i) A(i, i) += sigma[i] + delta_w;
        for (std::size_t k = 0; k < ip_.jac.size(); ++k) {
            const int r = ip_.N + ip_.jac.rows[k];
            const int c = ip_.jac.cols[k];
            A(r, c) += jac_vals[static_cast<Eigen::Index>(k)];
            A(c, r) += jac_vals[static_cast<Eigen::Index>(k)];
        }
        for (int i = 0; i < ip_.m; ++i) A(ip_.N + i, ip_.N + i) = -delta_c;

        // LDL^T without pivoting; adequate for the quasi-definite matrices the
        // regularization loop produces, and it exposes the inertia directly.
        dense_L_ = Eigen::MatrixXd::Identity(K_, K_);
        dense_D_.resize(K_);
        bool ok = true;
        for (int j = 0; j < K_; ++j) {
            double d = A(j, j);
            for (int k = 0; k < j; ++k) d -= dense_L_(j, k) * dense_L_(j, k) * dense_D_[k];
            dense_D_[j] = d;
            if (!std::isfinite(d) || std::abs(d) < 1e-100) {
                ok = false;
            }
            const double dinv = (d != 0.0 && std::isfinite(d)) ? 1.0 / d : 0.0;
            for (int i = j + 1; i < K_; ++i) {
                double v = A(i, j);
                for (int k = 0; k < j; ++k) v -= dense_L_(i, k) * dense_L_(j, k) * dense_D_[k];
                dense_L_(i, j) = v * dinv;
            }
        }
        count_inertia(dense_D_);
        return ok && zero_ == 0;
    }

    const InternalProblem& ip_;
    bool dense_;
    int K_ = 0;
    int hess_nnz_ = 0;
    int pos_ = 0, neg_ = 0, zero_ = 0;

    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower> sparse_;
    bool analyzed_ = false;
    Eigen::MatrixXd dense_L_;
    Vec dense_D_;
};

/// Elastic l1 feasibility problem:
///   min  sum(p + n) + zeta/2 * sum D_j (x_j - x_ref_j)^2
///   s.t. c_eq(x) - p + n = 0,   c_ineq(x) - p <= 0,   p, n >= 0
class RestorationProblem final : public Problem {
public:
    RestorationProblem(const Problem& base, std::vector<double> x_ref, double zeta)
        : base_(base), x_ref_(std::move(x_ref)), zeta_(zeta) {
        nb_ = base.num_vars();
        mb_ = base.num_rows();
        p_of_row_.resize(mb_);
        n_of_row_.assign(mb_, -1);
        int extra = 0;
        for (int i = 0; i < mb_; ++i) {
            p_of_row_[i] = nb_ + extra++;
            if (base.row_kind(i) == RowKind::Equality) {
                n_of_row_[i] = nb_ + extra++;
            }
        }
        nv_ = nb_ + extra;
        lb_.assign(nv_, 0.0);
        ub_.assign(nv_, kInfinity);
        for (int i = 0; i < nb_; ++i) {
            lb_[i] = base.lower_bounds()[i];
            ub_[i] = base.upper_bounds()[i];
        }
        scale_.resize(nb_);
        for (int i = 0; i < nb_; ++i) {
            scale_[i] = 1.0 / std::max(1.0, std::abs(x_ref_[i]));
        }

        jac_ = base.jacobian_pattern();
        for (int i = 0; i < mb_; ++i) {
            jac_.rows.push_back(i);
            jac_.cols.push_back(p_of_row_[i]);
            if (n_of_row_[i] >= 0) {
                jac_.rows.push_back(i);
                jac_.cols.push_back(n_of_row_[i]);
            }
        }
        hess_ = base.hessian_pattern();
        for (int i = 0; i < nb_; ++i) {
            hess_.rows.push_back(i);
            hess_.cols.push_back(i);
        }
    }

    int elastic_var(int row, bool negative_side) const {
        return negative_side ? n_of_row_[row] : p_of_row_[row];
    }

    int num_vars() const override { return nv_; }
    int num_rows() const override { return mb_; }
    const std::vector<double>& lower_bounds() const override { return lb_; }
    const std::vector<double>& upper_bounds() const override { return ub_; }
    RowKind row_kind(int row) const override { return base_.row_kind(row); }

    double objective(std::span<const double> x) const override {
        double val = 0.0;
        for (int i = nb_; i < nv_; ++i) val += x[i];
        for (int i = 0; i < nb_; ++i) {
            const double d = x[i] - x_ref_[i];
            val += 0.5 * zeta_ * scale_[i] * d * d;
        }
        return val;
    }

    void objective_gradient(std::span<const double> x, std::span<double> grad) const override {
        for (int i = 0; i < nv_; ++i) grad[i] = (i >= nb_) ? 1.0 : 0.0;
        for (int i = 0; i < nb_; ++i) {
            grad[i] += zeta_ * scale_[i] * (x[i] - x_ref_[i]);
        }
    }

    void constraints(std::span<const double> x, std::span<double> values) const override {
        base_.constraints(x.subspan(0, nb_), values);
        for (int i = 0; i < mb_; ++i) {
            values[i] -= x[p_of_row_[i]];
            if (n_of_row_[i] >= 0) values[i] += x[n_of_row_[i]];
        }
    }

    const SparsityPattern& jacobian_pattern() const override { return jac_; }

    void jacobian_values(std::span<const double> x, std::span<double> values) const override {
        const std::size_t base_nnz = base_.jacobian_pattern().size();
        base_.jacobian_values(x.subspan(0, nb_), values.subspan(0, base_nnz));
        std::size_t k = base_nnz;
        for (int i = 0; i < mb_; ++i) {
            values[k++] = -1.0;
            if (n_of_row_[i] >= 0) values[k++] = 1.0;
        }
    }

    const SparsityPattern& hessian_pattern() const override { return hess_; }

    void hessian_values(std::span<const double> x, double obj_factor,
                        std::span<const double> lambda, std::span<double> values) const override {
        const std::size_t base_nnz = base_.hessian_pattern().size();
        base_.hessian_values(x.subspan(0, nb_), 0.0, lambda, values.subspan(0, base_nnz));
        for (int i = 0; i < nb_; ++i) {
            values[base_nnz + i] = obj_factor * zeta_ * scale_[i];
        }
    }

    std::string row_name(int row) const override { return base_.row_name(row); }

private:
    const Problem& base_;
    std::vector<double> x_ref_;
    double zeta_;
    int nb_ = 0, mb_ = 0, nv_ = 0;
    std::vector<int> p_of_row_, n_of_row_;
    std::vector<double> lb_, ub_, scale_;
    SparsityPattern jac_, hess_;
};

struct FilterEntry {
    double theta;
    double phi;
};

class IpmSolver {
public:
    IpmSolver(const Problem& problem, const SolverOptions& opts, bool in_restoration)
        : ip_(problem), opts_(opts), in_restoration_(in_restoration) {
        dense_ = opts.linear_solver == LinearSolverKind::DenseLdl ||
                 (opts.linear_solver == LinearSolverKind::Auto && ip_.N < opts.dense_threshold);
        use_bfgs_ = opts.hessian == HessianMode::Bfgs;
    }

    SolveResult run(std::vector<double> start);

private:
    void project_start(Vec& w) const {
        for (int i = 0; i < ip_.N; ++i) {
            const double lo = ip_.lb[i], hi = ip_.ub[i];
            const double push_lo =
                ip_.has_lb[i] ? lo + opts_.bound_push * std::max(1.0, std::abs(lo)) : -kInfinity;
            const double push_hi =
                ip_.has_ub[i] ? hi - opts_.bound_push * std::max(1.0, std::abs(hi)) : kInfinity;
            if (ip_.has_lb[i] && ip_.has_ub[i] && push_lo > push_hi) {
                w[i] = 0.5 * (lo + hi);
            } else {
                w[i] = std::min(std::max(w[i], push_lo), push_hi);
            }
        }
    }

    double barrier(const Vec& w, double f) const {
        double val = f;
        for (int i = 0; i < ip_.N; ++i) {
            if (ip_.has_lb[i]) val -= mu_ * std::log(w[i] - ip_.lb[i]);
            if (ip_.has_ub[i]) val -= mu_ * std::log(ip_.ub[i] - w[i]);
        }
        return val;
    }

    static double theta_of(const Vec& c) { return c.size() > 0 ? c.lpNorm<1>() : 0.0; }

    struct Errors {
        double stationarity = 0.0;
        double primal = 0.0;
        double complementarity = 0.0;
        double scaled(double sd, double sc) const {
            return std::max({stationarity / sd, primal, complementarity / sc});
        }
        double unscaled() const { return std::max({stationarity, primal, complementarity}); }
    };

    Errors kkt_errors(const Vec& w, const Vec& g, const Vec& c, const Vec& jv, const Vec& y,
                      const Vec& zl, const Vec& zu, double mu) const {
        Vec r = g;
        for (std::size_t k = 0; k < ip_.jac.size(); ++k) {
            r[ip_.jac.cols[k]] += jv[static_cast<Eigen::Index>(k)] * y[ip_.jac.rows[k]];
        }
        double comp = 0.0;
        for (int i = 0; i < ip_.N; ++i) {
            if (ip_.has_lb[i]) {
                r[i] -= zl[i];
                comp = std::max(comp, std::abs((w[i] - ip_.lb[i]) * zl[i] - mu));
            }
            if (ip_.has_ub[i]) {
                r[i] += zu[i];
                comp = std::max(comp, std::abs((ip_.ub[i] - w[i]) * zu[i] - mu));
            }
        }
        Errors e;
        e.stationarity = r.size() > 0 ? r.cwiseAbs().maxCoeff() : 0.0;
        e.primal = c.size() > 0 ? c.cwiseAbs().maxCoeff() : 0.0;
        e.complementarity = comp;
        return e;
    }

    void scaling_factors(const Vec& y, const Vec& zl, const Vec& zu, double& sd,
                         double& sc) const {
        const double smax = 100.0;
        int nb = 0;
        double zsum = 0.0;
        for (int i = 0; i < ip_.N; ++i) {
            if (ip_.has_lb[i]) {
                ++nb;
                zsum += std::abs(zl[i]);
            }
            if (ip_.has_ub[i]) {
                ++nb;
                zsum += std::abs(zu[i]);
            }
        }
        const double ysum = y.size() > 0 ? y.lpNorm<1>() : 0.0;
        sd = std::max(smax, (ysum + zsum) / std::max(1, ip_.m + nb)) / smax;
        sc = std::max(smax, zsum / std::max(1, nb)) / smax;
    }

    double max_primal_step(const Vec& w, const Vec& dw, double tau) const {
        double alpha = 1.0;
        for (int i = 0; i < ip_.N; ++i) {
            if (dw[i] < 0.0 && ip_.has_lb[i]) {
                alpha = std::min(alpha, -tau * (w[i] - ip_.lb[i]) / dw[i]);
            } else if (dw[i] > 0.0 && ip_.has_ub[i]) {
                alpha = std::min(alpha, tau * (ip_.ub[i] - w[i]) / dw[i]);
            }
        }
        return alpha;
    }

    double max_dual_step(const Vec& z, const Vec& dz, double tau,
                         const std::vector<bool>& active) const {
        double alpha = 1.0;
        for (int i = 0; i < ip_.N; ++i) {
            if (active[i] && dz[i] < 0.0) {
                alpha = std::min(alpha, -tau * z[i] / dz[i]);
            }
        }
        return alpha;
    }

    bool filter_accepts(double theta, double phi) const {
        for (const auto& e : filter_) {
            if (theta >= e.theta && phi >= e.phi) return false;
        }
        return true;
    }

    const InternalProblem ip_;
    SolverOptions opts_;
    bool in_restoration_;
    bool dense_ = false;
    bool use_bfgs_ = false;
    double mu_ = 0.1;
    std::vector<FilterEntry> filter_;
};

SolveResult IpmSolver::run(std::vector<double> start) {
    const auto t_start = std::chrono::steady_clock::now();
    SolveResult result;
    const int n = ip_.n, m = ip_.m, N = ip_.N;

    Vec w = Vec::Zero(N);
    for (int i = 0; i < n && i < static_cast<int>(start.size()); ++i) w[i] = start[i];

    // Slacks chosen to satisfy c + s = 0 where the sign permits.
    {
        Vec c0(m);
        if (m > 0) {
            ip_.p->constraints(std::span<const double>(w.data(), n),
                               std::span<double>(c0.data(), m));
        }
        for (int i = 0; i < m; ++i) {
            if (ip_.slack_of_row[i] >= 0) {
                w[ip_.slack_of_row[i]] = std::max(opts_.bound_push, -c0[i]);
            }
        }
    }
    project_start(w);

    Vec y = Vec::Zero(m);
    Vec zl = Vec::Zero(N), zu = Vec::Zero(N);
    for (int i = 0; i < N; ++i) {
        if (ip_.has_lb[i]) zl[i] = 1.0;
        if (ip_.has_ub[i]) zu[i] = 1.0;
    }

    mu_ = opts_.mu_init;
    double tau = std::max(kTauMin, 1.0 - mu_);

    Vec g(N), c(m), jv;
    Vec hess_vals;
    Eigen::MatrixXd bfgs;
    if (use_bfgs_) bfgs = Eigen::MatrixXd::Identity(N, N);

    double f = ip_.objective(w);
    ip_.gradient(w, g);
    ip_.constraints(w, c);
    ip_.jacobian(w, jv);
    if (!std::isfinite(f) || !c.allFinite()) {
        result.status = SolveStatus::NumericalFailure;
        result.message = "starting point evaluates to non-finite values";
        result.primal.assign(w.data(), w.data() + n);
        result.duals_constraints.assign(m, 0.0);
        result.duals_lower.assign(n, 0.0);
        result.duals_upper.assign(n, 0.0);
        return result;
    }

    const double theta0 = theta_of(c);
    const double theta_max = 1e4 * std::max(1.0, theta0);
    const double theta_min_small = 1e-4 * std::max(1.0, theta0);
    filter_.clear();
    filter_.push_back({theta_max, -std::numeric_limits<double>::infinity()});

    KktSystem kkt(ip_, dense_);
    double last_delta_w = 0.0;
    bool ever_regularized = false;
    int restorations = 0;
    int iter = 0;

    while (true) {
        Errors e0 = kkt_errors(w, g, c, jv, y, zl, zu, 0.0);
        double sd, sc;
        scaling_factors(y, zl, zu, sd, sc);

        if (opts_.print_level >= 1) {
            std::printf("%s%4d f=%-14.8g theta=%-10.3e kkt=%-10.3e mu=%-8.2e\n",
                        in_restoration_ ? "R" : " ", iter, f, theta_of(c), e0.unscaled(), mu_);
            if (opts_.print_level >= 2) {
                std::printf("     stat=%-10.3e comp=%-10.3e dw_last=%-9.2e\n", e0.stationarity,
                            e0.complementarity, last_delta_w);
            }
        }

        if (e0.unscaled() <= opts_.tol_kkt) {
            result.status = SolveStatus::Optimal;
            break;
        }
        if (iter >= opts_.max_iter) {
            result.status = SolveStatus::IterLimit;
            result.message = "iteration limit reached";
            break;
        }

        // Fiacco-McCormick monotone barrier reduction.
        while (mu_ > opts_.tol_kkt / 10.0 &&
               kkt_errors(w, g, c, jv, y, zl, zu, mu_).scaled(sd, sc) <= kKappaEps * mu_) {
            mu_ = std::max(opts_.tol_kkt / 10.0,
                           std::min(kKappaMu * mu_, std::pow(mu_, kThetaMu)));
            tau = std::max(kTauMin, 1.0 - mu_);
            filter_.clear();
            filter_.push_back({theta_max, -std::numeric_limits<double>::infinity()});
        }

        if (!use_bfgs_) {
            ip_.hessian(w, 1.0, y, hess_vals);
        }
        Vec sigma = Vec::Zero(N);
        for (int i = 0; i < N; ++i) {
            if (ip_.has_lb[i]) sigma[i] += zl[i] / (w[i] - ip_.lb[i]);
            if (ip_.has_ub[i]) sigma[i] += zu[i] / (ip_.ub[i] - w[i]);
        }

        // Factor, correcting inertia by primal/dual regularization.
        double delta_w = 0.0, delta_c = 0.0;
        const auto& reg = opts_.regularization;
        bool factored = kkt.factorize(use_bfgs_ ? nullptr : &hess_vals,
                                      use_bfgs_ ? &bfgs : nullptr, sigma, delta_w, jv, delta_c);
        bool inertia_ok = factored && kkt.inertia_ok();
        if (!inertia_ok) {
            // A near-rank-deficient Jacobian (e.g. a constraint whose gradient
            // vanishes at an unloaded device) shows up as wrong inertia that
            // no primal shift can cure, so always add the dual shift here.
            delta_c = reg.delta_c_bar * std::pow(mu_, reg.delta_c_exponent);
            delta_w = last_delta_w == 0.0
                          ? reg.delta_w_init
                          : std::max(reg.delta_w_min, last_delta_w * reg.decrease);
            while (true) {
                factored = kkt.factorize(use_bfgs_ ? nullptr : &hess_vals,
                                         use_bfgs_ ? &bfgs : nullptr, sigma, delta_w, jv, delta_c);
                if (factored && kkt.inertia_ok()) {
                    last_delta_w = delta_w;
                    ever_regularized = true;
                    inertia_ok = true;
                    break;
                }
                if (!factored && delta_c == 0.0) {
                    delta_c = reg.delta_c_bar * std::pow(mu_, reg.delta_c_exponent);
                }
                delta_w *= ever_regularized ? reg.increase : reg.increase_first;
                if (delta_w > reg.delta_w_max) break;
            }
        }
        if (!inertia_ok) {
            result.status = SolveStatus::NumericalFailure;
            result.message = "inertia correction failed (regularization overflow)";
            break;
        }
        assert(kkt.inertia_ok());

        // Primal-dual search direction.
        Vec rhs(N + m);
        Vec phi_grad = g;
        for (int i = 0; i < N; ++i) {
            if (ip_.has_lb[i]) phi_grad[i] -= mu_ / (w[i] - ip_.lb[i]);
            if (ip_.has_ub[i]) phi_grad[i] += mu_ / (ip_.ub[i] - w[i]);
            rhs[i] = -phi_grad[i];
        }
        for (std::size_t k = 0; k < ip_.jac.size(); ++k) {
            rhs[ip_.jac.cols[k]] -= jv[static_cast<Eigen::Index>(k)] * y[ip_.jac.rows[k]];
        }
        for (int i = 0; i < m; ++i) rhs[N + i] = -c[i];

        Vec sol = kkt.solve(rhs);
        Vec dw = sol.head(N);
        Vec dy = sol.tail(m);

        Vec dzl = Vec::Zero(N), dzu = Vec::Zero(N);
        for (int i = 0; i < N; ++i) {
            if (ip_.has_lb[i]) {
                const double dist = w[i] - ip_.lb[i];
                dzl[i] = mu_ / dist - zl[i] - zl[i] / dist * dw[i];
            }
            if (ip_.has_ub[i]) {
                const double dist = ip_.ub[i] - w[i];
                dzu[i] = mu_ / dist - zu[i] + zu[i] / dist * dw[i];
            }
        }

        // Filter line search with one second-order correction attempt.
        const double theta_k = theta_of(c);
        const double phi_k = barrier(w, f);
        const double dphi = phi_grad.dot(dw);
        const double alpha_max = max_primal_step(w, dw, tau);

        double alpha_min;
        if (dphi < 0.0 && theta_k <= theta_min_small) {
            alpha_min = kGammaAlpha *
                        std::min({kGammaTheta, kGammaPhi * theta_k / (-dphi),
                                  kDelta * std::pow(theta_k, kSTheta) / std::pow(-dphi, kSPhi)});
        } else if (dphi < 0.0) {
            alpha_min = kGammaAlpha * std::min(kGammaTheta, kGammaPhi * theta_k / (-dphi));
        } else {
            alpha_min = kGammaAlpha * kGammaTheta;
        }

        double alpha = alpha_max;
        bool accepted = false;
        bool augment_filter = false;
        Vec w_trial(N), c_trial(m);
        double f_trial = 0.0;
        bool tried_soc = false;

        while (true) {
            w_trial = w + alpha * dw;
            f_trial = ip_.objective(w_trial);
            ip_.constraints(w_trial, c_trial);
            if (std::isfinite(f_trial) && c_trial.allFinite()) {
                const double theta_t = theta_of(c_trial);
                const double phi_t = barrier(w_trial, f_trial);

                const bool switching =
                    dphi < 0.0 &&
                    alpha * std::pow(-dphi, kSPhi) > kDelta * std::pow(theta_k, kSTheta);
                bool acceptable;
                if (switching && theta_k <= theta_min_small) {
                    acceptable = phi_t <= phi_k + kEta * alpha * dphi;
                    augment_filter = false;
                } else {
                    acceptable = theta_t <= (1.0 - kGammaTheta) * theta_k ||
                                 phi_t <= phi_k - kGammaPhi * theta_k;
                    augment_filter = true;
                }
                if (acceptable && filter_accepts(theta_t, phi_t)) {
                    accepted = true;
                    break;
                }

                if (!tried_soc && alpha == alpha_max && theta_t >= theta_k && m > 0) {
                    tried_soc = true;
                    Vec c_soc = alpha_max * c + c_trial;
                    double theta_soc_prev = theta_t;
                    Vec rhs_soc = rhs;
                    for (int round = 0; round < kMaxSoc; ++round) {
                        for (int i = 0; i < m; ++i) rhs_soc[N + i] = -c_soc[i];
                        Vec sol_soc = kkt.solve(rhs_soc);
                        Vec dw_soc = sol_soc.head(N);
                        const double a_soc = max_primal_step(w, dw_soc, tau);
                        Vec w_soc = w + a_soc * dw_soc;
                        const double f_soc = ip_.objective(w_soc);
                        Vec c_s(m);
                        ip_.constraints(w_soc, c_s);
                        if (!std::isfinite(f_soc) || !c_s.allFinite()) break;
                        const double theta_s = theta_of(c_s);
                        const double phi_s = barrier(w_soc, f_soc);
                        bool acc;
                        if (switching && theta_k <= theta_min_small) {
                            acc = phi_s <= phi_k + kEta * a_soc * dphi;
                        } else {
                            acc = theta_s <= (1.0 - kGammaTheta) * theta_k ||
                                  phi_s <= phi_k - kGammaPhi * theta_k;
                        }
                        if (acc && filter_accepts(theta_s, phi_s)) {
                            w_trial = w_soc;
                            f_trial = f_soc;
                            c_trial = c_s;
                            dw = dw_soc;
                            dy = sol_soc.tail(m);
                            alpha = a_soc;
                            accepted = true;
                            break;
                        }
                        if (theta_s > kKappaSoc * theta_soc_prev) break;
                        theta_soc_prev = theta_s;
                        c_soc = a_soc * c_soc + c_s;
                    }
                    if (accepted) break;
                }
            }
            alpha *= 0.5;
            if (alpha < alpha_min) break;
        }

        if (!accepted) {
            if (in_restoration_ || restorations >= kMaxRestorations) {
                result.status = SolveStatus::NumericalFailure;
                result.message = in_restoration_
                                     ? "restoration line search failed"
                                     : "line search failed; restoration budget exhausted";
                break;
            }
            ++restorations;
            const double theta_enter = theta_of(c);

            // Elastic feasibility phase on the original problem.
            std::vector<double> x_ref(w.data(), w.data() + n);
            RestorationProblem resto(*ip_.p, x_ref, std::sqrt(mu_));
            std::vector<double> rstart(resto.num_vars(), 0.0);
            for (int i = 0; i < n; ++i) rstart[i] = w[i];
            {
                Vec c_orig(m);
                ip_.p->constraints(std::span<const double>(w.data(), n),
                                   std::span<double>(c_orig.data(), m));
                for (int i = 0; i < m; ++i) {
                    const double ci = c_orig[i];
                    if (ip_.p->row_kind(i) == RowKind::Equality) {
                        const double half = 0.5 * (mu_ - ci);
                        const double nval =
                            half + std::sqrt(half * half + 0.5 * mu_ * ci + 1e-16);
                        rstart[resto.elastic_var(i, true)] = std::max(nval, opts_.bound_push);
                        rstart[resto.elastic_var(i, false)] =
                            std::max(ci + nval, opts_.bound_push);
                    } else {
                        rstart[resto.elastic_var(i, false)] =
                            std::max(ci + opts_.bound_push, opts_.bound_push);
                    }
                }
            }
            SolverOptions ropts = opts_;
            ropts.tol_kkt = std::max(opts_.tol_kkt, 1e-9);
            ropts.max_iter = std::max(20, opts_.max_iter - iter);
            ropts.mu_init = std::max(mu_, 1e-4);
            ropts.print_level = std::max(0, opts_.print_level - 1);
            IpmSolver rsolver(resto, ropts, true);
            SolveResult rres = rsolver.run(std::move(rstart));
            iter += rres.iterations;

            for (int i = 0; i < n; ++i) w[i] = rres.primal[i];
            {
                Vec c_orig(m);
                ip_.p->constraints(std::span<const double>(w.data(), n),
                                   std::span<double>(c_orig.data(), m));
                for (int i = 0; i < m; ++i) {
                    if (ip_.slack_of_row[i] >= 0) {
                        w[ip_.slack_of_row[i]] = std::max(opts_.bound_push, -c_orig[i]);
                    }
                }
            }
            project_start(w);
            f = ip_.objective(w);
            ip_.gradient(w, g);
            ip_.constraints(w, c);
            ip_.jacobian(w, jv);
            const double theta_new = theta_of(c);

            const double resume_threshold =
                std::max(0.1 * theta_enter, 10.0 * opts_.tol_kkt);
            if (theta_new <= resume_threshold) {
                y.setZero();
                for (int i = 0; i < N; ++i) {
                    if (ip_.has_lb[i]) zl[i] = std::min(mu_ / (w[i] - ip_.lb[i]), 1e4);
                    if (ip_.has_ub[i]) zu[i] = std::min(mu_ / (ip_.ub[i] - w[i]), 1e4);
                }
                filter_.clear();
                filter_.push_back({theta_max, -std::numeric_limits<double>::infinity()});
                last_delta_w = 0.0;
                ++iter;
                continue;
            }
            if (rres.status == SolveStatus::Optimal &&
                theta_new > opts_.infeasibility_tol) {
                result.status = SolveStatus::Infeasible;
                result.message = "restoration converged to a nonzero infeasibility minimum";
            } else if (rres.status == SolveStatus::Infeasible) {
                result.status = SolveStatus::Infeasible;
                result.message = "restoration phase is itself infeasible";
            } else {
                result.status = SolveStatus::NumericalFailure;
                result.message = "restoration did not reach an acceptable point";
            }
            break;
        }

        // Accept the iterate.
        const double alpha_z = std::min(max_dual_step(zl, dzl, tau, ip_.has_lb),
                                        max_dual_step(zu, dzu, tau, ip_.has_ub));
        Vec w_old = w, g_old = g;
        w = w_trial;
        y += alpha * dy;
        zl += alpha_z * dzl;
        zu += alpha_z * dzu;
        for (int i = 0; i < N; ++i) {
            if (ip_.has_lb[i]) {
                const double dist = w[i] - ip_.lb[i];
                zl[i] = std::min(std::max(zl[i], mu_ / (kKappaSigma * dist)),
                                 kKappaSigma * mu_ / dist);
            }
            if (ip_.has_ub[i]) {
                const double dist = ip_.ub[i] - w[i];
                zu[i] = std::min(std::max(zu[i], mu_ / (kKappaSigma * dist)),
                                 kKappaSigma * mu_ / dist);
            }
        }

        if (augment_filter) {
            filter_.push_back({(1.0 - kGammaTheta) * theta_k, phi_k - kGammaPhi * theta_k});
        }

        f = f_trial;
        c = c_trial;
        ip_.gradient(w, g);
        Vec jv_old;
        if (use_bfgs_) jv_old = jv;
        ip_.jacobian(w, jv);

        if (use_bfgs_) {
            // Damped BFGS on the Lagrangian gradient (bound terms excluded).
            Vec s = w - w_old;
            Vec grad_new = g, grad_old = g_old;
            for (std::size_t k = 0; k < ip_.jac.size(); ++k) {
                const auto kk = static_cast<Eigen::Index>(k);
                grad_new[ip_.jac.cols[k]] += jv[kk] * y[ip_.jac.rows[k]];
                grad_old[ip_.jac.cols[k]] += jv_old[kk] * y[ip_.jac.rows[k]];
            }
            Vec yv = grad_new - grad_old;
            if (s.norm() < 1e-10 * std::max(1.0, w.norm())) yv.setZero();
            Vec Bs = bfgs * s;
            const double sBs = s.dot(Bs);
            const double sy = s.dot(yv);
            if (sBs > 0 && yv.norm() > 0) {
                double damp = 1.0;
                if (sy < 0.2 * sBs) damp = 0.8 * sBs / (sBs - sy);
                Vec r = damp * yv + (1.0 - damp) * Bs;
                const double sr = s.dot(r);
                if (sr > 1e-12 * s.norm() * r.norm()) {
                    bfgs -= (Bs * Bs.transpose()) / sBs;
                    bfgs += (r * r.transpose()) / sr;
                }
            }
        }

        if (opts_.print_level >= 2) {
            std::printf("     alpha=%-9.3e alpha_z=%-9.3e dphi=%-10.3e |dw|=%-9.3e\n", alpha,
                        alpha_z, dphi, dw.lpNorm<Eigen::Infinity>());
        }
        ++iter;
    }

    result.iterations = iter;
    result.objective = f;
    result.primal.assign(w.data(), w.data() + n);
    result.duals_constraints.assign(y.data(), y.data() + m);
    result.duals_lower.assign(zl.data(), zl.data() + n);
    result.duals_upper.assign(zu.data(), zu.data() + n);

    Errors e_final = kkt_errors(w, g, c, jv, y, zl, zu, 0.0);
    result.kkt.stationarity = e_final.stationarity;
    result.kkt.primal_feasibility = e_final.primal;
    result.kkt.complementarity = e_final.complementarity;
    double dual_viol = 0.0;
    for (int i = 0; i < N; ++i) {
        if (ip_.has_lb[i]) dual_viol = std::max(dual_viol, -zl[i]);
        if (ip_.has_ub[i]) dual_viol = std::max(dual_viol, -zu[i]);
    }
    result.kkt.dual_feasibility = std::max(0.0, dual_viol);

    result.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return result;
}

}  // namespace

SolveResult solve(const Problem& problem, std::vector<double> start, const SolverOptions& opts) {
    IpmSolver solver(problem, opts, false);
    return solver.run(std::move(start));
}

}  // namespace mcopf::nlp
