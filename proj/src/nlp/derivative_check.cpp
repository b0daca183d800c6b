#include "mcopf/nlp/derivative_check.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace mcopf::nlp {

namespace {

double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace

double DerivativeReport::max_error() const {
    return std::max({max_gradient_error, max_jacobian_error, max_hessian_error});
}

DerivativeReport check_derivatives(const Problem& problem, const std::vector<double>& point,
                                   double step, double report_threshold) {
    DerivativeReport report;
    const int n = problem.num_vars();
    const int m = problem.num_rows();

    std::vector<double> x = point;
    std::vector<double> grad(n, 0.0);
    problem.objective_gradient(x, grad);

    std::vector<double> c_plus(m), c_minus(m);

    // Analytic Jacobian as a dense map for comparison.
    const auto& jp = problem.jacobian_pattern();
    std::vector<double> jvals(jp.size(), 0.0);
    problem.jacobian_values(x, jvals);
    std::map<std::pair<int, int>, double> jac;
    for (std::size_t k = 0; k < jp.size(); ++k) {
        jac[{jp.rows[k], jp.cols[k]}] += jvals[k];
    }

    for (int j = 0; j < n; ++j) {
        const double h = step * std::max(1.0, std::abs(x[j]));
        const double saved = x[j];

        x[j] = saved + h;
        const double f_plus = problem.objective(x);
        if (m > 0) problem.constraints(x, c_plus);
        x[j] = saved - h;
        const double f_minus = problem.objective(x);
        if (m > 0) problem.constraints(x, c_minus);
        x[j] = saved;

        const double g_fd = (f_plus - f_minus) / (2.0 * h);
        const double ge = rel_err(grad[j], g_fd);
        if (ge > report.max_gradient_error) report.max_gradient_error = ge;
        if (ge > report_threshold) {
            report.worst.push_back({"grad[" + problem.var_name(j) + "]", grad[j], g_fd, ge});
        }

        for (int i = 0; i < m; ++i) {
            const double j_fd = (c_plus[i] - c_minus[i]) / (2.0 * h);
            auto it = jac.find({i, j});
            const double j_an = it != jac.end() ? it->second : 0.0;
            const double je = rel_err(j_an, j_fd);
            if (it == jac.end() && std::abs(j_fd) > 1e-7) {
                report.pattern_ok = false;
                report.pattern_gaps.push_back("jac(" + problem.row_name(i) + "," +
                                              problem.var_name(j) + ") missing from pattern");
            }
            if (je > report.max_jacobian_error) report.max_jacobian_error = je;
            if (je > report_threshold) {
                report.worst.push_back(
                    {"jac(" + problem.row_name(i) + "," + problem.var_name(j) + ")", j_an, j_fd,
                     je});
            }
        }
    }

    // Directional Hessian check: H*v against central differences of the
    // Lagrangian gradient along v, with lambda = 1 on every row.
    {
        std::vector<double> lambda(m, 1.0);
        const auto& hp = problem.hessian_pattern();
        std::vector<double> hvals(hp.size(), 0.0);
        problem.hessian_values(x, 1.0, lambda, hvals);

        std::vector<double> v(n);
        for (int i = 0; i < n; ++i) {
            v[i] = 0.5 + 0.1 * static_cast<double>((i * 2654435761u) % 1000) / 1000.0;
        }

        std::vector<double> hv(n, 0.0);
        for (std::size_t k = 0; k < hp.size(); ++k) {
            const int r = hp.rows[k], cc = hp.cols[k];
            hv[r] += hvals[k] * v[cc];
            if (r != cc) hv[cc] += hvals[k] * v[r];
        }

        auto lagr_grad = [&](const std::vector<double>& at, std::vector<double>& out) {
            out.assign(n, 0.0);
            problem.objective_gradient(at, out);
            std::vector<double> jv(jp.size(), 0.0);
            problem.jacobian_values(at, jv);
            for (std::size_t k = 0; k < jp.size(); ++k) {
                out[jp.cols[k]] += jv[k] * lambda[jp.rows[k]];
            }
        };

        const double h = step;
        std::vector<double> xp = x, xm = x;
        for (int i = 0; i < n; ++i) {
            xp[i] += h * v[i];
            xm[i] -= h * v[i];
        }
        std::vector<double> gp, gm;
        lagr_grad(xp, gp);
        lagr_grad(xm, gm);
        for (int i = 0; i < n; ++i) {
            const double fd = (gp[i] - gm[i]) / (2.0 * h);
            const double he = rel_err(hv[i], fd);
            if (he > report.max_hessian_error) report.max_hessian_error = he;
            if (he > 1e2 * report_threshold) {
                report.worst.push_back({"hess_dir[" + problem.var_name(i) + "]", hv[i], fd, he});
            }
        }
    }

    std::sort(report.worst.begin(), report.worst.end(),
              [](const DerivativeEntry& a, const DerivativeEntry& b) {
                  return a.rel_error > b.rel_error;
              });
    if (report.worst.size() > 20) report.worst.resize(20);
    return report;
}

}  // namespace mcopf::nlp
