#pragma once

#include <string>
#include <vector>

#include "mcopf/nlp/problem.hpp"

namespace mcopf::nlp {

struct DerivativeEntry {
    std::string what;  // "grad[i]" or "jac(row,col)"
    double analytic = 0.0;
    double finite_diff = 0.0;
    double rel_error = 0.0;
};

struct DerivativeReport {
    double max_gradient_error = 0.0;
    double max_jacobian_error = 0.0;
    double max_hessian_error = 0.0;  // directional check of the Lagrangian Hessian
    std::vector<DerivativeEntry> worst;  // entries above the report threshold
    bool pattern_ok = true;              // no FD nonzeros outside the declared pattern
    std::vector<std::string> pattern_gaps;

    double max_error() const;
};

/// Central-difference verification of the objective gradient, the constraint
/// Jacobian, and (directionally) the Hessian of the Lagrangian at a point that
/// must be strictly inside the bounds.
DerivativeReport check_derivatives(const Problem& problem, const std::vector<double>& point,
                                   double step = 1e-6, double report_threshold = 1e-6);

}  // namespace mcopf::nlp
