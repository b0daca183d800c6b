#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcopf/nlp/problem.hpp"

namespace mcopf::nlp {

enum class LinearSolverKind {
    Auto,       // dense below the size threshold, sparse above
    DenseLdl,
    SparseLdl,
};

enum class HessianMode {
    Exact,  // second derivatives from the problem callbacks
    Bfgs,   // damped BFGS approximation of the Lagrangian Hessian (debug aid)
};

struct RegularizationOptions {
    double delta_w_init = 1e-4;    // first primal regularization trial
    double delta_w_min = 1e-20;
    double delta_w_max = 1e40;
    double increase_first = 100.0;  // growth on the very first correction
    double increase = 8.0;          // growth on subsequent corrections
    double decrease = 1.0 / 3.0;    // shrink of the initial trial between iterations
    double delta_c_bar = 1e-8;      // dual regularization scale for singular systems
    double delta_c_exponent = 0.25;
};

struct SolverOptions {
    double tol_kkt = 1e-8;
    int max_iter = 300;
    double mu_init = 0.1;
    double bound_push = 1e-4;
    LinearSolverKind linear_solver = LinearSolverKind::Auto;
    int dense_threshold = 200;  // variables below which Auto picks the dense path
    RegularizationOptions regularization;
    HessianMode hessian = HessianMode::Exact;
    double infeasibility_tol = 1e-6;  // restoration stalls above this => Infeasible
    int print_level = 0;              // 0 silent, 1 per-iteration line
};

enum class SolveStatus { Optimal, Infeasible, IterLimit, NumericalFailure };

const char* to_string(SolveStatus s);

struct KktResiduals {
    double stationarity = 0.0;
    double primal_feasibility = 0.0;
    double dual_feasibility = 0.0;
    double complementarity = 0.0;

    double max() const;
};

struct SolveResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    std::vector<double> primal;           // x only (slacks stripped)
    std::vector<double> duals_constraints;  // one per row
    std::vector<double> duals_lower;        // bound multipliers, one per variable
    std::vector<double> duals_upper;
    double objective = 0.0;
    KktResiduals kkt;
    int iterations = 0;
    double wall_time_s = 0.0;
    std::string message;
};

/// Primal-dual interior-point solve with filter line search. The start point
/// is projected strictly inside the bounds by opts.bound_push before use.
SolveResult solve(const Problem& problem, std::vector<double> start, const SolverOptions& opts);

}  // namespace mcopf::nlp
