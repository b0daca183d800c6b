#pragma once

#include <span>
#include <string>
#include <vector>

namespace mcopf::nlp {

enum class RowKind {
    Equality,    // c(x) = 0
    Inequality,  // c(x) <= 0
};

/// COO index lists; Jacobian entries are (row, var), Hessian entries are the
/// lower triangle (var_i >= var_j) of the Hessian of the Lagrangian.
struct SparsityPattern {
    std::vector<int> rows;
    std::vector<int> cols;
    std::size_t size() const { return rows.size(); }
};

/// Sparse smooth NLP:
///
///   min f(x)   s.t.  c_E(x) = 0,  c_I(x) <= 0,  lb <= x <= ub
///
/// Declared sparsity patterns must be supersets of the true nonzeros. All
/// callbacks must be deterministic, smooth on the open box, and reentrant:
/// concurrent evaluation at distinct points must be safe.
class Problem {
public:
    virtual ~Problem() = default;

    virtual int num_vars() const = 0;
    virtual int num_rows() const = 0;
    virtual const std::vector<double>& lower_bounds() const = 0;
    virtual const std::vector<double>& upper_bounds() const = 0;
    virtual RowKind row_kind(int row) const = 0;

    virtual double objective(std::span<const double> x) const = 0;
    virtual void objective_gradient(std::span<const double> x, std::span<double> grad) const = 0;
    virtual void constraints(std::span<const double> x, std::span<double> values) const = 0;

    virtual const SparsityPattern& jacobian_pattern() const = 0;
    virtual void jacobian_values(std::span<const double> x, std::span<double> values) const = 0;

    /// Hessian of obj_factor * f + sum_i lambda_i * c_i, lower triangle,
    /// aligned with hessian_pattern().
    virtual const SparsityPattern& hessian_pattern() const = 0;
    virtual void hessian_values(std::span<const double> x, double obj_factor,
                                std::span<const double> lambda,
                                std::span<double> values) const = 0;

    virtual std::string row_name(int row) const { return "row_" + std::to_string(row); }
    virtual std::string var_name(int var) const { return "x_" + std::to_string(var); }
};

}  // namespace mcopf::nlp
