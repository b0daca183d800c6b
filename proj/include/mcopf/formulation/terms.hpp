#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mcopf/nlp/problem.hpp"

namespace mcopf::formulation {

/// NLP whose objective and constraint rows are sums of algebraic terms:
/// constants, a*x, a*x^2, a*x_i*x_j, a*x_i^2*x_j^2, and the polar power-flow
/// kernels
///
///   active:    s * [ g*va^2 - g*va*vb*cos(d) - b*va*vb*sin(d) ]
///   reactive:  s * [ -b*va^2 + b*va*vb*cos(d) - g*va*vb*sin(d) ]
///
/// with va = x[vm_a]/tap_a, vb = x[vm_b]/tap_b, d = x[va_a] - x[va_b].
/// First and second derivatives are exact and sparse.
class TermProblem final : public nlp::Problem {
public:
    int num_vars() const override { return static_cast<int>(var_lb_.size()); }
    int num_rows() const override { return static_cast<int>(row_kind_.size()); }
    const std::vector<double>& lower_bounds() const override { return var_lb_; }
    const std::vector<double>& upper_bounds() const override { return var_ub_; }
    nlp::RowKind row_kind(int row) const override { return row_kind_[row]; }

    double objective(std::span<const double> x) const override;
    void objective_gradient(std::span<const double> x, std::span<double> grad) const override;
    void constraints(std::span<const double> x, std::span<double> values) const override;

    const nlp::SparsityPattern& jacobian_pattern() const override { return jac_pattern_; }
    void jacobian_values(std::span<const double> x, std::span<double> values) const override;

    const nlp::SparsityPattern& hessian_pattern() const override { return hess_pattern_; }
    void hessian_values(std::span<const double> x, double obj_factor,
                        std::span<const double> lambda, std::span<double> values) const override;

    std::string row_name(int row) const override { return row_names_[row]; }
    std::string var_name(int var) const override { return var_names_[var]; }

    int num_equalities() const;
    int num_inequalities() const;

    /// Residuals of equality rows only (diagnostics).
    std::vector<double> equality_residuals(std::span<const double> x) const;

private:
    friend class ProblemBuilder;

    // kObjective tags objective terms.
    static constexpr int kObjective = -1;

    struct LinTerm {
        int row, var;
        double coef;
        int jslot;
    };
    struct QuadTerm {
        int row, var;
        double coef;
        int jslot, hslot;
    };
    struct BilinTerm {
        int row, i, j;
        double coef;
        int jslot_i, jslot_j, hslot;
    };
    struct BiQuadTerm {  // coef * xi^2 * xj^2
        int row, i, j;
        double coef;
        int jslot_i, jslot_j, hslot_ii, hslot_jj, hslot_ij;
    };
    struct PolarTerm {
        int row;
        int vm_a, va_a, vm_b, va_b;
        double tap_a, tap_b;
        double g, b;
        bool reactive;
        double scale;
        int j_vm_a, j_va_a, j_vm_b, j_va_b;
        int h_mama, h_mamb, h_maaa, h_maab, h_mbaa, h_mbab, h_aaaa, h_aaab, h_abab;
    };

    std::vector<double> var_lb_, var_ub_;
    std::vector<std::string> var_names_;
    std::vector<nlp::RowKind> row_kind_;
    std::vector<std::string> row_names_;
    std::vector<double> row_const_;
    double obj_const_ = 0.0;

    std::vector<LinTerm> lin_;
    std::vector<QuadTerm> quad_;
    std::vector<BilinTerm> bilin_;
    std::vector<BiQuadTerm> biquad_;
    std::vector<PolarTerm> polar_;

    nlp::SparsityPattern jac_pattern_;
    nlp::SparsityPattern hess_pattern_;
};

/// Incremental construction of a TermProblem. Row/variable indices are dense
/// and returned in creation order.
class ProblemBuilder {
public:
    static constexpr int kObjective = TermProblem::kObjective;

    int add_var(std::string name, double lb, double ub);
    int add_row(std::string name, nlp::RowKind kind);

    /// row may be kObjective for objective terms.
    void add_const(int row, double value);
    void add_lin(int row, int var, double coef);
    void add_quad(int row, int var, double coef);
    void add_bilin(int row, int i, int j, double coef);
    void add_biquad(int row, int i, int j, double coef);
    void add_polar(int row, bool reactive, double scale, int vm_a, int va_a, double tap_a,
                   int vm_b, int va_b, double tap_b, double g, double b);

    int num_vars() const { return static_cast<int>(problem_->var_lb_.size()); }
    int num_rows() const { return static_cast<int>(problem_->row_kind_.size()); }

    /// Finalizes sparsity patterns; the builder must not be reused afterwards.
    std::unique_ptr<TermProblem> build();

    ProblemBuilder() : problem_(std::make_unique<TermProblem>()) {}

private:
    std::unique_ptr<TermProblem> problem_;
};

}  // namespace mcopf::formulation
