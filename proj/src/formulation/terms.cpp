#include "mcopf/formulation/terms.hpp"

#include <cassert>
#include <cmath>
#include <map>
#include <stdexcept>

namespace mcopf::formulation {

namespace {

struct PolarEval {
    double va, vb, cos_d, sin_d;
};

inline PolarEval polar_eval(std::span<const double> x, int vm_a, int va_a, int vm_b, int va_b,
                            double tap_a, double tap_b) {
    PolarEval e;
    e.va = x[vm_a] / tap_a;
    e.vb = x[vm_b] / tap_b;
    const double d = x[va_a] - x[va_b];
    e.cos_d = std::cos(d);
    e.sin_d = std::sin(d);
    return e;
}

}  // namespace

double TermProblem::objective(std::span<const double> x) const {
    double val = obj_const_;
    for (const auto& t : lin_) {
        if (t.row == kObjective) val += t.coef * x[t.var];
    }
    for (const auto& t : quad_) {
        if (t.row == kObjective) val += t.coef * x[t.var] * x[t.var];
    }
    for (const auto& t : bilin_) {
        if (t.row == kObjective) val += t.coef * x[t.i] * x[t.j];
    }
    for (const auto& t : biquad_) {
        if (t.row == kObjective) val += t.coef * x[t.i] * x[t.i] * x[t.j] * x[t.j];
    }
    for (const auto& t : polar_) {
        if (t.row != kObjective) continue;
        const auto e = polar_eval(x, t.vm_a, t.va_a, t.vm_b, t.va_b, t.tap_a, t.tap_b);
        if (t.reactive) {
            val += t.scale * (-t.b * e.va * e.va + t.b * e.va * e.vb * e.cos_d -
                              t.g * e.va * e.vb * e.sin_d);
        } else {
            val += t.scale * (t.g * e.va * e.va - t.g * e.va * e.vb * e.cos_d -
                              t.b * e.va * e.vb * e.sin_d);
        }
    }
    return val;
}

void TermProblem::objective_gradient(std::span<const double> x, std::span<double> grad) const {
    for (int i = 0; i < num_vars(); ++i) grad[i] = 0.0;
    for (const auto& t : lin_) {
        if (t.row == kObjective) grad[t.var] += t.coef;
    }
    for (const auto& t : quad_) {
        if (t.row == kObjective) grad[t.var] += 2.0 * t.coef * x[t.var];
    }
    for (const auto& t : bilin_) {
        if (t.row == kObjective) {
            grad[t.i] += t.coef * x[t.j];
            grad[t.j] += t.coef * x[t.i];
        }
    }
    for (const auto& t : biquad_) {
        if (t.row == kObjective) {
            grad[t.i] += 2.0 * t.coef * x[t.i] * x[t.j] * x[t.j];
            grad[t.j] += 2.0 * t.coef * x[t.i] * x[t.i] * x[t.j];
        }
    }
    // Polar terms in the objective are not used by the formulations; keep the
    // builder honest.
    for (const auto& t : polar_) {
        assert(t.row != kObjective);
        (void)t;
    }
}

void TermProblem::constraints(std::span<const double> x, std::span<double> values) const {
    for (int i = 0; i < num_rows(); ++i) values[i] = row_const_[i];
    for (const auto& t : lin_) {
        if (t.row >= 0) values[t.row] += t.coef * x[t.var];
    }
    for (const auto& t : quad_) {
        if (t.row >= 0) values[t.row] += t.coef * x[t.var] * x[t.var];
    }
    for (const auto& t : bilin_) {
        if (t.row >= 0) values[t.row] += t.coef * x[t.i] * x[t.j];
    }
    for (const auto& t : biquad_) {
        if (t.row >= 0) values[t.row] += t.coef * x[t.i] * x[t.i] * x[t.j] * x[t.j];
    }
    for (const auto& t : polar_) {
        const auto e = polar_eval(x, t.vm_a, t.va_a, t.vm_b, t.va_b, t.tap_a, t.tap_b);
        double v;
        if (t.reactive) {
            v = -t.b * e.va * e.va + t.b * e.va * e.vb * e.cos_d - t.g * e.va * e.vb * e.sin_d;
        } else {
            v = t.g * e.va * e.va - t.g * e.va * e.vb * e.cos_d - t.b * e.va * e.vb * e.sin_d;
        }
        values[t.row] += t.scale * v;
    }
}

void TermProblem::jacobian_values(std::span<const double> x, std::span<double> values) const {
    for (std::size_t i = 0; i < jac_pattern_.size(); ++i) values[i] = 0.0;
    for (const auto& t : lin_) {
        if (t.row >= 0) values[t.jslot] += t.coef;
    }
    for (const auto& t : quad_) {
        if (t.row >= 0) values[t.jslot] += 2.0 * t.coef * x[t.var];
    }
    for (const auto& t : bilin_) {
        if (t.row >= 0) {
            values[t.jslot_i] += t.coef * x[t.j];
            values[t.jslot_j] += t.coef * x[t.i];
        }
    }
    for (const auto& t : biquad_) {
        if (t.row >= 0) {
            values[t.jslot_i] += 2.0 * t.coef * x[t.i] * x[t.j] * x[t.j];
            values[t.jslot_j] += 2.0 * t.coef * x[t.i] * x[t.i] * x[t.j];
        }
    }
    for (const auto& t : polar_) {
        const auto e = polar_eval(x, t.vm_a, t.va_a, t.vm_b, t.va_b, t.tap_a, t.tap_b);
        double d_va, d_vb, d_ang;
        if (t.reactive) {
            d_va = -2.0 * t.b * e.va + t.b * e.vb * e.cos_d - t.g * e.vb * e.sin_d;
            d_vb = t.b * e.va * e.cos_d - t.g * e.va * e.sin_d;
            d_ang = -t.b * e.va * e.vb * e.sin_d - t.g * e.va * e.vb * e.cos_d;
        } else {
            d_va = 2.0 * t.g * e.va - t.g * e.vb * e.cos_d - t.b * e.vb * e.sin_d;
            d_vb = -t.g * e.va * e.cos_d - t.b * e.va * e.sin_d;
            d_ang = t.g * e.va * e.vb * e.sin_d - t.b * e.va * e.vb * e.cos_d;
        }
        values[t.j_vm_a] += t.scale * d_va / t.tap_a;
        values[t.j_vm_b] += t.scale * d_vb / t.tap_b;
        values[t.j_va_a] += t.scale * d_ang;
        values[t.j_va_b] -= t.scale * d_ang;
    }
}

void TermProblem::hessian_values(std::span<const double> x, double obj_factor,
                                 std::span<const double> lambda,
                                 std::span<double> values) const {
    for (std::size_t i = 0; i < hess_pattern_.size(); ++i) values[i] = 0.0;
    auto mult = [&](int row) { return row == kObjective ? obj_factor : lambda[row]; };

    for (const auto& t : quad_) {
        values[t.hslot] += 2.0 * t.coef * mult(t.row);
    }
    for (const auto& t : bilin_) {
        values[t.hslot] += t.coef * mult(t.row);
    }
    for (const auto& t : biquad_) {
        const double m = t.coef * mult(t.row);
        values[t.hslot_ii] += 2.0 * m * x[t.j] * x[t.j];
        values[t.hslot_jj] += 2.0 * m * x[t.i] * x[t.i];
        values[t.hslot_ij] += 4.0 * m * x[t.i] * x[t.j];
    }
    for (const auto& t : polar_) {
        const double m = t.scale * mult(t.row);
        if (m == 0.0) continue;
        const auto e = polar_eval(x, t.vm_a, t.va_a, t.vm_b, t.va_b, t.tap_a, t.tap_b);
        double h_vava, h_vavb, h_vad, h_vbd, h_dd;
        if (t.reactive) {
            h_vava = -2.0 * t.b;
            h_vavb = t.b * e.cos_d - t.g * e.sin_d;
            h_vad = -t.b * e.vb * e.sin_d - t.g * e.vb * e.cos_d;
            h_vbd = -t.b * e.va * e.sin_d - t.g * e.va * e.cos_d;
            h_dd = -t.b * e.va * e.vb * e.cos_d + t.g * e.va * e.vb * e.sin_d;
        } else {
            h_vava = 2.0 * t.g;
            h_vavb = -t.g * e.cos_d - t.b * e.sin_d;
            h_vad = t.g * e.vb * e.sin_d - t.b * e.vb * e.cos_d;
            h_vbd = t.g * e.va * e.sin_d - t.b * e.va * e.cos_d;
            h_dd = t.g * e.va * e.vb * e.cos_d + t.b * e.va * e.vb * e.sin_d;
        }
        values[t.h_mama] += m * h_vava / (t.tap_a * t.tap_a);
        values[t.h_mamb] += m * h_vavb / (t.tap_a * t.tap_b);
        values[t.h_maaa] += m * h_vad / t.tap_a;
        values[t.h_maab] -= m * h_vad / t.tap_a;
        values[t.h_mbaa] += m * h_vbd / t.tap_b;
        values[t.h_mbab] -= m * h_vbd / t.tap_b;
        values[t.h_aaaa] += m * h_dd;
        values[t.h_abab] += m * h_dd;
        values[t.h_aaab] -= m * h_dd;
    }
}

int TermProblem::num_equalities() const {
    int n = 0;
    for (auto k : row_kind_) {
        if (k == nlp::RowKind::Equality) ++n;
    }
    return n;
}

int TermProblem::num_inequalities() const { return num_rows() - num_equalities(); }

std::vector<double> TermProblem::equality_residuals(std::span<const double> x) const {
    std::vector<double> all(num_rows());
    constraints(x, all);
    std::vector<double> out;
    for (int i = 0; i < num_rows(); ++i) {
        if (row_kind_[i] == nlp::RowKind::Equality) out.push_back(all[i]);
    }
    return out;
}

int ProblemBuilder::add_var(std::string name, double lb, double ub) {
    if (lb > ub) {
        throw std::invalid_argument("variable '" + name + "' has empty bound interval");
    }
    problem_->var_names_.push_back(std::move(name));
    problem_->var_lb_.push_back(lb);
    problem_->var_ub_.push_back(ub);
    return static_cast<int>(problem_->var_lb_.size()) - 1;
}

int ProblemBuilder::add_row(std::string name, nlp::RowKind kind) {
    problem_->row_names_.push_back(std::move(name));
    problem_->row_kind_.push_back(kind);
    problem_->row_const_.push_back(0.0);
    return static_cast<int>(problem_->row_kind_.size()) - 1;
}

void ProblemBuilder::add_const(int row, double value) {
    if (row == kObjective) {
        problem_->obj_const_ += value;
    } else {
        problem_->row_const_[row] += value;
    }
}

void ProblemBuilder::add_lin(int row, int var, double coef) {
    problem_->lin_.push_back({row, var, coef, -1});
}

void ProblemBuilder::add_quad(int row, int var, double coef) {
    problem_->quad_.push_back({row, var, coef, -1, -1});
}

void ProblemBuilder::add_bilin(int row, int i, int j, double coef) {
    if (i == j) {
        add_quad(row, i, coef);
        return;
    }
    problem_->bilin_.push_back({row, i, j, coef, -1, -1, -1});
}

void ProblemBuilder::add_biquad(int row, int i, int j, double coef) {
    if (i == j) {
        throw std::invalid_argument("biquad term requires distinct variables");
    }
    problem_->biquad_.push_back({row, i, j, coef, -1, -1, -1, -1, -1});
}

void ProblemBuilder::add_polar(int row, bool reactive, double scale, int vm_a, int va_a,
                               double tap_a, int vm_b, int va_b, double tap_b, double g,
                               double b) {
    TermProblem::PolarTerm t;
    t.row = row;
    t.vm_a = vm_a;
    t.va_a = va_a;
    t.vm_b = vm_b;
    t.va_b = va_b;
    t.tap_a = tap_a;
    t.tap_b = tap_b;
    t.g = g;
    t.b = b;
    t.reactive = reactive;
    t.scale = scale;
    problem_->polar_.push_back(t);
}

std::unique_ptr<TermProblem> ProblemBuilder::build() {
    TermProblem& p = *problem_;

    std::map<std::pair<int, int>, int> jac_slots;  // (row, var) -> slot
    auto jslot = [&](int row, int var) {
        auto [it, inserted] = jac_slots.try_emplace({row, var},
                                                    static_cast<int>(p.jac_pattern_.size()));
        if (inserted) {
            p.jac_pattern_.rows.push_back(row);
            p.jac_pattern_.cols.push_back(var);
        }
        return it->second;
    };
    std::map<std::pair<int, int>, int> hess_slots;  // lower triangle (hi, lo)
    auto hslot = [&](int a, int b) {
        if (a < b) std::swap(a, b);
        auto [it, inserted] = hess_slots.try_emplace({a, b},
                                                     static_cast<int>(p.hess_pattern_.size()));
        if (inserted) {
            p.hess_pattern_.rows.push_back(a);
            p.hess_pattern_.cols.push_back(b);
        }
        return it->second;
    };

    for (auto& t : p.lin_) {
        if (t.row >= 0) t.jslot = jslot(t.row, t.var);
    }
    for (auto& t : p.quad_) {
        if (t.row >= 0) t.jslot = jslot(t.row, t.var);
        t.hslot = hslot(t.var, t.var);
    }
    for (auto& t : p.bilin_) {
        if (t.row >= 0) {
            t.jslot_i = jslot(t.row, t.i);
            t.jslot_j = jslot(t.row, t.j);
        }
        t.hslot = hslot(t.i, t.j);
    }
    for (auto& t : p.biquad_) {
        if (t.row >= 0) {
            t.jslot_i = jslot(t.row, t.i);
            t.jslot_j = jslot(t.row, t.j);
        }
        t.hslot_ii = hslot(t.i, t.i);
        t.hslot_jj = hslot(t.j, t.j);
        t.hslot_ij = hslot(t.i, t.j);
    }
    for (auto& t : p.polar_) {
        t.j_vm_a = jslot(t.row, t.vm_a);
        t.j_va_a = jslot(t.row, t.va_a);
        t.j_vm_b = jslot(t.row, t.vm_b);
        t.j_va_b = jslot(t.row, t.va_b);
        t.h_mama = hslot(t.vm_a, t.vm_a);
        t.h_mamb = hslot(t.vm_a, t.vm_b);
        t.h_maaa = hslot(t.vm_a, t.va_a);
        t.h_maab = hslot(t.vm_a, t.va_b);
        t.h_mbaa = hslot(t.vm_b, t.va_a);
        t.h_mbab = hslot(t.vm_b, t.va_b);
        t.h_aaaa = hslot(t.va_a, t.va_a);
        t.h_aaab = hslot(t.va_a, t.va_b);
        t.h_abab = hslot(t.va_b, t.va_b);
    }

    return std::move(problem_);
}

}  // namespace mcopf::formulation
