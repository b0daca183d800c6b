#include <doctest.h>

#include <cmath>
#include <limits>

#include "mcopf/formulation/terms.hpp"
#include "mcopf/nlp/derivative_check.hpp"

using namespace mcopf;
using formulation::ProblemBuilder;

TEST_CASE("term derivatives match central differences") {
    // One row of every term kind at a generic point.
    ProblemBuilder b;
    int vm1 = b.add_var("vm1", 0.5, 1.5);
    int va1 = b.add_var("va1", -3.0, 3.0);
    int vm2 = b.add_var("vm2", 0.5, 1.5);
    int va2 = b.add_var("va2", -3.0, 3.0);
    int p = b.add_var("p", -2.0, 2.0);
    int q = b.add_var("q", -2.0, 2.0);
    int u = b.add_var("u", 0.5, 1.5);
    int i = b.add_var("i", 0.0, 2.0);

    b.add_lin(ProblemBuilder::kObjective, p, 3.0);
    b.add_quad(ProblemBuilder::kObjective, q, 1.5);

    int r0 = b.add_row("flow_p", nlp::RowKind::Equality);
    b.add_lin(r0, p, 1.0);
    b.add_polar(r0, false, -1.0, vm1, va1, 1.05, vm2, va2, 1.0, 2.0, -8.0);

    int r1 = b.add_row("flow_q", nlp::RowKind::Equality);
    b.add_lin(r1, q, 1.0);
    b.add_polar(r1, true, -1.0, vm1, va1, 1.05, vm2, va2, 1.0, 2.0, -8.0);

    int r2 = b.add_row("ui", nlp::RowKind::Equality);
    b.add_quad(r2, p, 1.0);
    b.add_quad(r2, q, 1.0);
    b.add_biquad(r2, u, i, -1.0);

    int r3 = b.add_row("link", nlp::RowKind::Equality);
    b.add_lin(r3, p, 1.0);
    b.add_bilin(r3, u, i, -1.0);

    int r4 = b.add_row("circle", nlp::RowKind::Inequality);
    b.add_quad(r4, p, 1.0);
    b.add_quad(r4, q, 1.0);
    b.add_const(r4, -1.0);

    auto problem = b.build();
    std::vector<double> x = {1.02, 0.3, 0.97, -0.2, 0.5, -0.4, 1.1, 0.8};
    auto report = nlp::check_derivatives(*problem, x, 1e-6);
    CHECK(report.pattern_ok);
    CHECK(report.max_gradient_error <= 1e-7);
    CHECK(report.max_jacobian_error <= 1e-6);
    CHECK(report.max_hessian_error <= 1e-5);
}

TEST_CASE("polar kernel reproduces hand-computed flows") {
    // P = g*v1^2 - g*v1*v2*cos(d) - b*v1*v2*sin(d), row is P - kernel = 0,
    // so at a point where the variable P equals the kernel the row vanishes.
    ProblemBuilder b;
    int vm1 = b.add_var("vm1", 0.0, 2.0);
    int va1 = b.add_var("va1", -3.0, 3.0);
    int vm2 = b.add_var("vm2", 0.0, 2.0);
    int va2 = b.add_var("va2", -3.0, 3.0);
    int p = b.add_var("p", -5.0, 5.0);
    int r = b.add_row("pdef", nlp::RowKind::Equality);
    b.add_lin(r, p, 1.0);
    b.add_polar(r, false, -1.0, vm1, va1, 1.0, vm2, va2, 1.0, 1.0, -10.0);
    auto problem = b.build();

    const double v1 = 1.05, v2 = 0.98, th1 = 0.1, th2 = -0.05;
    const double g = 1.0, bb = -10.0;
    const double d = th1 - th2;
    const double expected =
        g * v1 * v1 - g * v1 * v2 * std::cos(d) - bb * v1 * v2 * std::sin(d);
    std::vector<double> x = {v1, th1, v2, th2, expected};
    std::vector<double> c(1);
    problem->constraints(x, c);
    CHECK(c[0] == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("linear rows differentiate exactly") {
    ProblemBuilder b;
    int x = b.add_var("x", -10.0, 10.0);
    int y = b.add_var("y", -10.0, 10.0);
    b.add_lin(ProblemBuilder::kObjective, x, 2.0);
    int r = b.add_row("plane", nlp::RowKind::Equality);
    b.add_lin(r, x, 3.0);
    b.add_lin(r, y, -7.0);
    b.add_const(r, 1.0);
    auto problem = b.build();
    auto report = nlp::check_derivatives(*problem, {0.3, -0.8}, 1e-6);
    CHECK(report.max_jacobian_error <= 1e-10);
    CHECK(report.max_gradient_error <= 1e-10);
}
