#include <doctest.h>

#include <cmath>
#include <random>
#include <thread>

#include <Eigen/Dense>

#include "mcopf/formulation/terms.hpp"
#include "mcopf/nlp/solver.hpp"

using namespace mcopf;
using formulation::ProblemBuilder;
using nlp::RowKind;
using nlp::SolveStatus;

namespace {

nlp::SolverOptions tight() {
    nlp::SolverOptions o;
    o.tol_kkt = 1e-8;
    return o;
}

/// Textbook problem with a quartic product term, written out by hand:
///   min x1*x4*(x1+x2+x3) + x3
///   s.t. x1*x2*x3*x4 >= 25,  x1^2+x2^2+x3^2+x4^2 = 40,  1 <= x <= 5
class QuarticProblem final : public nlp::Problem {
public:
    QuarticProblem() {
        lb_.assign(4, 1.0);
        ub_.assign(4, 5.0);
        for (int r = 0; r < 2; ++r) {
            for (int c = 0; c < 4; ++c) {
                jac_.rows.push_back(r);
                jac_.cols.push_back(c);
            }
        }
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j <= i; ++j) {
                hess_.rows.push_back(i);
                hess_.cols.push_back(j);
            }
        }
    }
    int num_vars() const override { return 4; }
    int num_rows() const override { return 2; }
    const std::vector<double>& lower_bounds() const override { return lb_; }
    const std::vector<double>& upper_bounds() const override { return ub_; }
    RowKind row_kind(int r) const override {
        return r == 0 ? RowKind::Inequality : RowKind::Equality;
    }
    double objective(std::span<const double> x) const override {
        return x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2];
    }
    void objective_gradient(std::span<const double> x, std::span<double> g) const override {
        g[0] = x[3] * (2 * x[0] + x[1] + x[2]);
        g[1] = x[0] * x[3];
        g[2] = x[0] * x[3] + 1.0;
        g[3] = x[0] * (x[0] + x[1] + x[2]);
    }
    void constraints(std::span<const double> x, std::span<double> v) const override {
        v[0] = 25.0 - x[0] * x[1] * x[2] * x[3];  // <= 0
        v[1] = x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] - 40.0;
    }
    const nlp::SparsityPattern& jacobian_pattern() const override { return jac_; }
    void jacobian_values(std::span<const double> x, std::span<double> v) const override {
        v[0] = -x[1] * x[2] * x[3];
        v[1] = -x[0] * x[2] * x[3];
        v[2] = -x[0] * x[1] * x[3];
        v[3] = -x[0] * x[1] * x[2];
        v[4] = 2 * x[0];
        v[5] = 2 * x[1];
        v[6] = 2 * x[2];
        v[7] = 2 * x[3];
    }
    const nlp::SparsityPattern& hessian_pattern() const override { return hess_; }
    void hessian_values(std::span<const double> x, double of, std::span<const double> lam,
                        std::span<double> v) const override {
        auto idx = [](int i, int j) {
            // dense lower triangle layout used in the constructor
            return i * (i + 1) / 2 + j;
        };
        for (std::size_t k = 0; k < hess_.size(); ++k) v[k] = 0.0;
        // objective
        v[idx(0, 0)] += of * 2.0 * x[3];
        v[idx(1, 0)] += of * x[3];
        v[idx(2, 0)] += of * x[3];
        v[idx(3, 0)] += of * (2 * x[0] + x[1] + x[2]);
        v[idx(3, 1)] += of * x[0];
        v[idx(3, 2)] += of * x[0];
        // product constraint
        v[idx(1, 0)] += lam[0] * -x[2] * x[3];
        v[idx(2, 0)] += lam[0] * -x[1] * x[3];
        v[idx(2, 1)] += lam[0] * -x[0] * x[3];
        v[idx(3, 0)] += lam[0] * -x[1] * x[2];
        v[idx(3, 1)] += lam[0] * -x[0] * x[2];
        v[idx(3, 2)] += lam[0] * -x[0] * x[1];
        // sphere constraint
        for (int i = 0; i < 4; ++i) v[idx(i, i)] += lam[1] * 2.0;
    }

private:
    std::vector<double> lb_, ub_;
    nlp::SparsityPattern jac_, hess_;
};

}  // namespace

TEST_CASE("min x^2 with a lower bound lands on the bound") {
    ProblemBuilder b;
    int x = b.add_var("x", 1.0, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.0);
    auto p = b.build();
    auto res = nlp::solve(*p, {3.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(res.objective == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("equality-constrained projection problem") {
    //   min (x-2)^2 + (y-1)^2  s.t.  x + y = 2   ->  (1.5, 0.5)
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    int y = b.add_var("y", -1e20, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.0);
    b.add_lin(ProblemBuilder::kObjective, x, -4.0);
    b.add_quad(ProblemBuilder::kObjective, y, 1.0);
    b.add_lin(ProblemBuilder::kObjective, y, -2.0);
    b.add_const(ProblemBuilder::kObjective, 5.0);
    int r = b.add_row("sum", RowKind::Equality);
    b.add_lin(r, x, 1.0);
    b.add_lin(r, y, 1.0);
    b.add_const(r, -2.0);
    auto p = b.build();
    auto res = nlp::solve(*p, {0.0, 0.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(res.primal[1] == doctest::Approx(0.5).epsilon(1e-8));
    CHECK(res.kkt.max() <= 1e-8);
}

TEST_CASE("active inequality") {
    //   min x^2 + y^2  s.t.  2 - x - y <= 0  ->  (1, 1)
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    int y = b.add_var("y", -1e20, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.0);
    b.add_quad(ProblemBuilder::kObjective, y, 1.0);
    int r = b.add_row("cover", RowKind::Inequality);
    b.add_lin(r, x, -1.0);
    b.add_lin(r, y, -1.0);
    b.add_const(r, 2.0);
    auto p = b.build();
    auto res = nlp::solve(*p, {0.0, 0.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(res.primal[1] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("inactive inequality stays inactive") {
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.0);
    b.add_lin(ProblemBuilder::kObjective, x, -2.0);
    int r = b.add_row("roof", RowKind::Inequality);
    b.add_lin(r, x, 1.0);
    b.add_const(r, -100.0);
    auto p = b.build();
    auto res = nlp::solve(*p, {50.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("classic quartic benchmark reaches the known optimum") {
    QuarticProblem p;
    auto res = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.objective == doctest::Approx(17.0140173).epsilon(1e-6));
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(res.primal[1] == doctest::Approx(4.7429994).epsilon(1e-4));
    CHECK(res.primal[2] == doctest::Approx(3.8211503).epsilon(1e-4));
    CHECK(res.primal[3] == doctest::Approx(1.3794082).epsilon(1e-4));
    CHECK(res.kkt.max() <= 1e-8);
}

TEST_CASE("convex QP matches the analytic KKT solution") {
    //   min 0.5*(3x^2 + 2y^2) + x*y - 4x - 3y   s.t.  x + 2y = 4
    // Analytic KKT (3x+y+l=4, x+2y+2l=3, x+2y=4) gives x=1, y=3/2, l=-1/2.
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    int y = b.add_var("y", -1e20, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.5);
    b.add_quad(ProblemBuilder::kObjective, y, 1.0);
    b.add_bilin(ProblemBuilder::kObjective, x, y, 1.0);
    b.add_lin(ProblemBuilder::kObjective, x, -4.0);
    b.add_lin(ProblemBuilder::kObjective, y, -3.0);
    int r = b.add_row("plane", RowKind::Equality);
    b.add_lin(r, x, 1.0);
    b.add_lin(r, y, 2.0);
    b.add_const(r, -4.0);
    auto p = b.build();
    auto res = nlp::solve(*p, {0.0, 0.0}, tight());
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(res.primal[1] == doctest::Approx(1.5).epsilon(1e-8));
    CHECK(res.duals_constraints[0] == doctest::Approx(-0.5).epsilon(1e-7));
}

TEST_CASE("inconsistent inequalities are reported infeasible") {
    //   x <= -1 and x >= 1 cannot hold together.
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    b.add_quad(ProblemBuilder::kObjective, x, 1.0);
    int r1 = b.add_row("below", RowKind::Inequality);
    b.add_lin(r1, x, 1.0);
    b.add_const(r1, 1.0);  // x + 1 <= 0
    int r2 = b.add_row("above", RowKind::Inequality);
    b.add_lin(r2, x, -1.0);
    b.add_const(r2, 1.0);  // 1 - x <= 0
    auto p = b.build();
    auto res = nlp::solve(*p, {0.0}, tight());
    CHECK(res.status == SolveStatus::Infeasible);
}

TEST_CASE("bfgs fallback solves a smooth problem") {
    ProblemBuilder b;
    int x = b.add_var("x", -1e20, 1e20);
    int y = b.add_var("y", -1e20, 1e20);
    // min (x-1)^2 + 10*(y-x)^2 (builder terms; exact Hessian unused in BFGS mode)
    b.add_quad(ProblemBuilder::kObjective, x, 11.0);
    b.add_lin(ProblemBuilder::kObjective, x, -2.0);
    b.add_quad(ProblemBuilder::kObjective, y, 10.0);
    b.add_bilin(ProblemBuilder::kObjective, x, y, -20.0);
    b.add_const(ProblemBuilder::kObjective, 1.0);
    auto p = b.build();
    nlp::SolverOptions o = tight();
    o.tol_kkt = 1e-6;  // quasi-Newton debug mode, not a tight-accuracy path
    o.hessian = nlp::HessianMode::Bfgs;
    o.max_iter = 500;
    auto res = nlp::solve(*p, {-1.0, 2.0}, o);
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.primal[0] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(res.primal[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("repeated solves are bitwise identical") {
    QuarticProblem p;
    auto r1 = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, tight());
    auto r2 = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, tight());
    REQUIRE(r1.status == SolveStatus::Optimal);
    CHECK(r1.iterations == r2.iterations);
    CHECK(r1.primal == r2.primal);
    CHECK(r1.duals_constraints == r2.duals_constraints);
}

TEST_CASE("dense and sparse linear paths agree") {
    QuarticProblem p;
    nlp::SolverOptions dense = tight();
    dense.linear_solver = nlp::LinearSolverKind::DenseLdl;
    nlp::SolverOptions sparse = tight();
    sparse.linear_solver = nlp::LinearSolverKind::SparseLdl;
    auto rd = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, dense);
    auto rs = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, sparse);
    REQUIRE(rd.status == SolveStatus::Optimal);
    REQUIRE(rs.status == SolveStatus::Optimal);
    CHECK(rd.objective == doctest::Approx(rs.objective).epsilon(1e-9));
}

TEST_CASE("problem callbacks are safe for concurrent solves") {
    QuarticProblem p;
    nlp::SolveResult r1, r2;
    std::thread t1([&] { r1 = nlp::solve(p, {1.0, 5.0, 5.0, 1.0}, tight()); });
    std::thread t2([&] { r2 = nlp::solve(p, {2.0, 4.0, 4.0, 2.0}, tight()); });
    t1.join();
    t2.join();
    REQUIRE(r1.status == SolveStatus::Optimal);
    REQUIRE(r2.status == SolveStatus::Optimal);
    CHECK(r1.objective == doctest::Approx(r2.objective).epsilon(1e-7));
}

TEST_CASE("random convex QPs match their analytic KKT solutions") {
    // min 0.5 x'Qx + c'x  s.t. Ax = b with Q spd: the KKT system
    // [Q A'; A 0] (x, y) = (-c, b) is linear; compare against a dense solve.
    std::mt19937 rng(424242u);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 4 + trial % 3;
        const int m = 1 + trial % 2;
        Eigen::MatrixXd M(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) M(i, j) = u(rng);
        }
        Eigen::MatrixXd Q = M.transpose() * M + Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd c(n), b(m);
        Eigen::MatrixXd A(m, n);
        for (int i = 0; i < n; ++i) c[i] = u(rng);
        for (int i = 0; i < m; ++i) {
            b[i] = u(rng);
            for (int j = 0; j < n; ++j) A(i, j) = u(rng);
        }

        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + m, n + m);
        K.topLeftCorner(n, n) = Q;
        K.topRightCorner(n, m) = A.transpose();
        K.bottomLeftCorner(m, n) = A;
        Eigen::VectorXd rhs(n + m);
        rhs.head(n) = -c;
        rhs.tail(m) = b;
        Eigen::VectorXd exact = K.fullPivLu().solve(rhs);

        ProblemBuilder builder;
        for (int i = 0; i < n; ++i) builder.add_var("x" + std::to_string(i), -1e20, 1e20);
        for (int i = 0; i < n; ++i) {
            builder.add_quad(ProblemBuilder::kObjective, i, 0.5 * Q(i, i));
            builder.add_lin(ProblemBuilder::kObjective, i, c[i]);
            for (int j = 0; j < i; ++j) {
                builder.add_bilin(ProblemBuilder::kObjective, i, j, Q(i, j));
            }
        }
        for (int i = 0; i < m; ++i) {
            int r = builder.add_row("a" + std::to_string(i), RowKind::Equality);
            for (int j = 0; j < n; ++j) builder.add_lin(r, j, A(i, j));
            builder.add_const(r, -b[i]);
        }
        auto p = builder.build();
        auto res = nlp::solve(*p, std::vector<double>(n, 0.0), tight());
        REQUIRE(res.status == SolveStatus::Optimal);
        for (int i = 0; i < n; ++i) {
            CHECK(res.primal[i] == doctest::Approx(exact[i]).epsilon(1e-8).scale(1.0));
        }
    }
}
