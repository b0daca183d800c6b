#include <doctest.h>

#include <cmath>
#include <random>

#include "mcopf/formulation/build.hpp"
#include "mcopf/nlp/derivative_check.hpp"
#include "mcopf/nlp/solver.hpp"
#include "mcopf/oracle/audit.hpp"
#include "mcopf/solution.hpp"
#include "test_helpers.hpp"

using namespace mcopf;
using formulation::build_balanced;
using formulation::build_mcdc;
using formulation::BuiltProblem;

namespace {

int find_row(const formulation::TermProblem& p, const std::string& name) {
    for (int i = 0; i < p.num_rows(); ++i) {
        if (p.row_name(i) == name) return i;
    }
    FAIL("row not found: ", name);
    return -1;
}

Network asym_variant() {
    Network n = mcopf::testing::bipolar_link();
    n.converters[1].configuration = ConverterConfig::AsymMonopoleNegative;
    n.converters[1].poles = {n.converters[1].poles[1]};
    n.dc_buses[1].terminals = {DcTerminal::Negative, DcTerminal::Neutral};
    n.dc_branches[0].conductors.erase(DcTerminal::Positive);
    // the remaining station must also fit a pole-less positive network
    n.converters[0].configuration = ConverterConfig::AsymMonopoleNegative;
    n.converters[0].poles = {n.converters[0].poles[1]};
    n.dc_buses[0].terminals = {DcTerminal::Negative, DcTerminal::Neutral};
    return n;
}

Network sym_variant() {
    Network n = mcopf::testing::bipolar_link();
    for (auto& conv : n.converters) {
        conv.configuration = ConverterConfig::SymMonopole;
        conv.grounding = {Grounding::Kind::None, 0.0};
    }
    for (auto& bus : n.dc_buses) {
        bus.terminals = {DcTerminal::Positive, DcTerminal::Negative};
    }
    n.dc_branches[0].conductors.erase(DcTerminal::Neutral);
    // a reference is still needed: pin one pole pair via equal bounds
    n.dc_buses[0].vmin_pole = n.dc_buses[0].vmax_pole = 1.0;
    return n;
}

}  // namespace

TEST_CASE("variable and row census matches the built problems") {
    auto check = [](const Network& net) {
        REQUIRE(validate(net).empty());
        BuiltProblem built = build_mcdc(net);
        auto census = formulation::census_mcdc(net);
        CHECK(built.problem->num_vars() == census.vars);
        CHECK(built.problem->num_rows() == census.rows());
        CHECK(built.problem->num_equalities() == census.eq_rows);
        CHECK(built.problem->num_inequalities() == census.ineq_rows);
    };
    check(mcopf::testing::two_bus_ac());
    check(mcopf::testing::bipolar_link());
    check(asym_variant());
    check(sym_variant());
    {
        // bipolar link with a dc load tapped on the positive pole
        Network n = mcopf::testing::bipolar_link();
        n.loads.push_back({"dld", DcAttachment{"dc2", DcTerminal::Positive}, 0.05, 0.0});
        check(n);
    }
    {
        // balanced build census over the aggregated view
        Network n = mcopf::testing::bipolar_link();
        BuiltProblem built = build_balanced(n);
        auto census = formulation::census_balanced(
            derive_balanced_equivalent(n).network);
        CHECK(built.problem->num_vars() == census.vars);
        CHECK(built.problem->num_rows() == census.rows());
    }
}

TEST_CASE("network with no DC part builds a pure AC OPF") {
    Network n = mcopf::testing::two_bus_ac();
    BuiltProblem built = build_mcdc(n);
    for (int r = 0; r < built.problem->num_rows(); ++r) {
        const std::string name = built.problem->row_name(r);
        CHECK(name.find("dc") == std::string::npos);
        CHECK(name.find("kcl(") == std::string::npos);  // dc kcl rows are "kcl(bus:term)"
    }
    CHECK(built.map.dc_terminal.empty());
}

TEST_CASE("asym monopole instantiates only its pole") {
    Network n = asym_variant();
    BuiltProblem built = build_mcdc(n);
    const auto& conv = built.map.converter[1];
    REQUIRE(conv.poles.size() == 1);
    CHECK(n.converters[1].poles[0].pole == PoleKind::Negative);
    CHECK(conv.i_neutral >= 0);
    // no positive-pole variables anywhere for converter c2
    for (int v = 0; v < built.problem->num_vars(); ++v) {
        CHECK(built.problem->var_name(v).find("c2:p") == std::string::npos);
    }
}

TEST_CASE("analytic points satisfy each equation family") {
    Network n = mcopf::testing::bipolar_link();
    BuiltProblem built = build_mcdc(n);
    const auto& map = built.map;
    const auto& p = *built.problem;
    std::vector<double> x(p.num_vars(), 0.0);
    std::vector<double> c(p.num_rows(), 0.0);

    // transformer at th_i = th_f, t = 1, equal magnitudes: zero flow
    const auto& pole = map.converter[0].poles[0];
    x[map.ac_bus[0].vm] = 1.0;
    x[map.ac_bus[0].va] = 0.0;
    x[pole.u_f] = 1.0;
    x[pole.th_f] = 0.0;
    x[pole.p_tf_from] = 0.0;
    x[pole.q_tf_from] = 0.0;
    p.constraints(x, c);
    CHECK(std::abs(c[find_row(p, "tfp(c1:p:fwd)")]) <= 1e-12);
    CHECK(std::abs(c[find_row(p, "tfq(c1:p:fwd)")]) <= 1e-12);

    // transformer at a generic point: flow variables set to the hand formula
    {
        const auto& tf = n.converters[0].poles[0].transformer;
        const double vi = 1.03, thi = 0.07, vf = 0.99, thf = -0.02;
        x[map.ac_bus[0].vm] = vi;
        x[map.ac_bus[0].va] = thi;
        x[pole.u_f] = vf;
        x[pole.th_f] = thf;
        const double vt = vi / tf.tap;
        const double d = thi - thf;
        x[pole.p_tf_from] =
            tf.g * vt * vt - tf.g * vt * vf * std::cos(d) - tf.b * vt * vf * std::sin(d);
        x[pole.q_tf_from] =
            -tf.b * vt * vt + tf.b * vt * vf * std::cos(d) - tf.g * vt * vf * std::sin(d);
        p.constraints(x, c);
        CHECK(std::abs(c[find_row(p, "tfp(c1:p:fwd)")]) <= 1e-12);
        CHECK(std::abs(c[find_row(p, "tfq(c1:p:fwd)")]) <= 1e-12);
    }

    // Ohm's law on the positive conductor
    {
        const auto& cond = map.dc_branch[0][0];
        x[map.dc_voltage(0, DcTerminal::Positive)] = 1.05;
        x[map.dc_voltage(1, DcTerminal::Positive)] = 1.01;
        x[cond.i_from] = (1.05 - 1.01) / 0.01;
        x[cond.i_to] = -x[cond.i_from];
        p.constraints(x, c);
        CHECK(std::abs(c[find_row(p, "ohm(dl1:positive)")]) <= 1e-12);
        CHECK(std::abs(c[find_row(p, "antisym(dl1:positive)")]) <= 1e-12);
    }

    // loss polynomial balance with a zero neutral term
    {
        const auto& cp = n.converters[0].poles[0];
        x[pole.i_ac] = 0.5;
        const double loss = cp.loss_a + cp.loss_b * 0.5 + cp.loss_c * 0.25;
        x[pole.p_ac] = loss;
        x[pole.p_dc] = 0.0;
        x[map.dc_voltage(0, DcTerminal::Neutral)] = 0.0;
        x[pole.i_dc_neutral] = 0.3;  // u0 = 0 kills the product
        p.constraints(x, c);
        CHECK(std::abs(c[find_row(p, "loss(c1:p)")]) <= 1e-12);
    }

    // filter balance
    {
        const auto& cp = n.converters[0].poles[0];
        x[pole.u_f] = 1.02;
        x[pole.q_tf_to] = 0.2;
        x[pole.q_pr_from] = cp.filter_b * 1.02 * 1.02 - 0.2;
        x[pole.p_tf_to] = 0.1;
        x[pole.p_pr_from] = -0.1;
        p.constraints(x, c);
        CHECK(std::abs(c[find_row(p, "filtp(c1:p)")]) <= 1e-12);
        CHECK(std::abs(c[find_row(p, "filtq(c1:p)")]) <= 1e-12);
    }

    // ac nodal balance: single generator feeding one load through shunts
    {
        Network m = mcopf::testing::two_bus_ac();
        m.ac_buses[0].gshunt = 0.02;
        BuiltProblem b2 = build_mcdc(m);
        std::vector<double> x2(b2.problem->num_vars(), 0.0);
        std::vector<double> c2(b2.problem->num_rows(), 0.0);
        const auto& mp = b2.map;
        x2[mp.ac_bus[0].vm] = 1.0;
        x2[mp.ac_branch[0].p_from] = 0.4;
        x2[mp.ac_branch[0].q_from] = 0.1;
        x2[mp.gen[0].p] = 0.4 + 0.02;  // branch flow plus shunt draw
        x2[mp.gen[0].q] = 0.1;
        b2.problem->constraints(x2, c2);
        CHECK(std::abs(c2[find_row(*b2.problem, "kclp(b1)")]) <= 1e-12);
        CHECK(std::abs(c2[find_row(*b2.problem, "kclq(b1)")]) <= 1e-12);
    }
}

TEST_CASE("flat start is strictly interior and pins empty intervals") {
    Network n = mcopf::testing::bipolar_link();
    n.ac_buses[0].vmin = n.ac_buses[0].vmax = 1.0;  // pinned bus
    BuiltProblem built = build_mcdc(n);
    auto fs = formulation::flat_start(built.map, *built.problem);
    const auto& lb = built.problem->lower_bounds();
    const auto& ub = built.problem->upper_bounds();
    bool pinned_found = false;
    for (int i = 0; i < built.problem->num_vars(); ++i) {
        const bool pinned =
            std::find(fs.pinned.begin(), fs.pinned.end(), i) != fs.pinned.end();
        if (pinned) {
            pinned_found = true;
            CHECK(fs.point[i] == doctest::Approx(lb[i]));
        } else {
            CHECK(fs.point[i] > lb[i]);
            CHECK(fs.point[i] < ub[i]);
        }
    }
    CHECK(pinned_found);
}

TEST_CASE("jacobian matches finite differences at random interior points") {
    Network n = mcopf::testing::bipolar_link();
    BuiltProblem built = build_mcdc(n);
    auto fs = formulation::flat_start(built.map, *built.problem);

    std::mt19937 rng(20240811u);
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    for (int trial = 0; trial < 3; ++trial) {
        std::vector<double> x = fs.point;
        for (auto& v : x) v += jitter(rng);
        auto report = nlp::check_derivatives(*built.problem, x, 1e-6);
        CHECK(report.pattern_ok);
        CHECK(report.max_gradient_error <= 1e-6);
        CHECK(report.max_jacobian_error <= 1e-6);
        CHECK(report.max_hessian_error <= 1e-5);
    }
}

TEST_CASE("balanced bipolar link solves, audits clean, and matches the balanced model") {
    Network n = mcopf::testing::bipolar_link();
    nlp::SolverOptions opts;
    opts.tol_kkt = 1e-8;

    BuiltProblem mc = build_mcdc(n);
    auto start = formulation::flat_start(mc.map, *mc.problem);
    auto res = nlp::solve(*mc.problem, start.point, opts);
    REQUIRE(res.status == nlp::SolveStatus::Optimal);
    Solution sol = extract_solution(mc.map, n, res);

    auto report = oracle::audit(n, sol, 1e-6);
    if (report.flag_count() != 0) {
        MESSAGE(report.to_table(true));
    }
    CHECK(report.flag_count() == 0);

    // balanced network: zero neutral voltage, symmetric poles
    for (const auto& t : sol.dc_terminals) {
        if (t.terminal == DcTerminal::Neutral) {
            CHECK(std::abs(t.voltage) <= 1e-6);
        }
    }
    for (const auto& conv : sol.converters) {
        REQUIRE(conv.poles.size() == 2);
        CHECK(conv.poles[0].p_ac == doctest::Approx(conv.poles[1].p_ac).epsilon(1e-6));
        CHECK(std::abs(conv.i_neutral) <= 1e-6);
    }

    BuiltProblem bal = build_balanced(n);
    auto bstart = formulation::flat_start(bal.map, *bal.problem);
    auto bres = nlp::solve(*bal.problem, bstart.point, opts);
    REQUIRE(bres.status == nlp::SolveStatus::Optimal);
    CHECK(std::abs(res.objective - bres.objective) /
              std::max(1.0, std::abs(bres.objective)) <= 1e-6);

    Solution bsol = extract_solution(bal.map, bal.balanced_source->network, bres);
    auto breport = oracle::audit(bal.balanced_source->network, bsol, 1e-6);
    CHECK(breport.flag_count() == 0);

    // pole powers are half of the lumped station power
    for (std::size_t ci = 0; ci < sol.converters.size(); ++ci) {
        const double lumped = bsol.converters[ci].poles[0].p_ac;
        CHECK(sol.converters[ci].poles[0].p_ac == doctest::Approx(lumped / 2).epsilon(2e-6));
    }
}

TEST_CASE("asym monopole station: neutral current mirrors the pole current") {
    Network n = asym_variant();
    REQUIRE(validate(n).empty());
    BuiltProblem mc = build_mcdc(n);
    auto start = formulation::flat_start(mc.map, *mc.problem);
    nlp::SolverOptions opts;
    auto res = nlp::solve(*mc.problem, start.point, opts);
    REQUIRE(res.status == nlp::SolveStatus::Optimal);
    Solution sol = extract_solution(mc.map, n, res);
    auto report = oracle::audit(n, sol, 1e-6);
    CHECK(report.flag_count() == 0);
    for (const auto& conv : sol.converters) {
        CHECK(conv.i_neutral ==
              doctest::Approx(-conv.poles[0].i_dc).epsilon(1e-6).scale(1.0));
    }
}

TEST_CASE("variable map indices form a bijection onto the problem variables") {
    auto check = [](const formulation::BuiltProblem& built) {
        std::vector<int> seen(built.problem->num_vars(), 0);
        auto mark = [&](int idx) {
            if (idx < 0) return;
            REQUIRE(idx < built.problem->num_vars());
            seen[idx]++;
        };
        const auto& m = built.map;
        for (const auto& b : m.ac_bus) {
            mark(b.vm);
            mark(b.va);
        }
        for (const auto& b : m.ac_branch) {
            mark(b.p_from);
            mark(b.q_from);
            mark(b.p_to);
            mark(b.q_to);
        }
        for (const auto& g : m.gen) {
            mark(g.p);
            mark(g.q);
        }
        for (const auto& slots : m.dc_terminal) {
            for (int s : slots) mark(s);
        }
        for (const auto& br : m.dc_branch) {
            for (const auto& c : br) {
                mark(c.i_from);
                mark(c.i_to);
            }
        }
        for (const auto& conv : m.converter) {
            for (const auto& p : conv.poles) {
                mark(p.p_tf_from);
                mark(p.q_tf_from);
                mark(p.p_tf_to);
                mark(p.q_tf_to);
                mark(p.u_f);
                mark(p.th_f);
                mark(p.p_pr_from);
                mark(p.q_pr_from);
                mark(p.p_pr_to);
                mark(p.q_pr_to);
                mark(p.u_cv);
                mark(p.th_cv);
                mark(p.p_ac);
                mark(p.q_ac);
                mark(p.i_ac);
                mark(p.p_dc);
                mark(p.i_dc);
                mark(p.i_dc_neutral);
            }
            mark(conv.i_neutral);
            mark(conv.p_neutral);
            mark(conv.i_ground);
        }
        for (int idx : m.dc_load_current) mark(idx);
        for (int i = 0; i < built.problem->num_vars(); ++i) {
            CHECK(seen[i] == 1);  // every variable named exactly once
        }
    };
    check(build_mcdc(mcopf::testing::bipolar_link()));
    check(build_balanced(mcopf::testing::bipolar_link()));
    Network withload = mcopf::testing::bipolar_link();
    withload.loads.push_back({"dld", DcAttachment{"dc1", DcTerminal::Positive}, 0.05, 0.0});
    check(build_mcdc(withload));
}

TEST_CASE("build_mcdc rejects single-conductor views") {
    Network n = mcopf::testing::bipolar_link();
    auto view = derive_balanced_equivalent(n).network;
    CHECK_THROWS_AS(build_mcdc(view), std::invalid_argument);
}
