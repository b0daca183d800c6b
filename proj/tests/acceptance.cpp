// Acceptance suite: exercises the full pipeline on the bundled cases and
// prints one pass/fail line per criterion. Exits nonzero when any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcopf/case_io.hpp"
#include "mcopf/cli/commands.hpp"
#include "mcopf/formulation/build.hpp"
#include "mcopf/nlp/derivative_check.hpp"
#include "mcopf/nlp/solver.hpp"
#include "mcopf/oracle/audit.hpp"
#include "mcopf/oracle/brute_force.hpp"
#include "mcopf/solution.hpp"
#include "test_helpers.hpp"

using namespace mcopf;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Outcome> g_outcomes;

void record(int id, const std::string& name, bool pass, const std::string& detail) {
    g_outcomes.push_back({id, name, pass, detail});
}

std::string case_path(const std::string& name) {
    return std::string(MCOPF_CASE_DIR) + "/" + name + ".json";
}

struct SolveRun {
    std::string label;
    Network network;  // the network the tables refer to (view for balanced)
    Solution solution;
    double seconds = 0.0;
};

std::vector<SolveRun> g_optimal_runs;  // audited again under criterion 7

SolveRun solve_network(const Network& n, formulation::ModelKind kind, double tol,
                       const std::string& label, int max_iter = 400) {
    SolveRun run;
    run.label = label;
    const auto t0 = std::chrono::steady_clock::now();
    formulation::BuiltProblem built = kind == formulation::ModelKind::MultiConductor
                                          ? formulation::build_mcdc(n)
                                          : formulation::build_balanced(n);
    auto fs0 = formulation::flat_start(built.map, *built.problem);
    nlp::SolverOptions o;
    o.tol_kkt = tol;
    o.max_iter = max_iter;
    auto res = nlp::solve(*built.problem, fs0.point, o);
    run.network =
        kind == formulation::ModelKind::MultiConductor ? n : built.balanced_source->network;
    run.solution = extract_solution(built.map, run.network, res);
    run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (run.solution.status == nlp::SolveStatus::Optimal) {
        g_optimal_runs.push_back(run);
    }
    return run;
}

std::string fmtd(double v, const char* spec = "%.3e") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

// ---------------------------------------------------------------------------

void criterion1_balanced_equivalence() {
    Network n = to_network(load_case(case_path("balanced_bipolar_4dc")));
    SolveRun mc = solve_network(n, formulation::ModelKind::MultiConductor, 1e-8, "c1 mcdc");
    SolveRun bal = solve_network(n, formulation::ModelKind::Balanced, 1e-8, "c1 balanced");
    const double runtime = mc.seconds + bal.seconds;

    bool pass = mc.solution.status == nlp::SolveStatus::Optimal &&
                bal.solution.status == nlp::SolveStatus::Optimal;
    const double rel = std::abs(mc.solution.objective - bal.solution.objective) /
                       std::max(1e-12, std::abs(bal.solution.objective));
    pass = pass && rel <= 1e-6;

    double max_gen = 0.0;
    for (std::size_t i = 0; i < mc.solution.generators.size(); ++i) {
        max_gen = std::max(max_gen, std::abs(mc.solution.generators[i].p -
                                             bal.solution.generators[i].p));
    }
    pass = pass && max_gen <= 1e-6;

    double max_neutral = 0.0;
    for (const auto& t : mc.solution.dc_terminals) {
        if (t.terminal == DcTerminal::Neutral) max_neutral = std::max(max_neutral,
                                                                      std::abs(t.voltage));
    }
    pass = pass && max_neutral <= 1e-6;

    double max_split = 0.0;
    for (std::size_t ci = 0; ci < mc.solution.converters.size(); ++ci) {
        const double lumped = bal.solution.converters[ci].poles[0].p_ac;
        for (const auto& pole : mc.solution.converters[ci].poles) {
            max_split = std::max(max_split, std::abs(pole.p_ac - lumped / 2.0));
        }
    }
    pass = pass && max_split <= 1e-6;
    pass = pass && runtime <= 5.0;

    record(1, "balanced equivalence",
           pass,
           "obj rel " + fmtd(rel) + ", gen " + fmtd(max_gen) + " pu, neutral " +
               fmtd(max_neutral) + " pu, split " + fmtd(max_split) + " pu, " +
               fmtd(runtime, "%.2f") + " s");
}

void criterion2_embedding_infeasibility() {
    Network n = to_network(load_case(case_path("unbalanced_tap_4dc")));
    SolveRun mc = solve_network(n, formulation::ModelKind::MultiConductor, 1e-8, "c2 mcdc");

    formulation::BuiltProblem forced = formulation::build_balanced(n, /*forced=*/true);
    auto fs0 = formulation::flat_start(forced.map, *forced.problem);
    nlp::SolverOptions o;
    o.tol_kkt = 1e-8;
    auto res = nlp::solve(*forced.problem, fs0.point, o);
    Solution bal = extract_solution(forced.map, forced.balanced_source->network, res);

    Solution embedded = oracle::equal_split_embedding(bal, *forced.balanced_source, n);
    auto embed_report = oracle::audit(n, embedded, 1e-6);
    auto mc_report = oracle::audit(n, mc.solution, 1e-6);

    double tap_kcl = 0.0;
    for (DcTerminal t : kDcTerminals) {
        const double r = embed_report.dc_kcl_residual("dc4", t);
        if (std::isfinite(r)) tap_kcl = std::max(tap_kcl, std::abs(r));
    }
    const bool pass = mc.solution.status == nlp::SolveStatus::Optimal &&
                      res.status == nlp::SolveStatus::Optimal && tap_kcl > 1e-3 &&
                      mc_report.flag_count() == 0;
    record(2, "equal-split embedding infeasibility", pass,
           "tapped-bus KCL residual " + fmtd(tap_kcl) + " pu, mcdc flags " +
               std::to_string(mc_report.flag_count()));
}

void criterion3_loop_flow() {
    Network n = to_network(load_case(case_path("unbalanced_tap_4dc")));
    SolveRun mc = solve_network(n, formulation::ModelKind::MultiConductor, 1e-8, "c3 mcdc");
    bool found = false;
    std::string where;
    for (const auto& conv : mc.solution.converters) {
        if (conv.poles.size() != 2) continue;
        const double a = conv.poles[0].p_ac, b = conv.poles[1].p_ac;
        if (a * b < -1e-8) {
            found = true;
            where = conv.id + " poles " + fmtd(a) + " / " + fmtd(b) + " pu";
        }
    }
    record(3, "loop flow between poles",
           mc.solution.status == nlp::SolveStatus::Optimal && found,
           found ? where : "no converter with opposite-sign pole powers");
}

void criterion4_loss_ordering() {
    Network unbal = to_network(load_case(case_path("unbalanced_tap_4dc")));
    SolveRun mc = solve_network(unbal, formulation::ModelKind::MultiConductor, 1e-8, "c4 mcdc");

    // Balanced counterpart with identical loads: the single-conductor view of
    // the same network (net-transfer equivalent, no imbalance losses).
    formulation::BuiltProblem forced = formulation::build_balanced(unbal, /*forced=*/true);
    auto fs0 = formulation::flat_start(forced.map, *forced.problem);
    nlp::SolverOptions o;
    o.tol_kkt = 1e-8;
    auto res = nlp::solve(*forced.problem, fs0.point, o);

    bool pass = mc.solution.status == nlp::SolveStatus::Optimal &&
                res.status == nlp::SolveStatus::Optimal &&
                mc.solution.objective >= res.objective - 1e-9;
    std::string detail = "unbalanced " + fmtd(mc.solution.objective, "%.6f") +
                         " >= balanced-view " + fmtd(res.objective, "%.6f");

    // Single-pole outages of the heaviest station on the balanced case.
    Network base = to_network(load_case(case_path("balanced_bipolar_4dc")));
    SolveRun intact = solve_network(base, formulation::ModelKind::MultiConductor, 1e-8,
                                    "c4 intact");
    pass = pass && intact.solution.status == nlp::SolveStatus::Optimal;
    for (PoleKind out_pole : {PoleKind::Positive, PoleKind::Negative}) {
        Network variant = base;
        auto& conv = variant.converters[0];
        conv.configuration = out_pole == PoleKind::Positive
                                 ? ConverterConfig::AsymMonopoleNegative
                                 : ConverterConfig::AsymMonopolePositive;
        std::vector<ConverterPole> keep;
        for (const auto& p : conv.poles) {
            if (p.pole != out_pole) keep.push_back(p);
        }
        conv.poles = keep;
        SolveRun v = solve_network(variant, formulation::ModelKind::MultiConductor, 1e-8,
                                   std::string("c4 outage ") + to_string(out_pole));
        const bool strictly_greater =
            v.solution.status == nlp::SolveStatus::Optimal &&
            v.solution.objective > intact.solution.objective + 1e-6;
        pass = pass && strictly_greater;
        detail += std::string("; c1 ") + to_string(out_pole) + " outage +" +
                  fmtd(v.solution.objective - intact.solution.objective, "%.4f");
    }
    record(4, "loss ordering under unbalance and pole outages", pass, detail);
}

void criterion5_neutral_limit_sweep() {
    CaseFile cf = load_case(case_path("sweep_base"));
    Network base = to_network(cf);
    const double tol = cf.options.tol_kkt;

    struct Step {
        double load;
        bool ok;
        std::vector<std::pair<std::string, double>> neutrals;
        double pg5;
    };
    std::vector<Step> steps;
    for (double load = 0.05; load <= 0.5 + 1e-9; load += 0.05) {
        Network n = base;
        for (auto& l : n.loads) {
            if (l.id == "d7") l.p = load;
        }
        SolveRun run = solve_network(n, formulation::ModelKind::MultiConductor, tol,
                                     "c5 load " + fmtd(load, "%.2f"));
        Step s;
        s.load = load;
        s.ok = run.solution.status == nlp::SolveStatus::Optimal;
        if (s.ok) {
            for (const auto& t : run.solution.dc_terminals) {
                if (t.terminal == DcTerminal::Neutral) s.neutrals.push_back({t.bus, t.voltage});
            }
            s.pg5 = run.solution.find_generator("g5")->p;
        }
        steps.push_back(s);
    }

    bool all_ok = true;
    for (const auto& s : steps) all_ok = all_ok && s.ok;

    const double limit = 0.1;
    auto binding_buses = [&](const Step& s) {
        std::vector<std::string> out;
        for (const auto& [bus, v] : s.neutrals) {
            if (limit - std::abs(v) <= 1e-6) out.push_back(bus);
        }
        return out;
    };

    int first_bind = -1, second_bind = -1;
    std::string first_bus;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        auto b = binding_buses(steps[i]);
        if (first_bind < 0 && !b.empty()) {
            first_bind = static_cast<int>(i);
            first_bus = b.front();
        }
        if (first_bind >= 0 && second_bind < 0) {
            for (const auto& bus : b) {
                if (bus != first_bus) second_bind = static_cast<int>(i);
            }
        }
    }

    bool pass = all_ok && first_bind >= 0 && second_bind >= 0 && second_bind > first_bind;
    std::string detail;
    if (pass) {
        // strictly increasing expensive-generator output after the first bind
        for (std::size_t i = first_bind + 1; i < steps.size(); ++i) {
            pass = pass && steps[i].pg5 > steps[i - 1].pg5 + 1e-6;
        }
        // larger per-step increment once the second bound binds
        const double inc_at_second =
            steps[second_bind].pg5 - steps[second_bind - 1].pg5;
        for (std::size_t i = second_bind + 1; i < steps.size(); ++i) {
            pass = pass && steps[i].pg5 - steps[i - 1].pg5 > inc_at_second + 1e-6;
        }
        double inc_after = 0.0;
        if (static_cast<std::size_t>(second_bind) + 1 < steps.size()) {
            inc_after = steps[second_bind + 1].pg5 - steps[second_bind].pg5;
        }
        detail = "first bind at " + fmtd(steps[first_bind].load, "%.2f") + " pu (" + first_bus +
                 "), second at " + fmtd(steps[second_bind].load, "%.2f") +
                 " pu; pg5 increments " + fmtd(inc_at_second, "%.4f") + " then " +
                 fmtd(inc_after, "%.4f");
    } else {
        detail = all_ok ? "binding structure not found" : "a sweep step failed to converge";
    }
    record(5, "neutral-limit sweep with two breakpoints", pass, detail);
}

void criterion6_solver_correctness() {
    bool pass = true;
    std::string detail;

    // (a) derivatives on the bundled cases at 10 random interior points each
    double max_fd = 0.0;
    std::mt19937 rng(20260810u);
    for (const char* name : {"balanced_bipolar_4dc", "unbalanced_tap_4dc", "sweep_base"}) {
        Network n = to_network(load_case(case_path(name)));
        auto built = formulation::build_mcdc(n);
        auto fs0 = formulation::flat_start(built.map, *built.problem);
        const auto& lb = built.problem->lower_bounds();
        const auto& ub = built.problem->upper_bounds();
        std::uniform_real_distribution<double> jitter(-0.05, 0.05);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<double> x = fs0.point;
            for (int i = 0; i < built.problem->num_vars(); ++i) {
                x[i] += jitter(rng);
                const double lo = lb[i] > -1e19 ? lb[i] + 1e-5 : -1e19;
                const double hi = ub[i] < 1e19 ? ub[i] - 1e-5 : 1e19;
                x[i] = std::min(std::max(x[i], lo), hi);
            }
            auto report = nlp::check_derivatives(*built.problem, x, 1e-6);
            max_fd = std::max(max_fd,
                              std::max(report.max_gradient_error, report.max_jacobian_error));
            pass = pass && report.pattern_ok;
        }
    }
    pass = pass && max_fd <= 1e-6;
    detail = "max FD error " + fmtd(max_fd);

    // (b) textbook problems against analytic optima
    {
        formulation::ProblemBuilder b;
        int x = b.add_var("x", 1.0, 1e20);
        b.add_quad(formulation::ProblemBuilder::kObjective, x, 1.0);
        auto p = b.build();
        nlp::SolverOptions o;
        auto r = nlp::solve(*p, {3.0}, o);
        pass = pass && r.status == nlp::SolveStatus::Optimal &&
               std::abs(r.objective - 1.0) <= 1e-6 && r.kkt.max() <= 1e-8;
    }
    {
        formulation::ProblemBuilder b;
        int x = b.add_var("x", -1e20, 1e20);
        int y = b.add_var("y", -1e20, 1e20);
        b.add_quad(formulation::ProblemBuilder::kObjective, x, 1.0);
        b.add_lin(formulation::ProblemBuilder::kObjective, x, -4.0);
        b.add_quad(formulation::ProblemBuilder::kObjective, y, 1.0);
        b.add_lin(formulation::ProblemBuilder::kObjective, y, -2.0);
        b.add_const(formulation::ProblemBuilder::kObjective, 5.0);
        int r0 = b.add_row("sum", nlp::RowKind::Equality);
        b.add_lin(r0, x, 1.0);
        b.add_lin(r0, y, 1.0);
        b.add_const(r0, -2.0);
        auto p = b.build();
        nlp::SolverOptions o;
        auto r = nlp::solve(*p, {0.0, 0.0}, o);
        pass = pass && r.status == nlp::SolveStatus::Optimal &&
               std::abs(r.primal[0] - 1.5) <= 1e-7 && std::abs(r.primal[1] - 0.5) <= 1e-7 &&
               r.kkt.max() <= 1e-8;
    }

    // (c) brute force vs IPM on the two toys
    {
        Network toy = testing::two_bus_ac(true);
        auto bf = oracle::brute_force_small_opf(toy, 0.01);
        auto built = formulation::build_mcdc(toy);
        auto fs0 = formulation::flat_start(built.map, *built.problem);
        nlp::SolverOptions o;
        auto r = nlp::solve(*built.problem, fs0.point, o);
        pass = pass && r.status == nlp::SolveStatus::Optimal && bf.cost >= r.objective - 1e-6 &&
               bf.cost - r.objective <= 0.05;
        detail += "; ac toy gap " + fmtd(bf.cost - r.objective);
    }
    {
        Network toy = testing::monopole_link_toy();
        auto bf = oracle::brute_force_small_opf(toy, 0.02);
        auto built = formulation::build_mcdc(toy);
        auto fs0 = formulation::flat_start(built.map, *built.problem);
        nlp::SolverOptions o;
        auto r = nlp::solve(*built.problem, fs0.point, o);
        pass = pass && r.status == nlp::SolveStatus::Optimal && bf.cost >= r.objective - 1e-6 &&
               bf.cost - r.objective <= 0.1;
        detail += ", dc toy gap " + fmtd(bf.cost - r.objective);
    }

    record(6, "solver correctness (derivatives, textbook, brute force)", pass, detail);
}

void criterion7_audit_all_optimal() {
    int audited = 0;
    int clean = 0;
    double worst = 0.0;
    for (const auto& run : g_optimal_runs) {
        auto report = oracle::audit(run.network, run.solution, 1e-6);
        ++audited;
        if (report.flag_count() == 0) ++clean;
        worst = std::max(worst, report.max_abs_residual());
    }
    record(7, "oracle audit of every optimal solve", audited > 0 && audited == clean,
           std::to_string(clean) + "/" + std::to_string(audited) + " clean, worst residual " +
               fmtd(worst));
}

Network synthetic_100bus() {
    Network n;
    const int islands = 10, per = 10;
    const double r = 0.01, x = 0.08;
    const double den = r * r + x * x;
    for (int k = 0; k < islands; ++k) {
        const std::string p = "i" + std::to_string(k) + "b";
        for (int j = 0; j < per; ++j) {
            AcBus bus;
            bus.id = p + std::to_string(j);
            bus.vmin = 0.9;
            bus.vmax = 1.1;
            bus.is_reference = j == 0;
            n.ac_buses.push_back(bus);
        }
        for (int j = 0; j < per; ++j) {
            AcBranch br;
            br.id = "l" + std::to_string(k) + "_" + std::to_string(j);
            br.from_bus = p + std::to_string(j);
            br.to_bus = p + std::to_string((j + 1) % per);
            br.g = r / den;
            br.b = -x / den;
            br.rating = 3.0;
            n.ac_branches.push_back(br);
        }
        AcBranch chord;
        chord.id = "lc" + std::to_string(k);
        chord.from_bus = p + "0";
        chord.to_bus = p + "5";
        chord.g = r / den;
        chord.b = -x / den;
        chord.rating = 3.0;
        n.ac_branches.push_back(chord);

        Generator g1{"g" + std::to_string(k) + "a", p + "0", 0.0, 3.0, -2.0, 2.0,
                     0.0,  10.0 + k,                1.0};
        Generator g2{"g" + std::to_string(k) + "b", p + "5", 0.0, 1.5, -1.0, 1.0,
                     0.0,  25.0 + k,                2.0};
        n.generators.push_back(g1);
        n.generators.push_back(g2);
        for (int j = 1; j < per; j += 2) {
            Load load;
            load.id = "d" + std::to_string(k) + "_" + std::to_string(j);
            load.attachment = AcAttachment{p + std::to_string(j)};
            load.p = 0.35 + 0.02 * k;
            load.q = 0.07;
            n.loads.push_back(load);
        }
    }
    // DC ring joining all islands
    ConverterPole pole;
    pole.pole = PoleKind::Positive;
    pole.smax = 1.0;
    pole.pmin_ac = -1.0;
    pole.pmax_ac = 1.0;
    pole.qmin_ac = -0.5;
    pole.qmax_ac = 0.5;
    pole.pmin_dc = -1.0;
    pole.pmax_dc = 1.0;
    pole.imax_ac = 1.1;
    pole.imin_dc = -1.2;
    pole.imax_dc = 1.2;
    pole.vmin_cv = 0.8;
    pole.vmax_cv = 1.2;
    pole.loss_a = 0.0002;
    pole.loss_b = 0.003;
    pole.loss_c = 0.006;
    pole.transformer = {0.39984006397441024, -19.99200319872051, 1.0};
    pole.filter_b = 0.05;
    pole.reactor = {0.31245117950320264, -24.996094360256212};

    for (int k = 0; k < islands; ++k) {
        DcBus bus;
        bus.id = "dc" + std::to_string(k);
        bus.terminals = {DcTerminal::Positive, DcTerminal::Negative, DcTerminal::Neutral};
        n.dc_buses.push_back(bus);

        DcBranch br;
        br.id = "dlk" + std::to_string(k);
        br.from_bus = "dc" + std::to_string(k);
        br.to_bus = "dc" + std::to_string((k + 1) % islands);
        for (DcTerminal t : kDcTerminals) br.conductors[t] = {0.01, 2.0};
        n.dc_branches.push_back(br);

        ConverterStation conv;
        conv.id = "cv" + std::to_string(k);
        conv.ac_bus = "i" + std::to_string(k) + "b3";
        conv.dc_bus = "dc" + std::to_string(k);
        conv.configuration = ConverterConfig::Bipolar;
        conv.grounding = k == 0 ? Grounding{Grounding::Kind::Rigid, 0.0}
                                : Grounding{Grounding::Kind::Resistive, 10.0};
        ConverterPole neg = pole;
        neg.pole = PoleKind::Negative;
        conv.poles = {pole, neg};
        n.converters.push_back(conv);
    }
    return n;
}

void criterion8_scale() {
    Network small = to_network(load_case(case_path("balanced_bipolar_4dc")));
    SolveRun s = solve_network(small, formulation::ModelKind::MultiConductor, 1e-8, "c8 11-bus");
    bool pass = s.solution.status == nlp::SolveStatus::Optimal && s.seconds < 5.0;

    Network big = synthetic_100bus();
    const auto violations = validate(big);
    pass = pass && violations.empty();
    SolveRun b = solve_network(big, formulation::ModelKind::MultiConductor, 1e-8, "c8 100-bus",
                               600);
    pass = pass && b.solution.status == nlp::SolveStatus::Optimal && b.seconds < 60.0;
    record(8, "scale sanity (11-bus < 5 s, 100-bus < 60 s)", pass,
           "11-bus " + fmtd(s.seconds, "%.2f") + " s, 100-ac-bus/10-dc-bus " +
               fmtd(b.seconds, "%.2f") + " s (" + nlp::to_string(b.solution.status) + ")");
}

void criterion9_determinism() {
    fs::path d1 = fs::temp_directory_path() / "mcopf_acc_det1";
    fs::path d2 = fs::temp_directory_path() / "mcopf_acc_det2";
    fs::remove_all(d1);
    fs::remove_all(d2);
    bool pass = true;
    for (const auto& dir : {d1, d2}) {
        cli::SolveArgs args;
        args.case_path = case_path("unbalanced_tap_4dc");
        args.out_dir = dir.string();
        std::ostringstream so, se;
        pass = pass && cli::cmd_solve(args, so, se) == cli::kExitOk;
    }
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::ostringstream s;
        s << f.rdbuf();
        return s.str();
    };
    int files = 0;
    for (const char* name : {"generators.csv", "ac_buses.csv", "ac_branches.csv",
                             "dc_terminals.csv", "dc_conductors.csv", "converters.csv",
                             "converter_stations.csv"}) {
        ++files;
        pass = pass && slurp(d1 / name) == slurp(d2 / name);
    }
    record(9, "deterministic CSV outputs", pass,
           std::to_string(files) + " CSV tables byte-identical across runs");
}

}  // namespace

int main() {
    criterion1_balanced_equivalence();
    criterion2_embedding_infeasibility();
    criterion3_loop_flow();
    criterion4_loss_ordering();
    criterion5_neutral_limit_sweep();
    criterion6_solver_correctness();
    criterion8_scale();
    criterion9_determinism();
    criterion7_audit_all_optimal();  // audits every optimal solve made above

    std::sort(g_outcomes.begin(), g_outcomes.end(),
              [](const Outcome& a, const Outcome& b) { return a.id < b.id; });
    int failures = 0;
    for (const auto& o : g_outcomes) {
        std::printf("[%s] criterion %d: %s -- %s\n", o.pass ? "PASS" : "FAIL", o.id,
                    o.name.c_str(), o.detail.c_str());
        if (!o.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
