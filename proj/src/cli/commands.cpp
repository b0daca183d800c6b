#include "mcopf/cli/commands.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mcopf/case_io.hpp"
#include "mcopf/errors.hpp"
#include "mcopf/formulation/build.hpp"
#include "mcopf/nlp/solver.hpp"
#include "mcopf/oracle/audit.hpp"
#include "mcopf/solution.hpp"

namespace mcopf::cli {

namespace {

namespace fs = std::filesystem;
using formulation::ModelKind;

std::string fmt(double v, const char* spec = "%.10g") {
    char buf[64];
    std::snprintf(buf, sizeof(buf), spec, v);
    return buf;
}

nlp::SolverOptions solver_options(const CaseFile& c, double tol, int max_iter) {
    nlp::SolverOptions opts;
    opts.tol_kkt = tol > 0.0 ? tol : c.options.tol_kkt;
    opts.max_iter = max_iter > 0 ? max_iter : c.options.max_iter;
    return opts;
}

struct SolveOutput {
    Solution solution;
    const Network* report_network = nullptr;  // network the tables refer to
    std::shared_ptr<const BalancedEquivalent> view;  // balanced solves only
};

SolveOutput run_solve(const Network& network, ModelKind kind, const nlp::SolverOptions& opts,
                      bool forced_view = false) {
    SolveOutput out;
    formulation::BuiltProblem built = kind == ModelKind::MultiConductor
                                          ? formulation::build_mcdc(network)
                                          : formulation::build_balanced(network, forced_view);
    auto start = formulation::flat_start(built.map, *built.problem);
    nlp::SolveResult res = nlp::solve(*built.problem, start.point, opts);
    const Network& report_net =
        kind == ModelKind::MultiConductor ? network : built.balanced_source->network;
    out.solution = extract_solution(built.map, report_net, res);
    out.view = built.balanced_source;
    return out;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    f << content;
}

void write_solution_files(const fs::path& dir, const Solution& s) {
    fs::create_directories(dir);
    write_file(dir / "solution.json", solution_to_json(s));

    std::ostringstream gen;
    gen << "id,p_pu,q_pu\n";
    for (const auto& g : s.generators) {
        gen << g.id << "," << fmt(g.p) << "," << fmt(g.q) << "\n";
    }
    write_file(dir / "generators.csv", gen.str());

    std::ostringstream bus;
    bus << "id,vm_pu,va_rad\n";
    for (const auto& b : s.ac_buses) {
        bus << b.id << "," << fmt(b.vm) << "," << fmt(b.va) << "\n";
    }
    write_file(dir / "ac_buses.csv", bus.str());

    std::ostringstream br;
    br << "id,p_from_pu,q_from_pu,p_to_pu,q_to_pu\n";
    for (const auto& b : s.ac_branches) {
        br << b.id << "," << fmt(b.p_from) << "," << fmt(b.q_from) << "," << fmt(b.p_to) << ","
           << fmt(b.q_to) << "\n";
    }
    write_file(dir / "ac_branches.csv", br.str());

    std::ostringstream dct;
    dct << "bus,terminal,voltage_pu\n";
    for (const auto& t : s.dc_terminals) {
        dct << t.bus << "," << to_string(t.terminal) << "," << fmt(t.voltage) << "\n";
    }
    write_file(dir / "dc_terminals.csv", dct.str());

    std::ostringstream dcc;
    dcc << "branch,terminal,i_from_pu,i_to_pu,loss_pu\n";
    for (const auto& c : s.dc_conductors) {
        dcc << c.branch << "," << to_string(c.terminal) << "," << fmt(c.i_from) << ","
            << fmt(c.i_to) << "," << fmt(c.loss) << "\n";
    }
    write_file(dir / "dc_conductors.csv", dcc.str());

    std::ostringstream cv;
    cv << "converter,pole,p_grid_pu,q_grid_pu,p_ac_pu,q_ac_pu,i_ac_pu,u_f_pu,u_cv_pu,p_dc_pu,"
          "i_dc_pu,i_dc_neutral_pu,loss_pu\n";
    for (const auto& c : s.converters) {
        for (const auto& p : c.poles) {
            cv << c.id << "," << to_string(p.pole) << "," << fmt(p.p_grid) << ","
               << fmt(p.q_grid) << "," << fmt(p.p_ac) << "," << fmt(p.q_ac) << ","
               << fmt(p.i_ac) << "," << fmt(p.u_f) << "," << fmt(p.u_cv) << "," << fmt(p.p_dc)
               << "," << fmt(p.i_dc) << "," << fmt(p.i_dc_neutral) << "," << fmt(p.loss) << "\n";
        }
    }
    write_file(dir / "converters.csv", cv.str());

    std::ostringstream st;
    st << "converter,i_neutral_pu,p_neutral_pu,i_ground_pu\n";
    for (const auto& c : s.converters) {
        st << c.id << "," << fmt(c.i_neutral) << "," << fmt(c.p_neutral) << ","
           << fmt(c.i_ground) << "\n";
    }
    write_file(dir / "converter_stations.csv", st.str());
}

void print_human_summary(std::ostream& out, const Solution& s, double base_mva) {
    out << "status:     " << nlp::to_string(s.status) << "\n";
    out << "objective:  " << fmt(s.objective, "%.6f") << " $/h\n";
    out << "iterations: " << s.iterations << "\n";
    out << "time:       " << fmt(s.wall_time_s, "%.3f") << " s\n";
    out << "kkt:        " << fmt(s.kkt.max(), "%.3e") << "\n\n";

    out << "generator dispatch (MW / MVAr)\n";
    for (const auto& g : s.generators) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "  %-12s %10.3f %10.3f\n", g.id.c_str(),
                      g.p * base_mva, g.q * base_mva);
        out << buf;
    }
    if (!s.dc_terminals.empty()) {
        out << "\ndc terminal voltages (pu)\n";
        for (const auto& t : s.dc_terminals) {
            char buf[96];
            std::snprintf(buf, sizeof(buf), "  %-10s %-9s %10.5f\n", t.bus.c_str(),
                          to_string(t.terminal), t.voltage);
            out << buf;
        }
    }
    if (!s.converters.empty()) {
        out << "\nconverter pole powers (MW, from AC grid / to DC grid)\n";
        for (const auto& c : s.converters) {
            for (const auto& p : c.poles) {
                char buf[128];
                std::snprintf(buf, sizeof(buf), "  %-10s %-9s %10.3f %10.3f\n", c.id.c_str(),
                              to_string(p.pole), p.p_grid * base_mva, -p.p_dc * base_mva);
                out << buf;
            }
        }
    }
}

nlohmann::json summary_json(const Solution& s) {
    return nlohmann::json{{"status", nlp::to_string(s.status)},
                          {"objective", s.objective},
                          {"iterations", s.iterations},
                          {"wall_time_s", s.wall_time_s},
                          {"kkt_max", s.kkt.max()}};
}

int input_error(std::ostream& err, const std::string& what) {
    err << "error: " << what << "\n";
    return kExitInputError;
}

}  // namespace

int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err) {
    try {
        CaseFile c = load_case(args.case_path);
        Network network = to_network(c);
        const ModelKind kind =
            args.model == "balanced" ? ModelKind::Balanced : ModelKind::MultiConductor;
        SolveOutput so = run_solve(network, kind, solver_options(c, args.tol, args.max_iter));

        if (args.json) {
            out << summary_json(so.solution).dump(2) << "\n";
        } else {
            print_human_summary(out, so.solution, c.base_mva);
        }
        if (!args.out_dir.empty()) {
            write_solution_files(args.out_dir, so.solution);
        }
        return so.solution.status == nlp::SolveStatus::Optimal ? kExitOk : kExitNonconvergence;
    } catch (const NotBalanceable& e) {
        return input_error(err, e.what());
    } catch (const CaseValidationError& e) {
        err << "error: " << e.what() << "\n";
        for (const auto& v : e.violations()) err << "  " << v << "\n";
        return kExitInputError;
    } catch (const ParseError& e) {
        return input_error(err, e.what());
    } catch (const SchemaError& e) {
        return input_error(err, e.what());
    }
}

int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err) {
    try {
        CaseFile c = load_case(args.case_path);
        Network network = to_network(c);
        nlp::SolverOptions opts = solver_options(c, args.tol, 0);

        bool balanceable = true;
        std::string balance_block;
        try {
            derive_balanced_equivalent(network);
        } catch (const NotBalanceable& e) {
            balanceable = false;
            balance_block = e.what();
        }

        if (balanceable) {
            SolveOutput mc = run_solve(network, ModelKind::MultiConductor, opts);
            SolveOutput bal = run_solve(network, ModelKind::Balanced, opts);
            const bool ok = mc.solution.status == nlp::SolveStatus::Optimal &&
                            bal.solution.status == nlp::SolveStatus::Optimal;

            const double rel_delta =
                std::abs(mc.solution.objective - bal.solution.objective) /
                std::max(1e-12, std::abs(bal.solution.objective));
            double max_gen_delta = 0.0;
            for (std::size_t i = 0; i < mc.solution.generators.size(); ++i) {
                max_gen_delta = std::max(max_gen_delta,
                                         std::abs(mc.solution.generators[i].p -
                                                  bal.solution.generators[i].p));
            }
            double max_neutral = 0.0;
            for (const auto& t : mc.solution.dc_terminals) {
                if (t.terminal == DcTerminal::Neutral) {
                    max_neutral = std::max(max_neutral, std::abs(t.voltage));
                }
            }
            if (args.json) {
                out << nlohmann::json{{"mode", "balanced_equivalence"},
                                      {"mcdc", summary_json(mc.solution)},
                                      {"balanced", summary_json(bal.solution)},
                                      {"objective_rel_delta", rel_delta},
                                      {"max_gen_p_delta", max_gen_delta},
                                      {"max_neutral_voltage", max_neutral}}
                              .dump(2)
                       << "\n";
            } else {
                out << "balanced equivalence comparison\n";
                out << "  mcdc objective:      " << fmt(mc.solution.objective, "%.8f") << " ("
                    << nlp::to_string(mc.solution.status) << ")\n";
                out << "  balanced objective:  " << fmt(bal.solution.objective, "%.8f") << " ("
                    << nlp::to_string(bal.solution.status) << ")\n";
                out << "  objective rel delta: " << fmt(rel_delta, "%.3e") << "\n";
                out << "  max gen P delta:     " << fmt(max_gen_delta, "%.3e") << " pu\n";
                out << "  max |U neutral|:     " << fmt(max_neutral, "%.3e") << " pu\n";
            }
            return ok ? kExitOk : kExitNonconvergence;
        }

        if (!args.embed_split) {
            return input_error(err, "case is not balance-equivalent (" + balance_block +
                                        "); pass --embed-split to audit the equal-split "
                                        "embedding of the forced balanced solution");
        }

        // Unbalanced path: the single-conductor tool's answer, split equally
        // over the poles, audited against the real multi-conductor network.
        SolveOutput mc = run_solve(network, ModelKind::MultiConductor, opts);
        SolveOutput bal = run_solve(network, ModelKind::Balanced, opts, /*forced=*/true);
        Solution embedded = oracle::equal_split_embedding(bal.solution, *bal.view, network);
        oracle::AuditReport embed_report = oracle::audit(network, embedded, 1e-6);
        oracle::AuditReport mc_report = oracle::audit(network, mc.solution, 1e-6);

        if (args.json) {
            nlohmann::json j;
            j["mode"] = "embed_split";
            j["mcdc"] = summary_json(mc.solution);
            j["balanced_forced"] = summary_json(bal.solution);
            j["embedding_flags"] = embed_report.flag_count();
            j["embedding_max_residual"] = embed_report.max_abs_residual();
            j["mcdc_flags"] = mc_report.flag_count();
            nlohmann::json viol = nlohmann::json::array();
            for (const auto& e : embed_report.flagged()) {
                viol.push_back({{"category", e.category},
                                {"entity", e.entity},
                                {"detail", e.detail},
                                {"residual", e.residual}});
            }
            j["violations"] = viol;
            out << j.dump(2) << "\n";
        } else {
            out << "equal-split embedding audit (balanced tool on unbalanced network)\n";
            out << "  mcdc objective:       " << fmt(mc.solution.objective, "%.8f") << " ("
                << nlp::to_string(mc.solution.status) << ")\n";
            out << "  balanced objective:   " << fmt(bal.solution.objective, "%.8f")
                << " (forced aggregation)\n";
            out << "  mcdc audit flags:     " << mc_report.flag_count() << "\n";
            out << "  embedding flags:      " << embed_report.flag_count() << "\n\n";
            out << embed_report.to_table(true);
        }
        const bool ok = mc.solution.status == nlp::SolveStatus::Optimal;
        return ok ? kExitOk : kExitNonconvergence;
    } catch (const CaseValidationError& e) {
        return input_error(err, e.what());
    } catch (const ParseError& e) {
        return input_error(err, e.what());
    } catch (const SchemaError& e) {
        return input_error(err, e.what());
    }
}

int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err) {
    try {
        CaseFile c = load_case(args.case_path);
        Network base = to_network(c);

        if (args.step <= 0.0 || args.from >= args.to) {
            return input_error(err, "sweep requires from < to and step > 0");
        }
        int load_index = -1;
        for (std::size_t i = 0; i < base.loads.size(); ++i) {
            if (base.loads[i].id == args.entity) load_index = static_cast<int>(i);
        }
        if (load_index < 0) {
            return input_error(err, "load '" + args.entity + "' not found");
        }

        std::vector<double> points;
        for (double v = args.from; v <= args.to + 1e-12; v += args.step) points.push_back(v);

        struct Step {
            double load = 0.0;
            Solution solution;
            bool done = false;
        };
        std::vector<Step> steps(points.size());
        nlp::SolverOptions opts = solver_options(c, 0.0, 0);

        int threads = 1;
        if (const char* env = std::getenv("MCDC_OPF_THREADS")) {
            threads = std::max(1, std::atoi(env));
        }
        threads = std::min<int>(threads, static_cast<int>(points.size()));

        auto run_step = [&](std::size_t k) {
            Network net = base;
            net.loads[load_index].p = points[k];
            steps[k].load = points[k];
            try {
                SolveOutput so = run_solve(net, ModelKind::MultiConductor, opts);
                steps[k].solution = std::move(so.solution);
                steps[k].done = true;
            } catch (const std::exception&) {
                steps[k].done = false;
            }
        };

        if (threads <= 1) {
            for (std::size_t k = 0; k < points.size(); ++k) run_step(k);
        } else {
            std::vector<std::thread> pool;
            std::atomic<std::size_t> next{0};
            for (int t = 0; t < threads; ++t) {
                pool.emplace_back([&] {
                    for (std::size_t k = next.fetch_add(1); k < points.size();
                         k = next.fetch_add(1)) {
                        run_step(k);
                    }
                });
            }
            for (auto& th : pool) th.join();
        }

        // Column layout: swept load, status, objective, neutral voltage per
        // DC bus, P per generator, then the binding neutral bounds.
        NetworkIndex base_idx(base);
        std::vector<std::string> neutral_buses;
        for (const auto& bus : base.dc_buses) {
            if (bus.has(DcTerminal::Neutral)) neutral_buses.push_back(bus.id);
        }
        std::ostringstream csv;
        csv << "load_pu,status,objective";
        for (const auto& id : neutral_buses) csv << ",un_" << id;
        for (const auto& g : base.generators) csv << ",pg_" << g.id;
        csv << ",binding\n";

        bool all_ok = true;
        for (const auto& step : steps) {
            const bool ok = step.done && step.solution.status == nlp::SolveStatus::Optimal;
            all_ok = all_ok && ok;
            csv << fmt(step.load) << ","
                << (step.done ? nlp::to_string(step.solution.status) : "error") << ","
                << (ok ? fmt(step.solution.objective) : "");
            for (const auto& id : neutral_buses) {
                csv << ",";
                if (ok) {
                    const auto* t = step.solution.find_terminal(id, DcTerminal::Neutral);
                    if (t != nullptr) csv << fmt(t->voltage);
                }
            }
            for (std::size_t gi = 0; gi < base.generators.size(); ++gi) {
                csv << ",";
                if (ok) csv << fmt(step.solution.generators[gi].p);
            }
            csv << ",";
            if (ok) {
                std::string binding;
                for (const auto& id : neutral_buses) {
                    const auto* t = step.solution.find_terminal(id, DcTerminal::Neutral);
                    const auto& bus = base.dc_buses[base_idx.dc_bus(id)];
                    if (t != nullptr && bus.vmax_neutral > 0.0 &&
                        bus.vmax_neutral - std::abs(t->voltage) <= 1e-6) {
                        if (!binding.empty()) binding += ";";
                        binding += "un_" + id;
                    }
                }
                csv << binding;
            }
            csv << "\n";
        }

        if (args.json) {
            nlohmann::json rows = nlohmann::json::array();
            for (const auto& step : steps) {
                nlohmann::json j;
                j["load_pu"] = step.load;
                j["status"] =
                    step.done ? nlp::to_string(step.solution.status) : "error";
                if (step.done && step.solution.status == nlp::SolveStatus::Optimal) {
                    j["objective"] = step.solution.objective;
                    nlohmann::json un;
                    for (const auto& id : neutral_buses) {
                        const auto* t = step.solution.find_terminal(id, DcTerminal::Neutral);
                        if (t != nullptr) un[id] = t->voltage;
                    }
                    j["neutral_voltages"] = un;
                    nlohmann::json pg;
                    for (const auto& g : step.solution.generators) pg[g.id] = g.p;
                    j["generator_p"] = pg;
                }
                rows.push_back(std::move(j));
            }
            out << rows.dump(2) << "\n";
        } else {
            out << csv.str();
        }
        if (!args.out_dir.empty()) {
            fs::create_directories(args.out_dir);
            write_file(fs::path(args.out_dir) / "sweep.csv", csv.str());
            // gnuplot-friendly variant
            std::string dat = csv.str();
            for (auto& ch : dat) {
                if (ch == ',') ch = ' ';
            }
            write_file(fs::path(args.out_dir) / "sweep.dat", "# " + dat);
        }
        return all_ok ? kExitOk : kExitNonconvergence;
    } catch (const CaseValidationError& e) {
        return input_error(err, e.what());
    } catch (const ParseError& e) {
        return input_error(err, e.what());
    } catch (const SchemaError& e) {
        return input_error(err, e.what());
    }
}

int cmd_audit(const AuditArgs& args, std::ostream& out, std::ostream& err) {
    try {
        CaseFile c = load_case(args.case_path);
        Network network = to_network(c);

        std::ifstream f(args.solution_path, std::ios::binary);
        if (!f) {
            return input_error(err, "cannot open solution file '" + args.solution_path + "'");
        }
        std::ostringstream buf;
        buf << f.rdbuf();
        Solution solution = solution_from_json(buf.str());

        const Network* target = &network;
        BalancedEquivalent view;
        if (solution.model == formulation::ModelKind::Balanced) {
            view = derive_balanced_view_forced(network);
            target = &view.network;
        }
        oracle::AuditReport report = oracle::audit(*target, solution, args.tol);

        if (args.json) {
            out << report.to_json();
        } else {
            out << "audit: " << report.flag_count() << " flagged residual(s), max |residual| "
                << fmt(report.max_abs_residual(), "%.3e") << ", tol " << fmt(args.tol, "%.1e")
                << "\n";
            if (report.flag_count() > 0) out << report.to_table(true);
        }
        return report.flag_count() == 0 ? kExitOk : kExitAuditFlags;
    } catch (const DimensionMismatch& e) {
        return input_error(err, e.what());
    } catch (const CaseValidationError& e) {
        return input_error(err, e.what());
    } catch (const ParseError& e) {
        return input_error(err, e.what());
    } catch (const SchemaError& e) {
        return input_error(err, e.what());
    }
}

}  // namespace mcopf::cli
