#include <iostream>

#include <CLI11.hpp>

#include "mcopf/cli/commands.hpp"

int main(int argc, char** argv) {
    CLI::App app{"multi-conductor AC/DC optimal power flow"};
    app.require_subcommand(1);

    mcopf::cli::SolveArgs solve_args;
    auto* solve = app.add_subcommand("solve", "solve one case");
    solve->add_option("case", solve_args.case_path, "case file (JSON)")->required();
    solve->add_option("--model", solve_args.model, "mcdc | balanced")
        ->check(CLI::IsMember({"mcdc", "balanced"}))
        ->capture_default_str();
    solve->add_option("--out", solve_args.out_dir, "directory for solution JSON and CSV tables");
    solve->add_option("--tol", solve_args.tol, "KKT tolerance (default: case options)");
    solve->add_option("--max-iter", solve_args.max_iter, "iteration limit");
    solve->add_flag("--json", solve_args.json, "machine-readable output");

    mcopf::cli::CompareArgs compare_args;
    auto* compare = app.add_subcommand("compare", "multi-conductor vs balanced formulation");
    compare->add_option("case", compare_args.case_path, "case file (JSON)")->required();
    compare->add_flag("--embed-split", compare_args.embed_split,
                      "on unbalanced cases: audit the equal-pole-split embedding of the "
                      "forced balanced solution");
    compare->add_option("--tol", compare_args.tol, "KKT tolerance");
    compare->add_flag("--json", compare_args.json, "machine-readable output");

    mcopf::cli::SweepArgs sweep_args;
    auto* sweep = app.add_subcommand("sweep", "solve over a range of one load's active power");
    sweep->add_option("case", sweep_args.case_path, "case file (JSON)")->required();
    sweep->add_option("--entity", sweep_args.entity, "load id to sweep")->required();
    sweep->add_option("--from", sweep_args.from, "first load value (pu)")->required();
    sweep->add_option("--to", sweep_args.to, "last load value (pu)")->required();
    sweep->add_option("--step", sweep_args.step, "step size (pu)")->required();
    sweep->add_option("--out", sweep_args.out_dir, "directory for sweep.csv / sweep.dat");
    sweep->add_flag("--json", sweep_args.json, "machine-readable output");

    mcopf::cli::AuditArgs audit_args;
    auto* audit = app.add_subcommand("audit", "check a solution against the physical equations");
    audit->add_option("case", audit_args.case_path, "case file (JSON)")->required();
    audit->add_option("solution", audit_args.solution_path, "solution JSON")->required();
    audit->add_option("--tol", audit_args.tol, "flag threshold")->capture_default_str();
    audit->add_flag("--json", audit_args.json, "machine-readable output");

    CLI11_PARSE(app, argc, argv);

    if (solve->parsed()) return mcopf::cli::cmd_solve(solve_args, std::cout, std::cerr);
    if (compare->parsed()) return mcopf::cli::cmd_compare(compare_args, std::cout, std::cerr);
    if (sweep->parsed()) return mcopf::cli::cmd_sweep(sweep_args, std::cout, std::cerr);
    if (audit->parsed()) return mcopf::cli::cmd_audit(audit_args, std::cout, std::cerr);
    return 1;
}
