#pragma once

#include <ostream>
#include <string>

namespace mcopf::cli {

// Exit codes shared by all subcommands:
//   0 success (solve: Optimal; audit: no flags)
//   1 input error (parse, schema, validation, missing file, dimension mismatch)
//   2 solver nonconvergence
//   3 audit found violations
inline constexpr int kExitOk = 0;
inline constexpr int kExitInputError = 1;
inline constexpr int kExitNonconvergence = 2;
inline constexpr int kExitAuditFlags = 3;

struct SolveArgs {
    std::string case_path;
    std::string model = "mcdc";  // mcdc | balanced
    std::string out_dir;         // write solution.json + CSV tables when set
    double tol = 0.0;            // 0: use the case file's solver defaults
    int max_iter = 0;
    bool json = false;  // machine-readable stdout
};
int cmd_solve(const SolveArgs& args, std::ostream& out, std::ostream& err);

struct CompareArgs {
    std::string case_path;
    bool embed_split = false;
    double tol = 0.0;
    bool json = false;
};
int cmd_compare(const CompareArgs& args, std::ostream& out, std::ostream& err);

struct SweepArgs {
    std::string case_path;
    std::string entity;  // load id whose active power is swept
    double from = 0.0;
    double to = 0.0;
    double step = 0.0;
    std::string out_dir;
    bool json = false;
};
int cmd_sweep(const SweepArgs& args, std::ostream& out, std::ostream& err);

struct AuditArgs {
    std::string case_path;
    std::string solution_path;
    double tol = 1e-6;
    bool json = false;
};
int cmd_audit(const AuditArgs& args, std::ostream& out, std::ostream& err);

}  // namespace mcopf::cli
