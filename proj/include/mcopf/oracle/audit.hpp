#pragma once

#include <string>
#include <vector>

#include "mcopf/network.hpp"
#include "mcopf/solution.hpp"

namespace mcopf::oracle {

struct AuditEntry {
    std::string category;  // "ac_flow", "ac_kcl", "dc_ohm", "dc_kcl", "conv_loss", "bound", ...
    std::string entity;
    std::string detail;
    double residual = 0.0;  // signed for equalities, violation amount for bounds
    bool flagged = false;
};

struct AuditReport {
    double tol = 1e-6;
    std::vector<AuditEntry> entries;

    int flag_count() const;
    double max_abs_residual() const;
    std::vector<AuditEntry> flagged() const;
    /// Nodal current residual at one DC bus terminal; quiet NaN when absent.
    double dc_kcl_residual(const std::string& bus, DcTerminal t) const;

    std::string to_table(bool flagged_only = true) const;
    std::string to_json() const;
};

/// Recomputes every physical constraint of the model directly from the
/// solution tables -- an implementation independent of the NLP formulation --
/// and flags residuals above tol. Balanced-model solutions are audited
/// against the aggregated view network they were solved on.
AuditReport audit(const Network& network, const Solution& solution, double tol = 1e-6);

/// Maps a balanced single-conductor solution onto a multi-conductor network by
/// the equal-pole-split rule: bipolar stations get half the lumped power per
/// pole, pole conductors half the aggregate current, neutral quantities zero.
/// Purely mechanical; feasibility is for audit() to judge.
Solution equal_split_embedding(const Solution& balanced, const BalancedEquivalent& aggregate,
                               const Network& unbalanced);

}  // namespace mcopf::oracle
