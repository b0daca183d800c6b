#pragma once

#include <memory>
#include <vector>

#include "mcopf/formulation/terms.hpp"
#include "mcopf/formulation/variable_map.hpp"
#include "mcopf/network.hpp"

namespace mcopf::formulation {

struct BuiltProblem {
    std::unique_ptr<TermProblem> problem;
    VariableMap map;
    // Present on balanced builds: the aggregation the problem was built from.
    std::shared_ptr<const BalancedEquivalent> balanced_source;
};

/// Multi-conductor AC/DC OPF over the full pole/neutral/ground detail.
/// Requires validate(network) to be clean.
BuiltProblem build_mcdc(const Network& network);

/// Single-conductor reference OPF over the balanced aggregate of `network`.
/// Propagates NotBalanceable. `forced` skips the balance preconditions
/// (used to mimic a single-conductor tool on unbalanced data).
BuiltProblem build_balanced(const Network& network, bool forced = false);

struct FlatStart {
    std::vector<double> point;
    std::vector<int> pinned;  // variables whose bound interval has no interior
};

/// Voltage magnitudes at 1, angles at 0, poles at +/-1, neutrals and all
/// currents/powers at 0, each adjusted inside its bounds by a 1e-4 margin.
FlatStart flat_start(const VariableMap& map, const TermProblem& problem);

/// Closed-form variable/row counts for a topology; tested against the built
/// problems.
struct Census {
    int vars = 0;
    int eq_rows = 0;
    int ineq_rows = 0;
    int rows() const { return eq_rows + ineq_rows; }
};

Census census_mcdc(const Network& network);
Census census_balanced(const Network& view);  // over the aggregated view

}  // namespace mcopf::formulation
