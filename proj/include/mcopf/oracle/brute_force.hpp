#pragma once

#include <string>
#include <vector>

#include "mcopf/network.hpp"
#include "mcopf/solution.hpp"

namespace mcopf::oracle {

struct BruteForceOutcome {
    double cost = 0.0;
    Solution solution;  // full physical tables of the best candidate
    std::vector<std::string> dof_names;
    std::vector<double> dof_values;
    int candidates = 0;
    int feasible = 0;
    /// Cost per feasible grid point of the first DOF (one-dimensional sweeps
    /// only), for shape checks.
    std::vector<std::pair<double, double>> cost_curve;
};

/// Exhaustive grid search over the free set points of a small network: the
/// active power of every generator not at a reference bus, plus the DC-side
/// power of every converter station except the last. Each candidate is closed
/// by a Newton solve of the full physical equation set (evaluated by the
/// audit module, independent of the NLP formulation) and kept only when the
/// audit reports no violation. Requires at most 3 degrees of freedom and
/// pinned voltage magnitudes (vmin == vmax) on all AC buses. Throws
/// NoFeasibleCandidate when the grid holds no feasible point.
BruteForceOutcome brute_force_small_opf(const Network& network, double grid_step = 0.01);

}  // namespace mcopf::oracle
