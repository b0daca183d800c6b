#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcopf/network.hpp"
#include "mcopf/solution.hpp"

namespace mcopf::oracle {

/// Fixed nodal current injection, positive into the terminal.
struct DcInjection {
    std::string bus;
    DcTerminal terminal = DcTerminal::Positive;
    double current = 0.0;
};

/// Extra fixed potentials beyond the network's rigid groundings (used when a
/// case has no ground and needs a reference).
struct DcReference {
    std::string bus;
    DcTerminal terminal = DcTerminal::Positive;
    double voltage = 0.0;
};

struct DcLinearResult {
    std::vector<DcTerminalResult> voltages;
    std::vector<DcConductorResult> currents;          // i_from is from -> to
    std::map<std::string, double> ground_current;     // per grounded converter id
    double voltage(const std::string& bus, DcTerminal t) const;
};

/// Exact solve of the DC side's linear conductance system under fixed current
/// injections. Rigid groundings pin their neutral to zero; resistive
/// groundings become shunts to the zero-potential ground plane. Throws
/// SingularSystem when a component is floating. This is the brute-force
/// oracle for the network current equations; it shares nothing with the NLP
/// formulation.
DcLinearResult solve_linear_dc(const Network& network,
                               const std::vector<DcInjection>& injections,
                               const std::vector<DcReference>& references = {});

}  // namespace mcopf::oracle
