#pragma once

#include <array>
#include <vector>

#include "mcopf/network.hpp"

namespace mcopf::formulation {

enum class ModelKind {
    MultiConductor,  // explicit poles, neutral, grounding
    Balanced,        // single-conductor aggregate
};

inline int terminal_slot(DcTerminal t) {
    switch (t) {
        case DcTerminal::Positive: return 0;
        case DcTerminal::Negative: return 1;
        case DcTerminal::Neutral: return 2;
    }
    return 0;
}

struct AcBusVars {
    int vm = -1;
    int va = -1;
};

struct AcBranchVars {
    int p_from = -1, q_from = -1;  // measured at from side, from -> to
    int p_to = -1, q_to = -1;      // measured at to side, to -> from
};

struct GenVars {
    int p = -1, q = -1;
};

struct ConductorVars {
    int i_from = -1;  // from -> to
    int i_to = -1;    // to -> from
};

struct PoleVars {
    int p_tf_from = -1, q_tf_from = -1;  // ac bus -> filter node, at the bus
    int p_tf_to = -1, q_tf_to = -1;      // filter node -> ac bus, at the filter
    int u_f = -1, th_f = -1;
    int p_pr_from = -1, q_pr_from = -1;  // filter -> converter node
    int p_pr_to = -1, q_pr_to = -1;      // converter node -> filter
    int u_cv = -1, th_cv = -1;
    int p_ac = -1, q_ac = -1, i_ac = -1;  // converter internal ac quantities
    int p_dc = -1, i_dc = -1;             // pole terminal, positive into the converter
    int i_dc_neutral = -1;                // pole's neutral-port current, -1 without neutral
};

struct ConverterVars {
    std::vector<PoleVars> poles;  // aligned with ConverterStation::poles
    int i_neutral = -1;           // station neutral current I_c0
    int p_neutral = -1;           // P_c0 = U_e0 * I_c0
    int i_ground = -1;            // grounding shunt current
};

/// Bijection between physical quantities and NLP variable indices for one
/// built problem.
struct VariableMap {
    ModelKind kind = ModelKind::MultiConductor;
    int num_vars = 0;

    std::vector<AcBusVars> ac_bus;
    std::vector<AcBranchVars> ac_branch;
    std::vector<GenVars> gen;

    // Per DC bus, slot per terminal (balanced model uses only the Positive
    // slot); -1 when the terminal is absent.
    std::vector<std::array<int, 3>> dc_terminal;
    // Per DC branch, per terminal conductor currents.
    std::vector<std::array<ConductorVars, 3>> dc_branch;
    std::vector<ConverterVars> converter;
    std::vector<int> dc_load_current;  // per load, -1 for AC loads

    int dc_voltage(int bus, DcTerminal t) const { return dc_terminal[bus][terminal_slot(t)]; }
};

}  // namespace mcopf::formulation
