#pragma once

#include <string>
#include <vector>

#include "mcopf/formulation/build.hpp"
#include "mcopf/network.hpp"
#include "mcopf/nlp/solver.hpp"

namespace mcopf {

struct AcBusResult {
    std::string id;
    double vm = 0.0, va = 0.0;
};

struct AcBranchResult {
    std::string id;
    double p_from = 0.0, q_from = 0.0;  // measured at the from side, from -> to
    double p_to = 0.0, q_to = 0.0;
};

struct GeneratorResult {
    std::string id;
    double p = 0.0, q = 0.0;
};

struct DcTerminalResult {
    std::string bus;
    DcTerminal terminal = DcTerminal::Positive;
    double voltage = 0.0;
};

struct DcConductorResult {
    std::string branch;
    DcTerminal terminal = DcTerminal::Positive;
    double i_from = 0.0, i_to = 0.0;
    double loss = 0.0;  // r * i^2
};

struct ConverterPoleResult {
    PoleKind pole = PoleKind::Positive;
    double p_grid = 0.0, q_grid = 0.0;  // at the AC bus, positive into the station
    double p_tf_to = 0.0, q_tf_to = 0.0;
    double u_f = 0.0, th_f = 0.0;
    double p_pr_from = 0.0, q_pr_from = 0.0;
    double p_pr_to = 0.0, q_pr_to = 0.0;
    double u_cv = 0.0, th_cv = 0.0;
    double p_ac = 0.0, q_ac = 0.0, i_ac = 0.0;
    double p_dc = 0.0, i_dc = 0.0;  // pole terminal, positive from grid into converter
    double i_dc_neutral = 0.0;      // pole neutral-port current
    double loss = 0.0;
};

struct ConverterResult {
    std::string id;
    std::vector<ConverterPoleResult> poles;
    bool has_neutral = false;
    bool has_ground = false;
    double i_neutral = 0.0;  // station neutral current I_c0
    double p_neutral = 0.0;
    double i_ground = 0.0;
};

struct DcLoadResult {
    std::string id;
    double current = 0.0;
};

/// Physical report of one solve, plus solver diagnostics. For balanced-model
/// solves the entity ids refer to the aggregated single-conductor view.
struct Solution {
    formulation::ModelKind model = formulation::ModelKind::MultiConductor;
    nlp::SolveStatus status = nlp::SolveStatus::NumericalFailure;
    double objective = 0.0;
    nlp::KktResiduals kkt;
    int iterations = 0;
    double wall_time_s = 0.0;

    std::vector<AcBusResult> ac_buses;
    std::vector<AcBranchResult> ac_branches;
    std::vector<GeneratorResult> generators;
    std::vector<DcTerminalResult> dc_terminals;
    std::vector<DcConductorResult> dc_conductors;
    std::vector<ConverterResult> converters;
    std::vector<DcLoadResult> dc_loads;

    std::vector<double> primal;  // raw NLP point

    const DcTerminalResult* find_terminal(const std::string& bus, DcTerminal t) const;
    const ConverterResult* find_converter(const std::string& id) const;
    const GeneratorResult* find_generator(const std::string& id) const;
};

/// Maps a solver result back to physical per-entity tables. `network` must be
/// the network the problem was built from (the aggregated view for balanced
/// solves).
Solution extract_solution(const formulation::VariableMap& map, const Network& network,
                          const nlp::SolveResult& result);

std::string solution_to_json(const Solution& s);
Solution solution_from_json(const std::string& bytes);

}  // namespace mcopf
