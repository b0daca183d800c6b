#include "mcopf/solution.hpp"

#include <json.hpp>

#include "mcopf/errors.hpp"

namespace mcopf {

using formulation::ModelKind;
using nlohmann::json;

const DcTerminalResult* Solution::find_terminal(const std::string& bus, DcTerminal t) const {
    for (const auto& r : dc_terminals) {
        if (r.bus == bus && r.terminal == t) return &r;
    }
    return nullptr;
}

const ConverterResult* Solution::find_converter(const std::string& id) const {
    for (const auto& r : converters) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

const GeneratorResult* Solution::find_generator(const std::string& id) const {
    for (const auto& r : generators) {
        if (r.id == id) return &r;
    }
    return nullptr;
}

Solution extract_solution(const formulation::VariableMap& map, const Network& network,
                          const nlp::SolveResult& result) {
    Solution s;
    s.model = map.kind;
    s.status = result.status;
    s.objective = result.objective;
    s.kkt = result.kkt;
    s.iterations = result.iterations;
    s.wall_time_s = result.wall_time_s;
    s.primal = result.primal;

    const auto& x = result.primal;
    auto at = [&](int idx) { return idx >= 0 ? x[idx] : 0.0; };

    for (std::size_t i = 0; i < network.ac_buses.size(); ++i) {
        s.ac_buses.push_back({network.ac_buses[i].id, at(map.ac_bus[i].vm), at(map.ac_bus[i].va)});
    }
    for (std::size_t i = 0; i < network.ac_branches.size(); ++i) {
        const auto& v = map.ac_branch[i];
        s.ac_branches.push_back({network.ac_branches[i].id, at(v.p_from), at(v.q_from),
                                 at(v.p_to), at(v.q_to)});
    }
    for (std::size_t i = 0; i < network.generators.size(); ++i) {
        s.generators.push_back({network.generators[i].id, at(map.gen[i].p), at(map.gen[i].q)});
    }

    for (std::size_t e = 0; e < network.dc_buses.size(); ++e) {
        const auto& bus = network.dc_buses[e];
        if (map.kind == ModelKind::Balanced) {
            s.dc_terminals.push_back({bus.id, DcTerminal::Positive, at(map.dc_terminal[e][0])});
            continue;
        }
        for (DcTerminal t : kDcTerminals) {
            if (bus.has(t)) {
                s.dc_terminals.push_back({bus.id, t, at(map.dc_voltage(static_cast<int>(e), t))});
            }
        }
    }

    for (std::size_t d = 0; d < network.dc_branches.size(); ++d) {
        const auto& br = network.dc_branches[d];
        if (map.kind == ModelKind::Balanced) {
            const auto& cv = map.dc_branch[d][0];
            const double i = at(cv.i_from);
            const double r = br.conductors.at(DcTerminal::Positive).resistance;
            s.dc_conductors.push_back({br.id, DcTerminal::Positive, i, at(cv.i_to), r * i * i});
            continue;
        }
        for (const auto& [t, cond] : br.conductors) {
            const auto& cv = map.dc_branch[d][formulation::terminal_slot(t)];
            const double i = at(cv.i_from);
            s.dc_conductors.push_back({br.id, t, i, at(cv.i_to), cond.resistance * i * i});
        }
    }

    for (std::size_t ci = 0; ci < network.converters.size(); ++ci) {
        const auto& conv = network.converters[ci];
        const auto& cv = map.converter[ci];
        ConverterResult cr;
        cr.id = conv.id;
        cr.has_neutral =
            map.kind == ModelKind::MultiConductor && has_neutral_connection(conv.configuration);
        cr.has_ground = cv.i_ground >= 0;
        cr.i_neutral = at(cv.i_neutral);
        cr.p_neutral = at(cv.p_neutral);
        cr.i_ground = at(cv.i_ground);
        for (std::size_t k = 0; k < conv.poles.size() && k < cv.poles.size(); ++k) {
            const auto& pole = conv.poles[k];
            const auto& pv = cv.poles[k];
            ConverterPoleResult pr;
            pr.pole = pole.pole;
            pr.p_grid = at(pv.p_tf_from);
            pr.q_grid = at(pv.q_tf_from);
            pr.p_tf_to = at(pv.p_tf_to);
            pr.q_tf_to = at(pv.q_tf_to);
            pr.u_f = at(pv.u_f);
            pr.th_f = at(pv.th_f);
            pr.p_pr_from = at(pv.p_pr_from);
            pr.q_pr_from = at(pv.q_pr_from);
            pr.p_pr_to = at(pv.p_pr_to);
            pr.q_pr_to = at(pv.q_pr_to);
            pr.u_cv = at(pv.u_cv);
            pr.th_cv = at(pv.th_cv);
            pr.p_ac = at(pv.p_ac);
            pr.q_ac = at(pv.q_ac);
            pr.i_ac = at(pv.i_ac);
            pr.p_dc = at(pv.p_dc);
            pr.i_dc = at(pv.i_dc);
            pr.i_dc_neutral = at(pv.i_dc_neutral);
            pr.loss = pole.loss_a + pole.loss_b * pr.i_ac + pole.loss_c * pr.i_ac * pr.i_ac;
            cr.poles.push_back(pr);
        }
        s.converters.push_back(std::move(cr));
    }

    for (std::size_t li = 0; li < network.loads.size(); ++li) {
        if (map.dc_load_current[li] >= 0) {
            s.dc_loads.push_back({network.loads[li].id, at(map.dc_load_current[li])});
        }
    }

    return s;
}

namespace {

json pole_json(const ConverterPoleResult& p) {
    return json{{"pole", to_string(p.pole)},
                {"p_grid", p.p_grid},
                {"q_grid", p.q_grid},
                {"p_tf_to", p.p_tf_to},
                {"q_tf_to", p.q_tf_to},
                {"u_f", p.u_f},
                {"th_f", p.th_f},
                {"p_pr_from", p.p_pr_from},
                {"q_pr_from", p.q_pr_from},
                {"p_pr_to", p.p_pr_to},
                {"q_pr_to", p.q_pr_to},
                {"u_cv", p.u_cv},
                {"th_cv", p.th_cv},
                {"p_ac", p.p_ac},
                {"q_ac", p.q_ac},
                {"i_ac", p.i_ac},
                {"p_dc", p.p_dc},
                {"i_dc", p.i_dc},
                {"i_dc_neutral", p.i_dc_neutral},
                {"loss", p.loss}};
}

ConverterPoleResult pole_from_json(const json& j) {
    ConverterPoleResult p;
    p.pole = j.at("pole").get<std::string>() == "negative" ? PoleKind::Negative
                                                           : PoleKind::Positive;
    p.p_grid = j.at("p_grid").get<double>();
    p.q_grid = j.at("q_grid").get<double>();
    p.p_tf_to = j.at("p_tf_to").get<double>();
    p.q_tf_to = j.at("q_tf_to").get<double>();
    p.u_f = j.at("u_f").get<double>();
    p.th_f = j.at("th_f").get<double>();
    p.p_pr_from = j.at("p_pr_from").get<double>();
    p.q_pr_from = j.at("q_pr_from").get<double>();
    p.p_pr_to = j.at("p_pr_to").get<double>();
    p.q_pr_to = j.at("q_pr_to").get<double>();
    p.u_cv = j.at("u_cv").get<double>();
    p.th_cv = j.at("th_cv").get<double>();
    p.p_ac = j.at("p_ac").get<double>();
    p.q_ac = j.at("q_ac").get<double>();
    p.i_ac = j.at("i_ac").get<double>();
    p.p_dc = j.at("p_dc").get<double>();
    p.i_dc = j.at("i_dc").get<double>();
    p.i_dc_neutral = j.at("i_dc_neutral").get<double>();
    p.loss = j.at("loss").get<double>();
    return p;
}

DcTerminal terminal_from_string(const std::string& s) {
    if (s == "positive") return DcTerminal::Positive;
    if (s == "negative") return DcTerminal::Negative;
    if (s == "neutral") return DcTerminal::Neutral;
    throw ParseError("unknown terminal '" + s + "' in solution file");
}

}  // namespace

std::string solution_to_json(const Solution& s) {
    json root;
    root["model"] = s.model == ModelKind::MultiConductor ? "mcdc" : "balanced";
    root["status"] = nlp::to_string(s.status);
    root["objective"] = s.objective;
    root["iterations"] = s.iterations;
    root["wall_time_s"] = s.wall_time_s;
    root["kkt"] = {{"stationarity", s.kkt.stationarity},
                   {"primal_feasibility", s.kkt.primal_feasibility},
                   {"dual_feasibility", s.kkt.dual_feasibility},
                   {"complementarity", s.kkt.complementarity}};

    root["ac_buses"] = json::array();
    for (const auto& b : s.ac_buses) {
        root["ac_buses"].push_back({{"id", b.id}, {"vm", b.vm}, {"va", b.va}});
    }
    root["ac_branches"] = json::array();
    for (const auto& b : s.ac_branches) {
        root["ac_branches"].push_back({{"id", b.id},
                                       {"p_from", b.p_from},
                                       {"q_from", b.q_from},
                                       {"p_to", b.p_to},
                                       {"q_to", b.q_to}});
    }
    root["generators"] = json::array();
    for (const auto& g : s.generators) {
        root["generators"].push_back({{"id", g.id}, {"p", g.p}, {"q", g.q}});
    }
    root["dc_terminals"] = json::array();
    for (const auto& t : s.dc_terminals) {
        root["dc_terminals"].push_back(
            {{"bus", t.bus}, {"terminal", to_string(t.terminal)}, {"voltage", t.voltage}});
    }
    root["dc_conductors"] = json::array();
    for (const auto& c : s.dc_conductors) {
        root["dc_conductors"].push_back({{"branch", c.branch},
                                         {"terminal", to_string(c.terminal)},
                                         {"i_from", c.i_from},
                                         {"i_to", c.i_to},
                                         {"loss", c.loss}});
    }
    root["converters"] = json::array();
    for (const auto& c : s.converters) {
        json jc;
        jc["id"] = c.id;
        jc["has_neutral"] = c.has_neutral;
        jc["has_ground"] = c.has_ground;
        jc["i_neutral"] = c.i_neutral;
        jc["p_neutral"] = c.p_neutral;
        jc["i_ground"] = c.i_ground;
        jc["poles"] = json::array();
        for (const auto& p : c.poles) jc["poles"].push_back(pole_json(p));
        root["converters"].push_back(std::move(jc));
    }
    root["dc_loads"] = json::array();
    for (const auto& l : s.dc_loads) {
        root["dc_loads"].push_back({{"id", l.id}, {"current", l.current}});
    }
    root["primal"] = s.primal;
    return root.dump(2) + "\n";
}

Solution solution_from_json(const std::string& bytes) {
    json root;
    try {
        root = json::parse(bytes);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("solution JSON parse error: ") + e.what());
    }
    Solution s;
    try {
        s.model = root.at("model").get<std::string>() == "balanced"
                      ? ModelKind::Balanced
                      : ModelKind::MultiConductor;
        const std::string st = root.at("status").get<std::string>();
        if (st == "optimal") s.status = nlp::SolveStatus::Optimal;
        else if (st == "infeasible") s.status = nlp::SolveStatus::Infeasible;
        else if (st == "iter_limit") s.status = nlp::SolveStatus::IterLimit;
        else s.status = nlp::SolveStatus::NumericalFailure;
        s.objective = root.at("objective").get<double>();
        s.iterations = root.at("iterations").get<int>();
        s.wall_time_s = root.value("wall_time_s", 0.0);
        const auto& kkt = root.at("kkt");
        s.kkt.stationarity = kkt.at("stationarity").get<double>();
        s.kkt.primal_feasibility = kkt.at("primal_feasibility").get<double>();
        s.kkt.dual_feasibility = kkt.at("dual_feasibility").get<double>();
        s.kkt.complementarity = kkt.at("complementarity").get<double>();

        for (const auto& j : root.at("ac_buses")) {
            s.ac_buses.push_back({j.at("id").get<std::string>(), j.at("vm").get<double>(),
                                  j.at("va").get<double>()});
        }
        for (const auto& j : root.at("ac_branches")) {
            s.ac_branches.push_back({j.at("id").get<std::string>(), j.at("p_from").get<double>(),
                                     j.at("q_from").get<double>(), j.at("p_to").get<double>(),
                                     j.at("q_to").get<double>()});
        }
        for (const auto& j : root.at("generators")) {
            s.generators.push_back({j.at("id").get<std::string>(), j.at("p").get<double>(),
                                    j.at("q").get<double>()});
        }
        for (const auto& j : root.at("dc_terminals")) {
            s.dc_terminals.push_back({j.at("bus").get<std::string>(),
                                      terminal_from_string(j.at("terminal").get<std::string>()),
                                      j.at("voltage").get<double>()});
        }
        for (const auto& j : root.at("dc_conductors")) {
            s.dc_conductors.push_back({j.at("branch").get<std::string>(),
                                       terminal_from_string(j.at("terminal").get<std::string>()),
                                       j.at("i_from").get<double>(), j.at("i_to").get<double>(),
                                       j.at("loss").get<double>()});
        }
        for (const auto& j : root.at("converters")) {
            ConverterResult c;
            c.id = j.at("id").get<std::string>();
            c.has_neutral = j.at("has_neutral").get<bool>();
            c.has_ground = j.at("has_ground").get<bool>();
            c.i_neutral = j.at("i_neutral").get<double>();
            c.p_neutral = j.at("p_neutral").get<double>();
            c.i_ground = j.at("i_ground").get<double>();
            for (const auto& pj : j.at("poles")) c.poles.push_back(pole_from_json(pj));
            s.converters.push_back(std::move(c));
        }
        for (const auto& j : root.at("dc_loads")) {
            s.dc_loads.push_back({j.at("id").get<std::string>(), j.at("current").get<double>()});
        }
        if (root.contains("primal")) {
            s.primal = root.at("primal").get<std::vector<double>>();
        }
    } catch (const json::exception& e) {
        throw SchemaError("solution", std::string("solution file schema error: ") + e.what());
    }
    return s;
}

}  // namespace mcopf
