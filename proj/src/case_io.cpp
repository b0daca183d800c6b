#include "mcopf/case_io.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "mcopf/errors.hpp"

namespace mcopf {

using nlohmann::json;

namespace {

int line_of_offset(const std::string& bytes, std::size_t byte) {
    int line = 1;
    for (std::size_t i = 0; i < byte && i < bytes.size(); ++i) {
        if (bytes[i] == '\n') ++line;
    }
    return line;
}

class Reader {
public:
    Reader(bool strict, std::vector<std::string>& warnings)
        : strict_(strict), warnings_(warnings) {}

    const json& require(const json& obj, const std::string& key, const std::string& path) const {
        auto it = obj.find(key);
        if (it == obj.end()) {
            throw SchemaError(path + key, "missing required field '" + path + key + "'");
        }
        return *it;
    }

    double num(const json& obj, const std::string& key, const std::string& path) const {
        const json& v = require(obj, key, path);
        if (!v.is_number()) {
            throw SchemaError(path + key, "field '" + path + key + "' must be a number");
        }
        double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw SchemaError(path + key, "field '" + path + key + "' must be finite");
        }
        return d;
    }

    double num_or(const json& obj, const std::string& key, const std::string& path,
                  double fallback) const {
        return obj.contains(key) ? num(obj, key, path) : fallback;
    }

    int integer(const json& obj, const std::string& key, const std::string& path) const {
        const json& v = require(obj, key, path);
        if (!v.is_number_integer()) {
            throw SchemaError(path + key, "field '" + path + key + "' must be an integer");
        }
        return v.get<int>();
    }

    std::string str(const json& obj, const std::string& key, const std::string& path) const {
        const json& v = require(obj, key, path);
        if (!v.is_string()) {
            throw SchemaError(path + key, "field '" + path + key + "' must be a string");
        }
        return v.get<std::string>();
    }

    bool boolean_or(const json& obj, const std::string& key, const std::string& path,
                    bool fallback) const {
        if (!obj.contains(key)) return fallback;
        const json& v = obj.at(key);
        if (!v.is_boolean()) {
            throw SchemaError(path + key, "field '" + path + key + "' must be a boolean");
        }
        return v.get<bool>();
    }

    void check_known(const json& obj, std::initializer_list<const char*> known,
                     const std::string& path) const {
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool found = false;
            for (const char* k : known) {
                if (it.key() == k) {
                    found = true;
                    break;
                }
            }
            if (!found) {
                if (strict_) {
                    throw SchemaError(path + it.key(), "unknown field '" + path + it.key() + "'");
                }
                warnings_.push_back("unknown field '" + path + it.key() + "' ignored");
            }
        }
    }

    const json& array(const json& obj, const std::string& key, const std::string& path) const {
        const json& v = require(obj, key, path);
        if (!v.is_array()) {
            throw SchemaError(path + key, "field '" + path + key + "' must be an array");
        }
        return v;
    }

private:
    bool strict_;
    std::vector<std::string>& warnings_;
};

DcTerminal parse_terminal(const std::string& s, const std::string& path) {
    if (s == "positive") return DcTerminal::Positive;
    if (s == "negative") return DcTerminal::Negative;
    if (s == "neutral") return DcTerminal::Neutral;
    throw SchemaError(path, "'" + path + "' must be positive|negative|neutral, got '" + s + "'");
}

PoleKind parse_pole(const std::string& s, const std::string& path) {
    if (s == "positive") return PoleKind::Positive;
    if (s == "negative") return PoleKind::Negative;
    throw SchemaError(path, "'" + path + "' must be positive|negative, got '" + s + "'");
}

ConverterConfig parse_config(const std::string& s, const std::string& path) {
    if (s == "bipolar") return ConverterConfig::Bipolar;
    if (s == "asym_monopole_positive") return ConverterConfig::AsymMonopolePositive;
    if (s == "asym_monopole_negative") return ConverterConfig::AsymMonopoleNegative;
    if (s == "sym_monopole") return ConverterConfig::SymMonopole;
    throw SchemaError(path, "'" + path + "' is not a recognized converter configuration: '" + s +
                                "'");
}

}  // namespace

CaseFile parse_case(const std::string& bytes, bool strict) {
    json root;
    try {
        root = json::parse(bytes);
    } catch (const json::parse_error& e) {
        std::ostringstream msg;
        msg << "JSON parse error at line " << line_of_offset(bytes, e.byte) << ": " << e.what();
        throw ParseError(msg.str());
    }
    if (!root.is_object()) {
        throw ParseError("case file must be a JSON object");
    }

    CaseFile c;
    Reader r(strict, c.warnings);

    r.check_known(root,
                  {"schema_version", "base_mva", "base_kv", "ac_buses", "ac_branches",
                   "generators", "loads", "dc_buses", "dc_branches", "converters", "options"},
                  "");

    c.schema_version = r.str(root, "schema_version", "");
    if (c.schema_version != "mcopf-1") {
        throw SchemaError("schema_version",
                          "unrecognized schema_version '" + c.schema_version + "'");
    }
    c.base_mva = r.num(root, "base_mva", "");
    c.base_kv = r.num(root, "base_kv", "");

    for (const auto& j : r.array(root, "ac_buses", "")) {
        const std::string path = "ac_buses[" + std::to_string(c.ac_buses.size()) + "].";
        r.check_known(j, {"id", "vmin", "vmax", "gshunt", "bshunt", "is_reference"}, path);
        AcBus bus;
        bus.id = r.str(j, "id", path);
        bus.vmin = r.num(j, "vmin", path);
        bus.vmax = r.num(j, "vmax", path);
        bus.gshunt = r.num_or(j, "gshunt", path, 0.0);
        bus.bshunt = r.num_or(j, "bshunt", path, 0.0);
        bus.is_reference = r.boolean_or(j, "is_reference", path, false);
        c.ac_buses.push_back(std::move(bus));
    }

    for (const auto& j : r.array(root, "ac_branches", "")) {
        const std::string path = "ac_branches[" + std::to_string(c.ac_branches.size()) + "].";
        r.check_known(j, {"id", "from_bus", "to_bus", "g", "b", "rating"}, path);
        AcBranch br;
        br.id = r.str(j, "id", path);
        br.from_bus = r.str(j, "from_bus", path);
        br.to_bus = r.str(j, "to_bus", path);
        br.g = r.num(j, "g", path);
        br.b = r.num(j, "b", path);
        br.rating = r.num(j, "rating", path);
        c.ac_branches.push_back(std::move(br));
    }

    for (const auto& j : r.array(root, "generators", "")) {
        const std::string path = "generators[" + std::to_string(c.generators.size()) + "].";
        r.check_known(
            j, {"id", "bus", "pmin", "pmax", "qmin", "qmax", "cost_a", "cost_b", "cost_c"}, path);
        Generator g;
        g.id = r.str(j, "id", path);
        g.bus = r.str(j, "bus", path);
        g.pmin = r.num(j, "pmin", path);
        g.pmax = r.num(j, "pmax", path);
        g.qmin = r.num(j, "qmin", path);
        g.qmax = r.num(j, "qmax", path);
        g.cost_a = r.num_or(j, "cost_a", path, 0.0);
        g.cost_b = r.num_or(j, "cost_b", path, 0.0);
        g.cost_c = r.num_or(j, "cost_c", path, 0.0);
        c.generators.push_back(std::move(g));
    }

    for (const auto& j : r.array(root, "loads", "")) {
        const std::string path = "loads[" + std::to_string(c.loads.size()) + "].";
        r.check_known(j, {"id", "ac_bus", "dc_bus", "terminal", "p", "q"}, path);
        Load load;
        load.id = r.str(j, "id", path);
        const bool has_ac = j.contains("ac_bus");
        const bool has_dc = j.contains("dc_bus");
        if (has_ac == has_dc) {
            throw SchemaError(path + "ac_bus",
                              "load '" + load.id + "' must name exactly one of ac_bus or dc_bus");
        }
        if (has_ac) {
            load.attachment = AcAttachment{r.str(j, "ac_bus", path)};
        } else {
            load.attachment = DcAttachment{r.str(j, "dc_bus", path),
                                           parse_terminal(r.str(j, "terminal", path),
                                                          path + "terminal")};
        }
        load.p = r.num(j, "p", path);
        load.q = r.num_or(j, "q", path, 0.0);
        c.loads.push_back(std::move(load));
    }

    for (const auto& j : r.array(root, "dc_buses", "")) {
        const std::string path = "dc_buses[" + std::to_string(c.dc_buses.size()) + "].";
        r.check_known(j, {"id", "terminals", "vmin_pole", "vmax_pole", "vmax_neutral"}, path);
        DcBus bus;
        bus.id = r.str(j, "id", path);
        const json& terms = r.array(j, "terminals", path);
        for (const auto& t : terms) {
            if (!t.is_string()) {
                throw SchemaError(path + "terminals", "'" + path + "terminals' must hold strings");
            }
            bus.terminals.insert(parse_terminal(t.get<std::string>(), path + "terminals"));
        }
        bus.vmin_pole = r.num(j, "vmin_pole", path);
        bus.vmax_pole = r.num(j, "vmax_pole", path);
        bus.vmax_neutral = r.num_or(j, "vmax_neutral", path, 0.1);
        c.dc_buses.push_back(std::move(bus));
    }

    for (const auto& j : r.array(root, "dc_branches", "")) {
        const std::string path = "dc_branches[" + std::to_string(c.dc_branches.size()) + "].";
        r.check_known(j, {"id", "from_bus", "to_bus", "conductors"}, path);
        DcBranch br;
        br.id = r.str(j, "id", path);
        br.from_bus = r.str(j, "from_bus", path);
        br.to_bus = r.str(j, "to_bus", path);
        const json& cond = r.require(j, "conductors", path);
        if (!cond.is_object()) {
            throw SchemaError(path + "conductors", "'" + path + "conductors' must be an object");
        }
        for (auto it = cond.begin(); it != cond.end(); ++it) {
            DcTerminal t = parse_terminal(it.key(), path + "conductors");
            const std::string cpath = path + "conductors." + it.key() + ".";
            r.check_known(*it, {"r", "rating"}, cpath);
            DcConductor dc;
            dc.resistance = r.num(*it, "r", cpath);
            dc.rating = r.num(*it, "rating", cpath);
            br.conductors[t] = dc;
        }
        c.dc_branches.push_back(std::move(br));
    }

    for (const auto& j : r.array(root, "converters", "")) {
        const std::string path = "converters[" + std::to_string(c.converters.size()) + "].";
        r.check_known(j, {"id", "ac_bus", "dc_bus", "configuration", "grounding", "poles"}, path);
        ConverterStation conv;
        conv.id = r.str(j, "id", path);
        conv.ac_bus = r.str(j, "ac_bus", path);
        conv.dc_bus = r.str(j, "dc_bus", path);
        conv.configuration = parse_config(r.str(j, "configuration", path), path + "configuration");

        const json& ground = r.require(j, "grounding", path);
        if (!ground.is_object()) {
            throw SchemaError(path + "grounding", "'" + path + "grounding' must be an object");
        }
        r.check_known(ground, {"kind", "r"}, path + "grounding.");
        const std::string kind = r.str(ground, "kind", path + "grounding.");
        if (kind == "none") {
            conv.grounding = {Grounding::Kind::None, 0.0};
        } else if (kind == "rigid") {
            conv.grounding = {Grounding::Kind::Rigid, 0.0};
        } else if (kind == "resistive") {
            conv.grounding = {Grounding::Kind::Resistive, r.num(ground, "r", path + "grounding.")};
        } else {
            throw SchemaError(path + "grounding.kind",
                              "grounding kind must be none|rigid|resistive, got '" + kind + "'");
        }

        for (const auto& pj : r.array(j, "poles", path)) {
            const std::string ppath =
                path + "poles[" + std::to_string(conv.poles.size()) + "].";
            r.check_known(pj,
                          {"pole", "smax", "pmin_ac", "pmax_ac", "qmin_ac", "qmax_ac", "pmin_dc",
                           "pmax_dc", "imax_ac", "imin_dc", "imax_dc", "vmin_cv", "vmax_cv",
                           "loss_a", "loss_b", "loss_c", "transformer", "filter_b", "reactor"},
                          ppath);
            ConverterPole pole;
            pole.pole = parse_pole(r.str(pj, "pole", ppath), ppath + "pole");
            pole.smax = r.num(pj, "smax", ppath);
            pole.pmin_ac = r.num(pj, "pmin_ac", ppath);
            pole.pmax_ac = r.num(pj, "pmax_ac", ppath);
            pole.qmin_ac = r.num(pj, "qmin_ac", ppath);
            pole.qmax_ac = r.num(pj, "qmax_ac", ppath);
            pole.pmin_dc = r.num(pj, "pmin_dc", ppath);
            pole.pmax_dc = r.num(pj, "pmax_dc", ppath);
            pole.imax_ac = r.num(pj, "imax_ac", ppath);
            pole.imin_dc = r.num(pj, "imin_dc", ppath);
            pole.imax_dc = r.num(pj, "imax_dc", ppath);
            pole.vmin_cv = r.num(pj, "vmin_cv", ppath);
            pole.vmax_cv = r.num(pj, "vmax_cv", ppath);
            pole.loss_a = r.num(pj, "loss_a", ppath);
            pole.loss_b = r.num(pj, "loss_b", ppath);
            pole.loss_c = r.num(pj, "loss_c", ppath);
            const json& tf = r.require(pj, "transformer", ppath);
            r.check_known(tf, {"g", "b", "tap"}, ppath + "transformer.");
            pole.transformer.g = r.num(tf, "g", ppath + "transformer.");
            pole.transformer.b = r.num(tf, "b", ppath + "transformer.");
            pole.transformer.tap = r.num_or(tf, "tap", ppath + "transformer.", 1.0);
            pole.filter_b = r.num_or(pj, "filter_b", ppath, 0.0);
            const json& pr = r.require(pj, "reactor", ppath);
            r.check_known(pr, {"g", "b"}, ppath + "reactor.");
            pole.reactor.g = r.num(pr, "g", ppath + "reactor.");
            pole.reactor.b = r.num(pr, "b", ppath + "reactor.");
            conv.poles.push_back(std::move(pole));
        }
        c.converters.push_back(std::move(conv));
    }

    if (root.contains("options")) {
        const json& opts = root.at("options");
        if (!opts.is_object()) {
            throw SchemaError("options", "'options' must be an object");
        }
        r.check_known(opts, {"tol_kkt", "max_iter"}, "options.");
        c.options.tol_kkt = r.num_or(opts, "tol_kkt", "options.", 1e-8);
        if (opts.contains("max_iter")) c.options.max_iter = r.integer(opts, "max_iter", "options.");
    }

    // Per-section id uniqueness is a schema-level invariant.
    auto check_ids = [](const auto& items, const char* section) {
        std::set<std::string> seen;
        for (const auto& item : items) {
            if (!seen.insert(item.id).second) {
                throw SchemaError(std::string(section) + ".id",
                                  "duplicate id '" + item.id + "' in " + section);
            }
        }
    };
    check_ids(c.ac_buses, "ac_buses");
    check_ids(c.ac_branches, "ac_branches");
    check_ids(c.generators, "generators");
    check_ids(c.loads, "loads");
    check_ids(c.dc_buses, "dc_buses");
    check_ids(c.dc_branches, "dc_branches");
    check_ids(c.converters, "converters");

    return c;
}

CaseFile load_case(const std::string& path, bool strict) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open case file '" + path + "'");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_case(buf.str(), strict);
}

namespace {

json pole_to_json(const ConverterPole& p) {
    json j;
    j["pole"] = to_string(p.pole);
    j["smax"] = p.smax;
    j["pmin_ac"] = p.pmin_ac;
    j["pmax_ac"] = p.pmax_ac;
    j["qmin_ac"] = p.qmin_ac;
    j["qmax_ac"] = p.qmax_ac;
    j["pmin_dc"] = p.pmin_dc;
    j["pmax_dc"] = p.pmax_dc;
    j["imax_ac"] = p.imax_ac;
    j["imin_dc"] = p.imin_dc;
    j["imax_dc"] = p.imax_dc;
    j["vmin_cv"] = p.vmin_cv;
    j["vmax_cv"] = p.vmax_cv;
    j["loss_a"] = p.loss_a;
    j["loss_b"] = p.loss_b;
    j["loss_c"] = p.loss_c;
    j["transformer"] = {{"g", p.transformer.g}, {"b", p.transformer.b}, {"tap", p.transformer.tap}};
    j["filter_b"] = p.filter_b;
    j["reactor"] = {{"g", p.reactor.g}, {"b", p.reactor.b}};
    return j;
}

void refuse_non_finite(const json& j, const std::string& path) {
    if (j.is_number_float() && !std::isfinite(j.get<double>())) {
        throw std::invalid_argument("refusing to serialize non-finite value at " + path);
    }
    if (j.is_object()) {
        for (auto it = j.begin(); it != j.end(); ++it) {
            refuse_non_finite(*it, path + "." + it.key());
        }
    } else if (j.is_array()) {
        int i = 0;
        for (const auto& v : j) {
            refuse_non_finite(v, path + "[" + std::to_string(i++) + "]");
        }
    }
}

}  // namespace

std::string serialize_case(const CaseFile& c) {
    json root;
    root["schema_version"] = c.schema_version;
    root["base_mva"] = c.base_mva;
    root["base_kv"] = c.base_kv;

    root["ac_buses"] = json::array();
    for (const auto& b : c.ac_buses) {
        root["ac_buses"].push_back({{"id", b.id},
                                    {"vmin", b.vmin},
                                    {"vmax", b.vmax},
                                    {"gshunt", b.gshunt},
                                    {"bshunt", b.bshunt},
                                    {"is_reference", b.is_reference}});
    }
    root["ac_branches"] = json::array();
    for (const auto& br : c.ac_branches) {
        root["ac_branches"].push_back({{"id", br.id},
                                       {"from_bus", br.from_bus},
                                       {"to_bus", br.to_bus},
                                       {"g", br.g},
                                       {"b", br.b},
                                       {"rating", br.rating}});
    }
    root["generators"] = json::array();
    for (const auto& g : c.generators) {
        root["generators"].push_back({{"id", g.id},
                                      {"bus", g.bus},
                                      {"pmin", g.pmin},
                                      {"pmax", g.pmax},
                                      {"qmin", g.qmin},
                                      {"qmax", g.qmax},
                                      {"cost_a", g.cost_a},
                                      {"cost_b", g.cost_b},
                                      {"cost_c", g.cost_c}});
    }
    root["loads"] = json::array();
    for (const auto& load : c.loads) {
        json j;
        j["id"] = load.id;
        if (const auto* ac = std::get_if<AcAttachment>(&load.attachment)) {
            j["ac_bus"] = ac->bus;
        } else {
            const auto& dc = std::get<DcAttachment>(load.attachment);
            j["dc_bus"] = dc.bus;
            j["terminal"] = to_string(dc.terminal);
        }
        j["p"] = load.p;
        j["q"] = load.q;
        root["loads"].push_back(std::move(j));
    }
    root["dc_buses"] = json::array();
    for (const auto& b : c.dc_buses) {
        json terms = json::array();
        for (DcTerminal t : kDcTerminals) {
            if (b.has(t)) terms.push_back(to_string(t));
        }
        root["dc_buses"].push_back({{"id", b.id},
                                    {"terminals", terms},
                                    {"vmin_pole", b.vmin_pole},
                                    {"vmax_pole", b.vmax_pole},
                                    {"vmax_neutral", b.vmax_neutral}});
    }
    root["dc_branches"] = json::array();
    for (const auto& br : c.dc_branches) {
        json cond;
        for (const auto& [t, conductor] : br.conductors) {
            cond[to_string(t)] = {{"r", conductor.resistance}, {"rating", conductor.rating}};
        }
        root["dc_branches"].push_back({{"id", br.id},
                                       {"from_bus", br.from_bus},
                                       {"to_bus", br.to_bus},
                                       {"conductors", cond}});
    }
    root["converters"] = json::array();
    for (const auto& conv : c.converters) {
        json j;
        j["id"] = conv.id;
        j["ac_bus"] = conv.ac_bus;
        j["dc_bus"] = conv.dc_bus;
        j["configuration"] = to_string(conv.configuration);
        switch (conv.grounding.kind) {
            case Grounding::Kind::None: j["grounding"] = {{"kind", "none"}}; break;
            case Grounding::Kind::Rigid: j["grounding"] = {{"kind", "rigid"}}; break;
            case Grounding::Kind::Resistive:
                j["grounding"] = {{"kind", "resistive"}, {"r", conv.grounding.resistance}};
                break;
        }
        j["poles"] = json::array();
        for (const auto& p : conv.poles) {
            j["poles"].push_back(pole_to_json(p));
        }
        root["converters"].push_back(std::move(j));
    }
    root["options"] = {{"tol_kkt", c.options.tol_kkt}, {"max_iter", c.options.max_iter}};

    refuse_non_finite(root, "$");
    return root.dump(2) + "\n";
}

Network to_network(const CaseFile& c) {
    Network n;
    n.base_mva = c.base_mva;
    n.base_kv = c.base_kv;
    n.ac_buses = c.ac_buses;
    n.ac_branches = c.ac_branches;
    n.generators = c.generators;
    n.loads = c.loads;
    n.dc_buses = c.dc_buses;
    n.dc_branches = c.dc_branches;
    n.converters = c.converters;

    auto violations = validate(n);
    if (!violations.empty()) {
        std::vector<std::string> lines;
        lines.reserve(violations.size());
        for (const auto& v : violations) {
            lines.push_back(v.entity + ": " + v.rule);
        }
        throw CaseValidationError(lines, "case fails validation: " + lines.front() +
                                             (lines.size() > 1 ? " (+" +
                                                                     std::to_string(lines.size() -
                                                                                    1) +
                                                                     " more)"
                                                               : ""));
    }
    return n;
}

CaseFile from_network(const Network& network, SolverDefaults options) {
    CaseFile c;
    c.base_mva = network.base_mva;
    c.base_kv = network.base_kv;
    c.ac_buses = network.ac_buses;
    c.ac_branches = network.ac_branches;
    c.generators = network.generators;
    c.loads = network.loads;
    c.dc_buses = network.dc_buses;
    c.dc_branches = network.dc_branches;
    c.converters = network.converters;
    c.options = options;
    return c;
}

}  // namespace mcopf
