#include "mcopf/network.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <sstream>
#include <stdexcept>

#include "mcopf/errors.hpp"

namespace mcopf {

const char* to_string(DcTerminal t) {
    switch (t) {
        case DcTerminal::Positive: return "positive";
        case DcTerminal::Negative: return "negative";
        case DcTerminal::Neutral: return "neutral";
    }
    return "?";
}

const char* to_string(PoleKind p) {
    return p == PoleKind::Positive ? "positive" : "negative";
}

DcTerminal terminal_of(PoleKind p) {
    return p == PoleKind::Positive ? DcTerminal::Positive : DcTerminal::Negative;
}

const char* to_string(ConverterConfig c) {
    switch (c) {
        case ConverterConfig::Bipolar: return "bipolar";
        case ConverterConfig::AsymMonopolePositive: return "asym_monopole_positive";
        case ConverterConfig::AsymMonopoleNegative: return "asym_monopole_negative";
        case ConverterConfig::SymMonopole: return "sym_monopole";
    }
    return "?";
}

std::set<DcTerminal> required_terminals(ConverterConfig c) {
    switch (c) {
        case ConverterConfig::Bipolar:
            return {DcTerminal::Positive, DcTerminal::Negative, DcTerminal::Neutral};
        case ConverterConfig::AsymMonopolePositive:
            return {DcTerminal::Positive, DcTerminal::Neutral};
        case ConverterConfig::AsymMonopoleNegative:
            return {DcTerminal::Negative, DcTerminal::Neutral};
        case ConverterConfig::SymMonopole:
            return {DcTerminal::Positive, DcTerminal::Negative};
    }
    return {};
}

std::vector<PoleKind> poles_of(ConverterConfig c) {
    switch (c) {
        case ConverterConfig::Bipolar:
        case ConverterConfig::SymMonopole:
            return {PoleKind::Positive, PoleKind::Negative};
        case ConverterConfig::AsymMonopolePositive:
            return {PoleKind::Positive};
        case ConverterConfig::AsymMonopoleNegative:
            return {PoleKind::Negative};
    }
    return {};
}

bool has_neutral_connection(ConverterConfig c) {
    return c != ConverterConfig::SymMonopole;
}

const ConverterPole* ConverterStation::pole(PoleKind k) const {
    for (const auto& p : poles) {
        if (p.pole == k) return &p;
    }
    return nullptr;
}

namespace {

bool finite(double v) { return std::isfinite(v); }

template <typename T>
void check_unique_ids(const std::vector<T>& items, const char* section,
                      std::vector<Violation>& out) {
    std::set<std::string> seen;
    for (const auto& item : items) {
        if (!seen.insert(item.id).second) {
            out.push_back({item.id, std::string("duplicate id in ") + section});
        }
    }
}

}  // namespace

std::vector<Violation> validate(const Network& network) {
    std::vector<Violation> out;

    std::unordered_map<std::string, int> ac_index;
    std::unordered_map<std::string, int> dc_index;
    for (int i = 0; i < static_cast<int>(network.ac_buses.size()); ++i) {
        ac_index.emplace(network.ac_buses[i].id, i);
    }
    for (int i = 0; i < static_cast<int>(network.dc_buses.size()); ++i) {
        dc_index.emplace(network.dc_buses[i].id, i);
    }

    check_unique_ids(network.ac_buses, "ac_buses", out);
    check_unique_ids(network.ac_branches, "ac_branches", out);
    check_unique_ids(network.generators, "generators", out);
    check_unique_ids(network.loads, "loads", out);
    check_unique_ids(network.dc_buses, "dc_buses", out);
    check_unique_ids(network.dc_branches, "dc_branches", out);
    check_unique_ids(network.converters, "converters", out);

    for (const auto& bus : network.ac_buses) {
        if (!(bus.vmin > 0.0 && bus.vmin <= bus.vmax)) {
            out.push_back({bus.id, "ac bus voltage bounds must satisfy 0 < vmin <= vmax"});
        }
        if (!finite(bus.gshunt) || !finite(bus.bshunt)) {
            out.push_back({bus.id, "ac bus shunt admittance must be finite"});
        }
    }

    for (const auto& br : network.ac_branches) {
        if (br.from_bus == br.to_bus) {
            out.push_back({br.id, "ac branch endpoints must differ"});
        }
        if (!(br.rating > 0.0)) {
            out.push_back({br.id, "ac branch rating must be positive"});
        }
        if (br.g == 0.0 && br.b == 0.0) {
            out.push_back({br.id, "ac branch admittance must be nonzero"});
        }
        if (ac_index.find(br.from_bus) == ac_index.end()) {
            out.push_back({br.id, "ac branch from_bus '" + br.from_bus + "' does not exist"});
        }
        if (ac_index.find(br.to_bus) == ac_index.end()) {
            out.push_back({br.id, "ac branch to_bus '" + br.to_bus + "' does not exist"});
        }
    }

    if (network.generators.empty()) {
        out.push_back({"network", "at least one generator is required"});
    }
    for (const auto& gen : network.generators) {
        if (!(gen.pmin <= gen.pmax)) {
            out.push_back({gen.id, "generator requires pmin <= pmax"});
        }
        if (!(gen.qmin <= gen.qmax)) {
            out.push_back({gen.id, "generator requires qmin <= qmax"});
        }
        if (!(gen.cost_c >= 0.0)) {
            out.push_back({gen.id, "generator quadratic cost coefficient must be nonnegative"});
        }
        if (ac_index.find(gen.bus) == ac_index.end()) {
            out.push_back({gen.id, "generator bus '" + gen.bus + "' does not exist"});
        }
    }

    for (const auto& load : network.loads) {
        if (const auto* ac = std::get_if<AcAttachment>(&load.attachment)) {
            if (ac_index.find(ac->bus) == ac_index.end()) {
                out.push_back({load.id, "load ac bus '" + ac->bus + "' does not exist"});
            }
        } else {
            const auto& dc = std::get<DcAttachment>(load.attachment);
            auto it = dc_index.find(dc.bus);
            if (it == dc_index.end()) {
                out.push_back({load.id, "load dc bus '" + dc.bus + "' does not exist"});
            } else if (!network.dc_buses[it->second].has(dc.terminal)) {
                out.push_back({load.id, std::string("load terminal '") + to_string(dc.terminal) +
                                            "' not present at dc bus '" + dc.bus + "'"});
            }
            if (load.q != 0.0) {
                out.push_back({load.id, "dc-attached load must have q = 0"});
            }
        }
    }

    for (const auto& bus : network.dc_buses) {
        if (!(bus.vmin_pole > 0.0 && bus.vmin_pole <= bus.vmax_pole)) {
            out.push_back({bus.id, "dc bus pole bounds must satisfy 0 < vmin_pole <= vmax_pole"});
        }
        if (!(bus.vmax_neutral >= 0.0)) {
            out.push_back({bus.id, "dc bus neutral bound must be nonnegative"});
        }
        if (bus.terminals.empty()) {
            out.push_back({bus.id, "dc bus must carry at least one terminal"});
        }
    }

    for (const auto& br : network.dc_branches) {
        if (br.from_bus == br.to_bus) {
            out.push_back({br.id, "dc branch endpoints must differ"});
        }
        if (br.conductors.empty()) {
            out.push_back({br.id, "dc branch must carry at least one conductor"});
        }
        auto from_it = dc_index.find(br.from_bus);
        auto to_it = dc_index.find(br.to_bus);
        if (from_it == dc_index.end()) {
            out.push_back({br.id, "dc branch from_bus '" + br.from_bus + "' does not exist"});
        }
        if (to_it == dc_index.end()) {
            out.push_back({br.id, "dc branch to_bus '" + br.to_bus + "' does not exist"});
        }
        for (const auto& [terminal, conductor] : br.conductors) {
            if (!(conductor.resistance > 0.0)) {
                out.push_back({br.id, std::string("conductor '") + to_string(terminal) +
                                          "' resistance must be positive"});
            }
            if (!(conductor.rating > 0.0)) {
                out.push_back({br.id, std::string("conductor '") + to_string(terminal) +
                                          "' rating must be positive"});
            }
            if (from_it != dc_index.end() && !network.dc_buses[from_it->second].has(terminal)) {
                out.push_back({br.id, std::string("conductor '") + to_string(terminal) +
                                          "' terminal missing at bus '" + br.from_bus + "'"});
            }
            if (to_it != dc_index.end() && !network.dc_buses[to_it->second].has(terminal)) {
                out.push_back({br.id, std::string("conductor '") + to_string(terminal) +
                                          "' terminal missing at bus '" + br.to_bus + "'"});
            }
        }
    }

    for (const auto& conv : network.converters) {
        if (ac_index.find(conv.ac_bus) == ac_index.end()) {
            out.push_back({conv.id, "converter ac bus '" + conv.ac_bus + "' does not exist"});
        }
        auto dc_it = dc_index.find(conv.dc_bus);
        if (dc_it == dc_index.end()) {
            out.push_back({conv.id, "converter dc bus '" + conv.dc_bus + "' does not exist"});
        }

        auto expected = poles_of(conv.configuration);
        bool poles_ok = conv.poles.size() == expected.size();
        if (poles_ok) {
            for (PoleKind k : expected) {
                if (conv.pole(k) == nullptr) poles_ok = false;
            }
        }
        if (!poles_ok) {
            out.push_back({conv.id, std::string("configuration '") + to_string(conv.configuration) +
                                        "' requires exactly its named pole(s)"});
        }

        if (dc_it != dc_index.end()) {
            const auto& bus = network.dc_buses[dc_it->second];
            std::set<DcTerminal> required = network.single_conductor_view
                                                ? std::set<DcTerminal>{DcTerminal::Positive}
                                                : required_terminals(conv.configuration);
            for (DcTerminal t : required) {
                if (!bus.has(t)) {
                    out.push_back({conv.id, std::string("configuration '") +
                                                to_string(conv.configuration) +
                                                "' requires terminal '" + to_string(t) +
                                                "' at dc bus '" + conv.dc_bus + "'"});
                }
            }
        }

        for (const auto& pole : conv.poles) {
            if (!(pole.smax > 0.0)) {
                out.push_back({conv.id, "pole apparent rating must be positive"});
            }
            if (pole.loss_a < 0.0 || pole.loss_c < 0.0) {
                out.push_back({conv.id, "pole loss coefficients a and c must be nonnegative"});
            }
            if (!(pole.transformer.tap > 0.0)) {
                out.push_back({conv.id, "pole transformer tap must be positive"});
            }
            if (!(pole.vmin_cv > 0.0 && pole.vmin_cv <= pole.vmax_cv)) {
                out.push_back({conv.id, "pole internal voltage bounds must satisfy 0 < min <= max"});
            }
        }

        if (conv.grounding.kind == Grounding::Kind::Resistive &&
            !(conv.grounding.resistance > 0.0)) {
            out.push_back({conv.id, "resistive grounding requires resistance > 0"});
        }
        if (conv.grounding.kind != Grounding::Kind::None && dc_it != dc_index.end() &&
            !network.single_conductor_view &&
            !network.dc_buses[dc_it->second].has(DcTerminal::Neutral)) {
            out.push_back({conv.id, "grounding requires a neutral terminal at the dc bus"});
        }
    }

    // Reference-bus rule: exactly one per connected AC component.
    if (!network.ac_buses.empty()) {
        const int n = static_cast<int>(network.ac_buses.size());
        std::vector<std::vector<int>> adj(n);
        for (const auto& br : network.ac_branches) {
            auto f = ac_index.find(br.from_bus);
            auto t = ac_index.find(br.to_bus);
            if (f != ac_index.end() && t != ac_index.end()) {
                adj[f->second].push_back(t->second);
                adj[t->second].push_back(f->second);
            }
        }
        std::vector<int> comp(n, -1);
        int num_comp = 0;
        for (int s = 0; s < n; ++s) {
            if (comp[s] >= 0) continue;
            std::queue<int> q;
            q.push(s);
            comp[s] = num_comp;
            while (!q.empty()) {
                int u = q.front();
                q.pop();
                for (int v : adj[u]) {
                    if (comp[v] < 0) {
                        comp[v] = num_comp;
                        q.push(v);
                    }
                }
            }
            ++num_comp;
        }
        std::vector<int> refs(num_comp, 0);
        for (int i = 0; i < n; ++i) {
            if (network.ac_buses[i].is_reference) refs[comp[i]]++;
        }
        for (int c = 0; c < num_comp; ++c) {
            if (refs[c] != 1) {
                std::string any;
                for (int i = 0; i < n; ++i) {
                    if (comp[i] == c) {
                        any = network.ac_buses[i].id;
                        break;
                    }
                }
                out.push_back({any, refs[c] == 0
                                        ? "ac component has no reference bus"
                                        : "ac component has more than one reference bus"});
            }
        }
    }

    return out;
}

NetworkIndex::NetworkIndex(const Network& network) {
    const int nac = static_cast<int>(network.ac_buses.size());
    const int ndc = static_cast<int>(network.dc_buses.size());
    for (int i = 0; i < nac; ++i) ac_bus_index_.emplace(network.ac_buses[i].id, i);
    for (int i = 0; i < ndc; ++i) dc_bus_index_.emplace(network.dc_buses[i].id, i);

    ac_branches_at_.resize(nac);
    generators_at_.resize(nac);
    ac_loads_at_.resize(nac);
    converters_at_ac_.resize(nac);
    dc_branches_at_.resize(ndc);
    converters_at_dc_.resize(ndc);
    dc_loads_at_.resize(ndc);

    for (int i = 0; i < static_cast<int>(network.ac_branches.size()); ++i) {
        const auto& br = network.ac_branches[i];
        ac_branches_at_[ac_bus(br.from_bus)].push_back({i, true});
        ac_branches_at_[ac_bus(br.to_bus)].push_back({i, false});
    }
    for (int i = 0; i < static_cast<int>(network.generators.size()); ++i) {
        generators_at_[ac_bus(network.generators[i].bus)].push_back(i);
    }
    for (int i = 0; i < static_cast<int>(network.loads.size()); ++i) {
        const auto& load = network.loads[i];
        if (const auto* ac = std::get_if<AcAttachment>(&load.attachment)) {
            ac_loads_at_[ac_bus(ac->bus)].push_back(i);
        } else {
            dc_loads_at_[dc_bus(std::get<DcAttachment>(load.attachment).bus)].push_back(i);
        }
    }
    for (int i = 0; i < static_cast<int>(network.dc_branches.size()); ++i) {
        const auto& br = network.dc_branches[i];
        dc_branches_at_[dc_bus(br.from_bus)].push_back({i, true});
        dc_branches_at_[dc_bus(br.to_bus)].push_back({i, false});
    }
    for (int i = 0; i < static_cast<int>(network.converters.size()); ++i) {
        converters_at_ac_[ac_bus(network.converters[i].ac_bus)].push_back(i);
        converters_at_dc_[dc_bus(network.converters[i].dc_bus)].push_back(i);
    }

    ac_component_.assign(nac, -1);
    for (int s = 0; s < nac; ++s) {
        if (ac_component_[s] >= 0) continue;
        std::queue<int> q;
        q.push(s);
        ac_component_[s] = num_ac_components_;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (const auto& [bi, is_from] : ac_branches_at_[u]) {
                const auto& br = network.ac_branches[bi];
                int v = ac_bus(is_from ? br.to_bus : br.from_bus);
                if (ac_component_[v] < 0) {
                    ac_component_[v] = num_ac_components_;
                    q.push(v);
                }
            }
        }
        ++num_ac_components_;
    }
}

int NetworkIndex::ac_bus(const std::string& id) const {
    auto it = ac_bus_index_.find(id);
    if (it == ac_bus_index_.end()) {
        throw std::out_of_range("unknown ac bus '" + id + "'");
    }
    return it->second;
}

int NetworkIndex::dc_bus(const std::string& id) const {
    auto it = dc_bus_index_.find(id);
    if (it == dc_bus_index_.end()) {
        throw std::out_of_range("unknown dc bus '" + id + "'");
    }
    return it->second;
}

namespace {

bool poles_identical(const ConverterPole& a, const ConverterPole& b) {
    return a.smax == b.smax && a.pmin_ac == b.pmin_ac && a.pmax_ac == b.pmax_ac &&
           a.qmin_ac == b.qmin_ac && a.qmax_ac == b.qmax_ac && a.pmin_dc == b.pmin_dc &&
           a.pmax_dc == b.pmax_dc && a.imax_ac == b.imax_ac && a.imin_dc == b.imin_dc &&
           a.imax_dc == b.imax_dc && a.vmin_cv == b.vmin_cv && a.vmax_cv == b.vmax_cv &&
           a.loss_a == b.loss_a && a.loss_b == b.loss_b && a.loss_c == b.loss_c &&
           a.transformer.g == b.transformer.g && a.transformer.b == b.transformer.b &&
           a.transformer.tap == b.transformer.tap && a.filter_b == b.filter_b &&
           a.reactor.g == b.reactor.g && a.reactor.b == b.reactor.b;
}

/// Lump `count` identical parallel conversion paths into one.
ConverterPole lump_pole(const ConverterPole& base, int count) {
    ConverterPole out = base;
    const double n = static_cast<double>(count);
    out.pole = PoleKind::Positive;
    out.smax *= n;
    out.pmin_ac *= n;
    out.pmax_ac *= n;
    out.qmin_ac *= n;
    out.qmax_ac *= n;
    out.pmin_dc *= n;
    out.pmax_dc *= n;
    out.imax_ac *= n;
    out.imin_dc *= n;
    out.imax_dc *= n;
    out.loss_a *= n;
    out.loss_c /= n;
    out.transformer.g *= n;
    out.transformer.b *= n;
    out.filter_b *= n;
    out.reactor.g *= n;
    out.reactor.b *= n;
    return out;
}

BalancedEquivalent aggregate(const Network& network, bool strict) {
    if (network.single_conductor_view) {
        BalancedEquivalent out{network, {}};
        out.map.converter_pole_count.assign(network.converters.size(), 1);
        out.map.branch_pole_count.assign(network.dc_branches.size(), 1);
        return out;
    }

    BalancedEquivalent out;
    Network& view = out.network;
    view.base_mva = network.base_mva;
    view.base_kv = network.base_kv;
    view.ac_buses = network.ac_buses;
    view.ac_branches = network.ac_branches;
    view.generators = network.generators;
    view.single_conductor_view = true;

    for (const auto& load : network.loads) {
        if (strict && std::holds_alternative<DcAttachment>(load.attachment)) {
            throw NotBalanceable(load.id, "load '" + load.id +
                                              "' attaches to a dc terminal; the balanced "
                                              "equivalent requires a pole-symmetric network");
        }
        Load copy = load;
        if (auto* dc = std::get_if<DcAttachment>(&copy.attachment)) {
            dc->terminal = DcTerminal::Positive;
        }
        view.loads.push_back(std::move(copy));
    }

    for (const auto& bus : network.dc_buses) {
        DcBus b = bus;
        b.terminals = {DcTerminal::Positive};
        b.vmax_neutral = 0.0;
        view.dc_buses.push_back(std::move(b));
    }

    for (const auto& br : network.dc_branches) {
        const bool has_pos = br.has(DcTerminal::Positive);
        const bool has_neg = br.has(DcTerminal::Negative);
        if (strict) {
            if (!has_pos || !has_neg) {
                throw NotBalanceable(br.id, "dc branch '" + br.id +
                                                "' lacks a positive/negative conductor pair");
            }
            if (br.conductors.at(DcTerminal::Positive).resistance !=
                br.conductors.at(DcTerminal::Negative).resistance) {
                throw NotBalanceable(br.id,
                                     "dc branch '" + br.id + "' pole resistances differ");
            }
        }
        int poles = (has_pos ? 1 : 0) + (has_neg ? 1 : 0);
        out.map.branch_pole_count.push_back(poles);
        if (poles == 0) continue;  // neutral-only branch carries nothing in a balanced view
        double r_sum = 0.0, rating_sum = 0.0;
        if (has_pos) {
            r_sum += br.conductors.at(DcTerminal::Positive).resistance;
            rating_sum += br.conductors.at(DcTerminal::Positive).rating;
        }
        if (has_neg) {
            r_sum += br.conductors.at(DcTerminal::Negative).resistance;
            rating_sum += br.conductors.at(DcTerminal::Negative).rating;
        }
        const double r_mean = r_sum / poles;
        DcBranch agg;
        agg.id = br.id;
        agg.from_bus = br.from_bus;
        agg.to_bus = br.to_bus;
        agg.conductors[DcTerminal::Positive] = {r_mean / poles, rating_sum};
        view.dc_branches.push_back(std::move(agg));
    }

    for (const auto& conv : network.converters) {
        if (strict) {
            if (conv.configuration != ConverterConfig::Bipolar) {
                throw NotBalanceable(conv.id, "converter '" + conv.id + "' is not bipolar");
            }
            if (conv.poles.size() != 2 || !poles_identical(conv.poles[0], conv.poles[1])) {
                throw NotBalanceable(conv.id,
                                     "converter '" + conv.id + "' pole parameters differ");
            }
        }
        const int poles = static_cast<int>(conv.poles.size());
        out.map.converter_pole_count.push_back(poles);
        ConverterStation lumped;
        lumped.id = conv.id;
        lumped.ac_bus = conv.ac_bus;
        lumped.dc_bus = conv.dc_bus;
        lumped.configuration = ConverterConfig::AsymMonopolePositive;
        lumped.grounding = {Grounding::Kind::None, 0.0};
        lumped.poles.push_back(lump_pole(conv.poles.front(), poles));
        view.converters.push_back(std::move(lumped));
    }

    return out;
}

}  // namespace

BalancedEquivalent derive_balanced_equivalent(const Network& network) {
    return aggregate(network, true);
}

BalancedEquivalent derive_balanced_view_forced(const Network& network) {
    return aggregate(network, false);
}

}  // namespace mcopf
