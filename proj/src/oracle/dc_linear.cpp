#include "mcopf/oracle/dc_linear.hpp"

#include <stdexcept>

#include "mcopf/errors.hpp"
#include "mcopf/nlp/resistive_network.hpp"

namespace mcopf::oracle {

double DcLinearResult::voltage(const std::string& bus, DcTerminal t) const {
    for (const auto& v : voltages) {
        if (v.bus == bus && v.terminal == t) return v.voltage;
    }
    throw std::out_of_range("no terminal " + bus + ":" + to_string(t) + " in result");
}

DcLinearResult solve_linear_dc(const Network& network,
                               const std::vector<DcInjection>& injections,
                               const std::vector<DcReference>& references) {
    NetworkIndex idx(network);
    nlp::ResistiveNetwork rn;

    // One node per present (bus, terminal).
    std::vector<std::array<int, 3>> node(network.dc_buses.size(), {-1, -1, -1});
    auto slot = [](DcTerminal t) {
        return t == DcTerminal::Positive ? 0 : (t == DcTerminal::Negative ? 1 : 2);
    };
    for (std::size_t e = 0; e < network.dc_buses.size(); ++e) {
        for (DcTerminal t : kDcTerminals) {
            if (network.dc_buses[e].has(t)) {
                node[e][slot(t)] =
                    rn.add_node(network.dc_buses[e].id + ":" + to_string(t));
            }
        }
    }

    struct EdgeRef {
        std::string branch;
        DcTerminal terminal;
        int edge;
    };
    std::vector<EdgeRef> edge_refs;
    for (const auto& br : network.dc_branches) {
        const int e = idx.dc_bus(br.from_bus);
        const int f = idx.dc_bus(br.to_bus);
        for (const auto& [t, cond] : br.conductors) {
            const int a = node[e][slot(t)];
            const int b = node[f][slot(t)];
            if (a < 0 || b < 0) {
                throw std::invalid_argument("conductor terminal missing at branch " + br.id);
            }
            edge_refs.push_back({br.id, t, rn.add_edge(a, b, cond.resistance)});
        }
    }

    struct ShuntRef {
        std::string converter;
        int index;
    };
    std::vector<ShuntRef> shunt_refs;
    std::vector<std::pair<std::string, int>> rigid_nodes;  // converter id, node
    int shunt_count = 0;
    for (const auto& conv : network.converters) {
        if (conv.grounding.kind == Grounding::Kind::None) continue;
        const int e = idx.dc_bus(conv.dc_bus);
        const int n0 = node[e][2];
        if (n0 < 0) {
            throw std::invalid_argument("grounded converter '" + conv.id +
                                        "' at a bus without a neutral terminal");
        }
        if (conv.grounding.kind == Grounding::Kind::Rigid) {
            rn.fix_potential(n0, 0.0);
            rigid_nodes.push_back({conv.id, n0});
        } else {
            rn.add_shunt(n0, conv.grounding.resistance);
            shunt_refs.push_back({conv.id, shunt_count++});
        }
    }
    for (const auto& ref : references) {
        const int n = node[idx.dc_bus(ref.bus)][slot(ref.terminal)];
        if (n < 0) {
            throw std::invalid_argument("reference terminal missing: " + ref.bus);
        }
        rn.fix_potential(n, ref.voltage);
    }

    std::vector<double> injected(rn.num_nodes(), 0.0);
    for (const auto& inj : injections) {
        const int n = node[idx.dc_bus(inj.bus)][slot(inj.terminal)];
        if (n < 0) {
            throw std::invalid_argument("injection terminal missing: " + inj.bus + ":" +
                                        to_string(inj.terminal));
        }
        rn.inject(n, inj.current);
        injected[n] += inj.current;
    }

    auto rs = rn.solve();

    DcLinearResult out;
    for (std::size_t e = 0; e < network.dc_buses.size(); ++e) {
        for (DcTerminal t : kDcTerminals) {
            const int n = node[e][slot(t)];
            if (n >= 0) {
                out.voltages.push_back({network.dc_buses[e].id, t, rs.potential[n]});
            }
        }
    }
    for (const auto& er : edge_refs) {
        const double i = rs.edge_current[er.edge];
        double r = 0.0;
        for (const auto& br : network.dc_branches) {
            if (br.id == er.branch) r = br.conductors.at(er.terminal).resistance;
        }
        out.currents.push_back({er.branch, er.terminal, i, -i, r * i * i});
    }
    for (const auto& sr : shunt_refs) {
        out.ground_current[sr.converter] = rs.shunt_current[sr.index];
    }
    // A rigid ground absorbs whatever the current balance at its node
    // requires: injections plus edge arrivals. Co-located rigid grounds split
    // the duty evenly (their parallel zero resistances make it indeterminate).
    std::map<int, int> rigid_count;
    for (const auto& [conv_id, n0] : rigid_nodes) rigid_count[n0]++;
    for (const auto& [conv_id, n0] : rigid_nodes) {
        double sum = injected[n0];
        int ei = 0;
        for (const auto& br : network.dc_branches) {
            const int e = idx.dc_bus(br.from_bus);
            const int f = idx.dc_bus(br.to_bus);
            for (const auto& [t, cond] : br.conductors) {
                (void)cond;
                const int a = node[e][slot(t)];
                const int b = node[f][slot(t)];
                if (a == n0) sum -= rs.edge_current[ei];
                if (b == n0) sum += rs.edge_current[ei];
                ++ei;
            }
        }
        out.ground_current[conv_id] = sum / rigid_count[n0];
    }
    return out;
}

}  // namespace mcopf::oracle
