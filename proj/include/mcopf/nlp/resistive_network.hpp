#pragma once

#include <string>
#include <vector>

namespace mcopf::nlp {

/// Generic linear resistive network: nodes joined by conductances, optional
/// shunt conductances to a zero-potential reference plane, fixed-potential
/// nodes, and fixed nodal current injections. Solving yields node potentials
/// and per-edge currents. Throws SingularSystem when a component of the graph
/// is floating (no fixed node and no shunt anywhere in it).
class ResistiveNetwork {
public:
    int add_node(std::string name);
    /// Current from `from` to `to` is (u_from - u_to) / resistance.
    int add_edge(int from, int to, double resistance);
    void add_shunt(int node, double resistance);  // to the reference plane
    void fix_potential(int node, double value);
    void inject(int node, double current);  // positive into the node

    struct Result {
        std::vector<double> potential;     // per node
        std::vector<double> edge_current;  // per edge, from -> to
        std::vector<double> shunt_current; // per shunt, node -> plane
    };

    Result solve() const;

    const std::string& node_name(int node) const { return names_[node]; }
    int num_nodes() const { return static_cast<int>(names_.size()); }

private:
    struct Edge {
        int from, to;
        double resistance;
    };
    struct Shunt {
        int node;
        double resistance;
    };
    struct Fixed {
        int node;
        double value;
    };
    std::vector<std::string> names_;
    std::vector<Edge> edges_;
    std::vector<Shunt> shunts_;
    std::vector<Fixed> fixed_;
    std::vector<double> injections_;
};

}  // namespace mcopf::nlp
