#include "mcopf/nlp/resistive_network.hpp"

#include <cmath>
#include <queue>
#include <stdexcept>

#include <Eigen/Dense>

#include "mcopf/errors.hpp"

namespace mcopf::nlp {

int ResistiveNetwork::add_node(std::string name) {
    names_.push_back(std::move(name));
    injections_.push_back(0.0);
    return static_cast<int>(names_.size()) - 1;
}

int ResistiveNetwork::add_edge(int from, int to, double resistance) {
    if (resistance <= 0.0) {
        throw std::invalid_argument("edge resistance must be positive");
    }
    edges_.push_back({from, to, resistance});
    return static_cast<int>(edges_.size()) - 1;
}

void ResistiveNetwork::add_shunt(int node, double resistance) {
    if (resistance <= 0.0) {
        throw std::invalid_argument("shunt resistance must be positive");
    }
    shunts_.push_back({node, resistance});
}

void ResistiveNetwork::fix_potential(int node, double value) { fixed_.push_back({node, value}); }

void ResistiveNetwork::inject(int node, double current) { injections_[node] += current; }

ResistiveNetwork::Result ResistiveNetwork::solve() const {
    const int n = num_nodes();

    // Every connected component must be anchored by a fixed potential or a
    // shunt, otherwise its potential level is undetermined.
    {
        std::vector<std::vector<int>> adj(n);
        for (const auto& e : edges_) {
            adj[e.from].push_back(e.to);
            adj[e.to].push_back(e.from);
        }
        std::vector<int> comp(n, -1);
        int nc = 0;
        for (int s = 0; s < n; ++s) {
            if (comp[s] >= 0) continue;
            std::queue<int> q;
            q.push(s);
            comp[s] = nc;
            while (!q.empty()) {
                int u = q.front();
                q.pop();
                for (int v : adj[u]) {
                    if (comp[v] < 0) {
                        comp[v] = nc;
                        q.push(v);
                    }
                }
            }
            ++nc;
        }
        std::vector<bool> anchored(nc, false);
        for (const auto& f : fixed_) anchored[comp[f.node]] = true;
        for (const auto& s : shunts_) anchored[comp[s.node]] = true;
        for (int c = 0; c < nc; ++c) {
            if (!anchored[c]) {
                for (int i = 0; i < n; ++i) {
                    if (comp[i] == c) {
                        throw SingularSystem("floating network component containing node '" +
                                             names_[i] + "'");
                    }
                }
            }
        }
    }

    std::vector<bool> is_fixed(n, false);
    std::vector<double> fixed_value(n, 0.0);
    for (const auto& f : fixed_) {
        is_fixed[f.node] = true;
        fixed_value[f.node] = f.value;
    }

    std::vector<int> unknown_of(n, -1);
    int nu = 0;
    for (int i = 0; i < n; ++i) {
        if (!is_fixed[i]) unknown_of[i] = nu++;
    }

    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nu);
    for (int i = 0; i < n; ++i) {
        if (!is_fixed[i]) rhs[unknown_of[i]] = injections_[i];
    }

    auto stamp = [&](int a, int b, double g) {
        // conductance g between nodes a and b
        if (!is_fixed[a]) G(unknown_of[a], unknown_of[a]) += g;
        if (!is_fixed[b]) G(unknown_of[b], unknown_of[b]) += g;
        if (!is_fixed[a] && !is_fixed[b]) {
            G(unknown_of[a], unknown_of[b]) -= g;
            G(unknown_of[b], unknown_of[a]) -= g;
        } else if (is_fixed[a] && !is_fixed[b]) {
            rhs[unknown_of[b]] += g * fixed_value[a];
        } else if (!is_fixed[a] && is_fixed[b]) {
            rhs[unknown_of[a]] += g * fixed_value[b];
        }
    };

    for (const auto& e : edges_) stamp(e.from, e.to, 1.0 / e.resistance);
    for (const auto& s : shunts_) {
        if (!is_fixed[s.node]) {
            G(unknown_of[s.node], unknown_of[s.node]) += 1.0 / s.resistance;
        }
    }

    Eigen::VectorXd u_unknown;
    if (nu > 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
        if (ldlt.info() != Eigen::Success) {
            throw SingularSystem("conductance matrix factorization failed");
        }
        u_unknown = ldlt.solve(rhs);
        if (!u_unknown.allFinite()) {
            throw SingularSystem("conductance system is singular");
        }
        // LDLT accepts semidefinite input; reject solutions that do not solve.
        if ((G * u_unknown - rhs).cwiseAbs().maxCoeff() >
            1e-8 * std::max(1.0, rhs.cwiseAbs().maxCoeff())) {
            throw SingularSystem("conductance system is singular");
        }
    }

    Result result;
    result.potential.resize(n);
    for (int i = 0; i < n; ++i) {
        result.potential[i] = is_fixed[i] ? fixed_value[i] : u_unknown[unknown_of[i]];
    }
    result.edge_current.reserve(edges_.size());
    for (const auto& e : edges_) {
        result.edge_current.push_back(
            (result.potential[e.from] - result.potential[e.to]) / e.resistance);
    }
    result.shunt_current.reserve(shunts_.size());
    for (const auto& s : shunts_) {
        result.shunt_current.push_back(result.potential[s.node] / s.resistance);
    }
    return result;
}

}  // namespace mcopf::nlp
