#include "mcopf/oracle/brute_force.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

#include <Eigen/Dense>

#include "mcopf/errors.hpp"
#include "mcopf/oracle/audit.hpp"

namespace mcopf::oracle {

namespace {

/// Mutable physical point with a registry of unknown slots. The equality
/// residuals come from the audit evaluators, so this search shares no code
/// with the NLP formulation.
class PhysicalSystem {
public:
    PhysicalSystem(const Network& net) : net_(net), idx_(net) {
        build_template();
    }

    Solution& solution() { return sol_; }
    const Network& network() const { return net_; }

    void register_unknowns(const std::set<const double*>& fixed) {
        unknowns_.clear();
        auto reg = [&](double& v) {
            if (fixed.count(&v) == 0) unknowns_.push_back(&v);
        };
        for (std::size_t i = 0; i < net_.ac_buses.size(); ++i) {
            const auto& bus = net_.ac_buses[i];
            if (bus.vmin != bus.vmax) reg(sol_.ac_buses[i].vm);
            if (!bus.is_reference) reg(sol_.ac_buses[i].va);
        }
        for (std::size_t i = 0; i < net_.generators.size(); ++i) {
            const auto& gen = net_.generators[i];
            if (gen.pmin != gen.pmax) reg(sol_.generators[i].p);
            if (gen.qmin != gen.qmax) reg(sol_.generators[i].q);
        }
        for (auto& br : sol_.ac_branches) {
            reg(br.p_from);
            reg(br.q_from);
            reg(br.p_to);
            reg(br.q_to);
        }
        std::set<std::string> rigid_buses;
        for (const auto& conv : net_.converters) {
            if (conv.grounding.kind == Grounding::Kind::Rigid) rigid_buses.insert(conv.dc_bus);
        }
        for (auto& t : sol_.dc_terminals) {
            const auto& bus = net_.dc_buses[idx_.dc_bus(t.bus)];
            if (t.terminal == DcTerminal::Neutral) {
                if (bus.vmax_neutral == 0.0 || rigid_buses.count(t.bus) > 0) {
                    t.voltage = 0.0;
                    continue;
                }
            } else if (bus.vmin_pole == bus.vmax_pole) {
                t.voltage = t.terminal == DcTerminal::Negative ? -bus.vmin_pole : bus.vmin_pole;
                continue;
            }
            reg(t.voltage);
        }
        for (auto& c : sol_.dc_conductors) {
            reg(c.i_from);
            reg(c.i_to);
        }
        for (auto& l : sol_.dc_loads) {
            reg(l.current);
        }
        for (std::size_t ci = 0; ci < net_.converters.size(); ++ci) {
            const auto& conv = net_.converters[ci];
            auto& cr = sol_.converters[ci];
            for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                const auto& pole = conv.poles[k];
                auto& pr = cr.poles[k];
                reg(pr.p_grid);
                reg(pr.q_grid);
                reg(pr.p_tf_to);
                reg(pr.q_tf_to);
                reg(pr.u_f);
                reg(pr.th_f);
                reg(pr.p_pr_from);
                reg(pr.q_pr_from);
                reg(pr.p_pr_to);
                reg(pr.q_pr_to);
                if (pole.vmin_cv != pole.vmax_cv) {
                    reg(pr.u_cv);
                } else {
                    pr.u_cv = pole.vmin_cv;
                }
                reg(pr.th_cv);
                reg(pr.p_ac);
                if (pole.qmin_ac != pole.qmax_ac) {
                    reg(pr.q_ac);
                } else {
                    pr.q_ac = pole.qmin_ac;
                }
                reg(pr.i_ac);
                if (pole.pmin_dc != pole.pmax_dc) reg(pr.p_dc);
                reg(pr.i_dc);
                if (cr.has_neutral) reg(pr.i_dc_neutral);
            }
            if (cr.has_neutral) {
                reg(cr.i_neutral);
                reg(cr.p_neutral);
            }
            if (cr.has_ground) reg(cr.i_ground);
        }
    }

    int num_unknowns() const { return static_cast<int>(unknowns_.size()); }

    void get(Eigen::VectorXd& u) const {
        u.resize(num_unknowns());
        for (int i = 0; i < num_unknowns(); ++i) u[i] = *unknowns_[i];
    }

    void set(const Eigen::VectorXd& u) {
        for (int i = 0; i < num_unknowns(); ++i) *unknowns_[i] = u[i];
    }

    /// Equality residual subset: all audited equalities except the reference
    /// rows (angles pinned), rigid-ground rows (voltage pinned), and the
    /// redundant station current sum.
    Eigen::VectorXd residuals() {
        refresh_losses();
        AuditReport report = audit(net_, sol_, 1e-6);
        if (residual_index_.empty()) {
            for (std::size_t i = 0; i < report.entries.size(); ++i) {
                const auto& e = report.entries[i];
                if (e.category == "bound" || e.category == "ref") continue;
                if (e.category == "grounding" && e.detail == "rigid") continue;
                if (e.category == "conv_tie" && e.detail == "station_sum") continue;
                residual_index_.push_back(static_cast<int>(i));
            }
        }
        Eigen::VectorXd r(residual_index_.size());
        for (std::size_t k = 0; k < residual_index_.size(); ++k) {
            r[k] = report.entries[residual_index_[k]].residual;
        }
        return r;
    }

    bool feasible(double tol) {
        refresh_losses();
        return audit(net_, sol_, tol).flag_count() == 0;
    }

    double cost() const {
        double c = 0.0;
        for (std::size_t i = 0; i < net_.generators.size(); ++i) {
            const auto& g = net_.generators[i];
            const double p = sol_.generators[i].p;
            c += g.cost_a + g.cost_b * p + g.cost_c * p * p;
        }
        return c;
    }

    /// Flat-ish start; pinned values were set during registration.
    void reset_start() {
        for (std::size_t i = 0; i < net_.ac_buses.size(); ++i) {
            const auto& bus = net_.ac_buses[i];
            if (bus.vmin != bus.vmax) sol_.ac_buses[i].vm = 0.5 * (bus.vmin + bus.vmax);
            if (!bus.is_reference) sol_.ac_buses[i].va = 0.0;
        }
        for (std::size_t i = 0; i < net_.generators.size(); ++i) {
            const auto& g = net_.generators[i];
            sol_.generators[i].p = std::min(std::max(0.0, g.pmin), g.pmax);
            sol_.generators[i].q = std::min(std::max(0.0, g.qmin), g.qmax);
        }
        for (auto& br : sol_.ac_branches) br = {br.id, 0, 0, 0, 0};
        for (auto& t : sol_.dc_terminals) {
            const auto& bus = net_.dc_buses[idx_.dc_bus(t.bus)];
            switch (t.terminal) {
                case DcTerminal::Positive:
                    t.voltage = std::min(std::max(1.0, bus.vmin_pole), bus.vmax_pole);
                    break;
                case DcTerminal::Negative:
                    t.voltage = -std::min(std::max(1.0, bus.vmin_pole), bus.vmax_pole);
                    break;
                case DcTerminal::Neutral: t.voltage = 0.0; break;
            }
        }
        std::set<std::string> rigid_buses;
        for (const auto& conv : net_.converters) {
            if (conv.grounding.kind == Grounding::Kind::Rigid) rigid_buses.insert(conv.dc_bus);
        }
        for (auto& t : sol_.dc_terminals) {
            if (t.terminal == DcTerminal::Neutral && rigid_buses.count(t.bus)) t.voltage = 0.0;
        }
        for (auto& c : sol_.dc_conductors) {
            c.i_from = 0.0;
            c.i_to = 0.0;
        }
        for (auto& l : sol_.dc_loads) l.current = 0.0;
        for (std::size_t ci = 0; ci < net_.converters.size(); ++ci) {
            const auto& conv = net_.converters[ci];
            auto& cr = sol_.converters[ci];
            for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                const auto& pole = conv.poles[k];
                auto& pr = cr.poles[k];
                const PoleKind kind = pr.pole;
                const double u_cv = pole.vmin_cv == pole.vmax_cv ? pole.vmin_cv : 1.0;
                const double q_ac = pole.qmin_ac == pole.qmax_ac ? pole.qmin_ac : 0.0;
                pr = ConverterPoleResult{};
                pr.pole = kind;
                pr.u_f = u_cv;
                pr.u_cv = u_cv;
                pr.q_ac = q_ac;
                pr.i_ac = 0.2;  // keep clear of the spurious negative branch
            }
            cr.i_neutral = 0.0;
            cr.p_neutral = 0.0;
            cr.i_ground = 0.0;
        }
    }

private:
    void refresh_losses() {
        for (std::size_t ci = 0; ci < net_.converters.size(); ++ci) {
            const auto& conv = net_.converters[ci];
            auto& cr = sol_.converters[ci];
            for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                const auto& pole = conv.poles[k];
                auto& pr = cr.poles[k];
                pr.loss = pole.loss_a + pole.loss_b * pr.i_ac + pole.loss_c * pr.i_ac * pr.i_ac;
            }
        }
        for (auto& c : sol_.dc_conductors) {
            for (const auto& br : net_.dc_branches) {
                if (br.id == c.branch && br.has(c.terminal)) {
                    const double r = br.conductors.at(c.terminal).resistance;
                    c.loss = r * c.i_from * c.i_from;
                }
            }
        }
    }

    void build_template() {
        sol_.model = formulation::ModelKind::MultiConductor;
        sol_.status = nlp::SolveStatus::Optimal;
        for (const auto& bus : net_.ac_buses) sol_.ac_buses.push_back({bus.id, 1.0, 0.0});
        for (const auto& br : net_.ac_branches) {
            sol_.ac_branches.push_back({br.id, 0, 0, 0, 0});
        }
        for (const auto& g : net_.generators) sol_.generators.push_back({g.id, 0.0, 0.0});
        for (const auto& bus : net_.dc_buses) {
            for (DcTerminal t : kDcTerminals) {
                if (bus.has(t)) sol_.dc_terminals.push_back({bus.id, t, 0.0});
            }
        }
        for (const auto& br : net_.dc_branches) {
            for (const auto& [t, cond] : br.conductors) {
                (void)cond;
                sol_.dc_conductors.push_back({br.id, t, 0.0, 0.0, 0.0});
            }
        }
        for (const auto& conv : net_.converters) {
            ConverterResult cr;
            cr.id = conv.id;
            cr.has_neutral = has_neutral_connection(conv.configuration);
            cr.has_ground = conv.grounding.kind != Grounding::Kind::None;
            for (const auto& pole : conv.poles) {
                ConverterPoleResult pr;
                pr.pole = pole.pole;
                cr.poles.push_back(pr);
            }
            sol_.converters.push_back(std::move(cr));
        }
        for (const auto& load : net_.loads) {
            if (std::holds_alternative<DcAttachment>(load.attachment)) {
                sol_.dc_loads.push_back({load.id, 0.0});
            }
        }
    }

    const Network& net_;
    NetworkIndex idx_;
    Solution sol_;
    std::vector<double*> unknowns_;
    std::vector<int> residual_index_;
};

bool newton_solve(PhysicalSystem& sys, int max_iter = 60, double tol = 1e-9) {
    const int n = sys.num_unknowns();
    Eigen::VectorXd u;
    sys.get(u);
    Eigen::VectorXd r = sys.residuals();
    if (r.size() != n) {
        throw std::logic_error("brute force system is not square: " + std::to_string(n) +
                               " unknowns vs " + std::to_string(r.size()) + " equations");
    }

    for (int iter = 0; iter < max_iter; ++iter) {
        const double rnorm = r.lpNorm<Eigen::Infinity>();
        if (rnorm <= tol) return true;

        Eigen::MatrixXd J(n, n);
        for (int j = 0; j < n; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(u[j]));
            Eigen::VectorXd up = u;
            up[j] += h;
            sys.set(up);
            J.col(j) = (sys.residuals() - r) / h;
        }
        sys.set(u);

        Eigen::FullPivLU<Eigen::MatrixXd> lu(J);
        if (!lu.isInvertible()) return false;
        Eigen::VectorXd du = lu.solve(-r);
        if (!du.allFinite()) return false;

        double alpha = 1.0;
        bool stepped = false;
        for (int ls = 0; ls < 30; ++ls) {
            Eigen::VectorXd u_try = u + alpha * du;
            sys.set(u_try);
            Eigen::VectorXd r_try = sys.residuals();
            if (r_try.allFinite() &&
                r_try.lpNorm<Eigen::Infinity>() < (1.0 - 1e-4 * alpha) * rnorm) {
                u = u_try;
                r = r_try;
                stepped = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!stepped) {
            sys.set(u);
            return false;
        }
    }
    return sys.residuals().lpNorm<Eigen::Infinity>() <= tol;
}

}  // namespace

BruteForceOutcome brute_force_small_opf(const Network& net, double grid_step) {
    for (const auto& bus : net.ac_buses) {
        if (bus.vmin != bus.vmax) {
            throw std::invalid_argument(
                "brute_force_small_opf requires pinned AC voltage magnitudes (vmin == vmax); "
                "bus '" +
                bus.id + "' is not pinned");
        }
    }

    PhysicalSystem sys(net);
    NetworkIndex idx(net);

    // Degrees of freedom: non-reference generators, then all converter
    // stations but the last.
    struct Dof {
        std::string name;
        double lo, hi;
        std::function<void(PhysicalSystem&, double)> apply;
    };
    std::vector<Dof> dofs;
    for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
        const auto& gen = net.generators[gi];
        if (net.ac_buses[idx.ac_bus(gen.bus)].is_reference) continue;
        if (gen.pmin == gen.pmax) continue;
        dofs.push_back({"pg(" + gen.id + ")", gen.pmin, gen.pmax,
                        [gi](PhysicalSystem& s, double v) {
                            s.solution().generators[gi].p = v;
                        }});
    }
    if (!net.dc_buses.empty()) {
        for (std::size_t ci = 0; ci + 1 < net.converters.size(); ++ci) {
            const auto& pole = net.converters[ci].poles.front();
            dofs.push_back({"pdc(" + net.converters[ci].id + ")", pole.pmin_dc, pole.pmax_dc,
                            [ci](PhysicalSystem& s, double v) {
                                s.solution().converters[ci].poles.front().p_dc = v;
                            }});
        }
    }
    if (dofs.empty() || dofs.size() > 3) {
        throw std::invalid_argument("brute_force_small_opf supports 1 to 3 degrees of freedom, "
                                    "this network has " +
                                    std::to_string(dofs.size()));
    }

    // Fixed slots: swept generator P and the first pole's p_dc of swept
    // converters.
    std::set<const double*> fixed;
    {
        Solution& sol = sys.solution();
        for (std::size_t gi = 0; gi < net.generators.size(); ++gi) {
            const auto& gen = net.generators[gi];
            if (!net.ac_buses[idx.ac_bus(gen.bus)].is_reference && gen.pmin != gen.pmax) {
                fixed.insert(&sol.generators[gi].p);
            }
        }
        if (!net.dc_buses.empty()) {
            for (std::size_t ci = 0; ci + 1 < net.converters.size(); ++ci) {
                fixed.insert(&sol.converters[ci].poles.front().p_dc);
            }
        }
    }
    sys.register_unknowns(fixed);

    std::vector<std::vector<double>> grids;
    for (const auto& dof : dofs) {
        std::vector<double> g;
        for (double v = dof.lo; v <= dof.hi + 1e-12; v += grid_step) g.push_back(v);
        if (g.empty()) g.push_back(dof.lo);
        grids.push_back(std::move(g));
    }

    BruteForceOutcome out;
    for (const auto& dof : dofs) out.dof_names.push_back(dof.name);
    bool found = false;
    double best_cost = 0.0;
    bool warm = false;

    std::vector<std::size_t> cursor(dofs.size(), 0);
    while (true) {
        ++out.candidates;
        if (!warm) sys.reset_start();
        std::vector<double> values(dofs.size());
        for (std::size_t d = 0; d < dofs.size(); ++d) {
            values[d] = grids[d][cursor[d]];
            dofs[d].apply(sys, values[d]);
        }

        bool solved = newton_solve(sys);
        // The squared current identity admits a negative-current root; if the
        // iteration drifted onto it, reflect and re-solve toward the physical
        // branch.
        if (solved) {
            bool reflected = false;
            for (auto& cr : sys.solution().converters) {
                for (auto& pr : cr.poles) {
                    if (pr.i_ac < 0.0) {
                        pr.i_ac = std::max(0.05, -pr.i_ac);
                        reflected = true;
                    }
                }
            }
            if (reflected) solved = newton_solve(sys);
        }
        warm = solved;  // reuse the converged point as the next start
        if (solved && sys.feasible(1e-6)) {
            ++out.feasible;
            const double c = sys.cost();
            if (dofs.size() == 1) out.cost_curve.push_back({values[0], c});
            if (!found || c < best_cost) {
                found = true;
                best_cost = c;
                out.cost = c;
                out.solution = sys.solution();
                out.dof_values = values;
            }
        }

        // Advance the cartesian cursor.
        std::size_t d = 0;
        while (d < cursor.size()) {
            if (++cursor[d] < grids[d].size()) break;
            cursor[d] = 0;
            ++d;
        }
        if (d == cursor.size()) break;
    }

    if (!found) {
        throw NoFeasibleCandidate("no feasible candidate on the search grid");
    }
    return out;
}

}  // namespace mcopf::oracle
