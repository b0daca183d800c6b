#include "mcopf/oracle/audit.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "mcopf/errors.hpp"

namespace mcopf::oracle {

using formulation::ModelKind;

int AuditReport::flag_count() const {
    int n = 0;
    for (const auto& e : entries) {
        if (e.flagged) ++n;
    }
    return n;
}

double AuditReport::max_abs_residual() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, std::abs(e.residual));
    return m;
}

std::vector<AuditEntry> AuditReport::flagged() const {
    std::vector<AuditEntry> out;
    for (const auto& e : entries) {
        if (e.flagged) out.push_back(e);
    }
    return out;
}

double AuditReport::dc_kcl_residual(const std::string& bus, DcTerminal t) const {
    for (const auto& e : entries) {
        if (e.category == "dc_kcl" && e.entity == bus && e.detail == to_string(t)) {
            return e.residual;
        }
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::string AuditReport::to_table(bool flagged_only) const {
    std::ostringstream os;
    os << "category          entity                detail              residual\n";
    for (const auto& e : entries) {
        if (flagged_only && !e.flagged) continue;
        char buf[160];
        std::snprintf(buf, sizeof(buf), "%-17s %-21s %-19s %13.6e%s\n", e.category.c_str(),
                      e.entity.c_str(), e.detail.c_str(), e.residual, e.flagged ? "  *" : "");
        os << buf;
    }
    return os.str();
}

std::string AuditReport::to_json() const {
    nlohmann::json root;
    root["tol"] = tol;
    root["flag_count"] = flag_count();
    root["max_abs_residual"] = max_abs_residual();
    root["entries"] = nlohmann::json::array();
    for (const auto& e : entries) {
        root["entries"].push_back({{"category", e.category},
                                   {"entity", e.entity},
                                   {"detail", e.detail},
                                   {"residual", e.residual},
                                   {"flagged", e.flagged}});
    }
    return root.dump(2) + "\n";
}

namespace {

// Straight-line per-unit power flow over a series element in polar form.
// Deliberately re-derived here: the audit must not lean on the formulation.
void element_flow(double vm_from, double va_from, double tap_from, double vm_to, double va_to,
                  double tap_to, double g, double b, double& p, double& q) {
    const double vf = vm_from / tap_from;
    const double vt = vm_to / tap_to;
    const double d = va_from - va_to;
    p = g * vf * vf - g * vf * vt * std::cos(d) - b * vf * vt * std::sin(d);
    q = -b * vf * vf + b * vf * vt * std::cos(d) - g * vf * vt * std::sin(d);
}

class Auditor {
public:
    Auditor(const Network& net, const Solution& sol, double tol)
        : net_(net), sol_(sol), idx_(net), report_() {
        report_.tol = tol;
        balanced_ = sol.model == ModelKind::Balanced;
    }

    AuditReport run() {
        check_dimensions();
        ac_side();
        dc_side();
        converters();
        return std::move(report_);
    }

private:
    void equality(const std::string& cat, const std::string& entity, const std::string& detail,
                  double residual) {
        report_.entries.push_back(
            {cat, entity, detail, residual, std::abs(residual) > report_.tol});
    }

    void bound(const std::string& entity, const std::string& detail, double value, double lo,
               double hi) {
        const double viol = std::max(std::max(lo - value, value - hi), 0.0);
        report_.entries.push_back({"bound", entity, detail, viol, viol > report_.tol});
    }

    void check_dimensions() {
        if (sol_.ac_buses.size() != net_.ac_buses.size() ||
            sol_.ac_branches.size() != net_.ac_branches.size() ||
            sol_.generators.size() != net_.generators.size() ||
            sol_.converters.size() != net_.converters.size()) {
            throw DimensionMismatch("solution tables do not match the network");
        }
        for (std::size_t i = 0; i < net_.ac_buses.size(); ++i) {
            if (sol_.ac_buses[i].id != net_.ac_buses[i].id) {
                throw DimensionMismatch("ac bus id mismatch at position " + std::to_string(i));
            }
        }
        for (std::size_t i = 0; i < net_.converters.size(); ++i) {
            if (sol_.converters[i].id != net_.converters[i].id) {
                throw DimensionMismatch("converter id mismatch at position " + std::to_string(i));
            }
            if (sol_.converters[i].poles.size() != net_.converters[i].poles.size()) {
                throw DimensionMismatch("pole count mismatch at converter " +
                                        net_.converters[i].id);
            }
        }
        std::size_t expected_terminals = 0;
        for (const auto& bus : net_.dc_buses) {
            expected_terminals += balanced_ ? 1 : bus.terminals.size();
        }
        if (sol_.dc_terminals.size() != expected_terminals) {
            throw DimensionMismatch("dc terminal table does not match the network");
        }
    }

    double terminal_voltage(const std::string& bus, DcTerminal t) const {
        const auto* r = sol_.find_terminal(bus, t);
        if (r == nullptr) {
            throw DimensionMismatch("missing voltage for " + bus + ":" + to_string(t));
        }
        return r->voltage;
    }

    void ac_side() {
        for (std::size_t i = 0; i < net_.ac_buses.size(); ++i) {
            const auto& bus = net_.ac_buses[i];
            const auto& r = sol_.ac_buses[i];
            bound(bus.id, "vm", r.vm, bus.vmin, bus.vmax);
            if (bus.is_reference) {
                equality("ref", bus.id, "va", r.va);
            }
        }
        for (std::size_t i = 0; i < net_.generators.size(); ++i) {
            const auto& gen = net_.generators[i];
            const auto& r = sol_.generators[i];
            bound(gen.id, "p", r.p, gen.pmin, gen.pmax);
            bound(gen.id, "q", r.q, gen.qmin, gen.qmax);
        }
        for (std::size_t i = 0; i < net_.ac_branches.size(); ++i) {
            const auto& br = net_.ac_branches[i];
            const auto& r = sol_.ac_branches[i];
            const auto& bf = sol_.ac_buses[idx_.ac_bus(br.from_bus)];
            const auto& bt = sol_.ac_buses[idx_.ac_bus(br.to_bus)];
            double p, q;
            element_flow(bf.vm, bf.va, 1.0, bt.vm, bt.va, 1.0, br.g, br.b, p, q);
            equality("ac_flow", br.id, "p_from", r.p_from - p);
            equality("ac_flow", br.id, "q_from", r.q_from - q);
            element_flow(bt.vm, bt.va, 1.0, bf.vm, bf.va, 1.0, br.g, br.b, p, q);
            equality("ac_flow", br.id, "p_to", r.p_to - p);
            equality("ac_flow", br.id, "q_to", r.q_to - q);
            bound(br.id, "s_from", std::hypot(r.p_from, r.q_from), 0.0, br.rating);
            bound(br.id, "s_to", std::hypot(r.p_to, r.q_to), 0.0, br.rating);
        }
        // Nodal balances from the reported flows and dispatch.
        for (std::size_t i = 0; i < net_.ac_buses.size(); ++i) {
            const auto& bus = net_.ac_buses[i];
            const auto& r = sol_.ac_buses[i];
            double p = bus.gshunt * r.vm * r.vm;
            double q = -bus.bshunt * r.vm * r.vm;
            for (const auto& [bi, is_from] : idx_.ac_branches_at(static_cast<int>(i))) {
                p += is_from ? sol_.ac_branches[bi].p_from : sol_.ac_branches[bi].p_to;
                q += is_from ? sol_.ac_branches[bi].q_from : sol_.ac_branches[bi].q_to;
            }
            for (int gi : idx_.generators_at(static_cast<int>(i))) {
                p -= sol_.generators[gi].p;
                q -= sol_.generators[gi].q;
            }
            for (int li : idx_.ac_loads_at(static_cast<int>(i))) {
                p += net_.loads[li].p;
                q += net_.loads[li].q;
            }
            for (int ci : idx_.converters_at_ac(static_cast<int>(i))) {
                for (const auto& pole : sol_.converters[ci].poles) {
                    p += pole.p_grid;
                    q += pole.q_grid;
                }
            }
            equality("ac_kcl", bus.id, "p", p);
            equality("ac_kcl", bus.id, "q", q);
        }
    }

    const DcConductorResult* find_conductor(const std::string& branch, DcTerminal t) const {
        for (const auto& c : sol_.dc_conductors) {
            if (c.branch == branch && c.terminal == t) return &c;
        }
        return nullptr;
    }

    void dc_side() {
        // Terminal voltage bounds.
        for (const auto& bus : net_.dc_buses) {
            if (balanced_) {
                bound(bus.id, "udc", terminal_voltage(bus.id, DcTerminal::Positive),
                      bus.vmin_pole, bus.vmax_pole);
                continue;
            }
            if (bus.has(DcTerminal::Positive)) {
                bound(bus.id, "udc:positive", terminal_voltage(bus.id, DcTerminal::Positive),
                      bus.vmin_pole, bus.vmax_pole);
            }
            if (bus.has(DcTerminal::Negative)) {
                bound(bus.id, "udc:negative", terminal_voltage(bus.id, DcTerminal::Negative),
                      -bus.vmax_pole, -bus.vmin_pole);
            }
            if (bus.has(DcTerminal::Neutral)) {
                bound(bus.id, "udc:neutral", terminal_voltage(bus.id, DcTerminal::Neutral),
                      -bus.vmax_neutral, bus.vmax_neutral);
            }
        }

        // Conductor equations.
        for (const auto& br : net_.dc_branches) {
            for (const auto& [t, cond] : br.conductors) {
                if (balanced_ && t != DcTerminal::Positive) continue;
                const auto* c = find_conductor(br.id, t);
                if (c == nullptr) {
                    throw DimensionMismatch("missing conductor result " + br.id + ":" +
                                            to_string(t));
                }
                const double ue = terminal_voltage(br.from_bus, t);
                const double uf = terminal_voltage(br.to_bus, t);
                equality("dc_antisym", br.id, to_string(t), c->i_from + c->i_to);
                equality("dc_ohm", br.id, to_string(t),
                         c->i_from - (ue - uf) / cond.resistance);
                bound(br.id, std::string("i:") + to_string(t), std::abs(c->i_from), 0.0,
                      cond.rating);
            }
        }

        // DC loads.
        for (const auto& lr : sol_.dc_loads) {
            for (std::size_t li = 0; li < net_.loads.size(); ++li) {
                if (net_.loads[li].id != lr.id) continue;
                const auto& att = std::get<DcAttachment>(net_.loads[li].attachment);
                const double u =
                    terminal_voltage(att.bus, balanced_ ? DcTerminal::Positive : att.terminal);
                equality("dc_load", lr.id, "ui=p", u * lr.current - net_.loads[li].p);
            }
        }

        // Nodal current balance per terminal.
        for (std::size_t e = 0; e < net_.dc_buses.size(); ++e) {
            const auto& bus = net_.dc_buses[e];
            for (DcTerminal t : kDcTerminals) {
                if (balanced_ ? t != DcTerminal::Positive : !bus.has(t)) continue;
                double sum = 0.0;
                for (const auto& [di, is_from] : idx_.dc_branches_at(static_cast<int>(e))) {
                    const auto& br = net_.dc_branches[di];
                    if (!br.has(t) && !balanced_) continue;
                    const auto* c = find_conductor(br.id, t);
                    if (c == nullptr) continue;
                    sum += is_from ? c->i_from : c->i_to;
                }
                for (int ci : idx_.converters_at_dc(static_cast<int>(e))) {
                    const auto& conv = net_.converters[ci];
                    const auto& cr = sol_.converters[ci];
                    if (balanced_) {
                        sum += cr.poles.front().i_dc;
                        continue;
                    }
                    if (t == DcTerminal::Neutral) {
                        if (has_neutral_connection(conv.configuration)) sum += cr.i_neutral;
                        if (cr.has_ground) sum += cr.i_ground;
                    } else {
                        for (const auto& pole : cr.poles) {
                            if (terminal_of(pole.pole) == t) sum += pole.i_dc;
                        }
                    }
                }
                for (int li : idx_.dc_loads_at(static_cast<int>(e))) {
                    const auto& att = std::get<DcAttachment>(net_.loads[li].attachment);
                    const DcTerminal lt = balanced_ ? DcTerminal::Positive : att.terminal;
                    if (lt != t) continue;
                    for (const auto& lr : sol_.dc_loads) {
                        if (lr.id == net_.loads[li].id) sum += lr.current;
                    }
                }
                report_.entries.push_back({"dc_kcl", bus.id, to_string(t), sum,
                                           std::abs(sum) > report_.tol});
            }
        }
    }

    void converters() {
        for (std::size_t ci = 0; ci < net_.converters.size(); ++ci) {
            const auto& conv = net_.converters[ci];
            const auto& cr = sol_.converters[ci];
            const auto& ac_bus = sol_.ac_buses[idx_.ac_bus(conv.ac_bus)];
            const bool neutral =
                !balanced_ && has_neutral_connection(conv.configuration);
            const double u0 =
                neutral ? terminal_voltage(conv.dc_bus, DcTerminal::Neutral) : 0.0;

            for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                const auto& pole = conv.poles[k];
                const auto& pr = cr.poles[k];
                const std::string tag = conv.id + ":" + to_string(pole.pole);
                double p, q;

                element_flow(ac_bus.vm, ac_bus.va, pole.transformer.tap, pr.u_f, pr.th_f, 1.0,
                             pole.transformer.g, pole.transformer.b, p, q);
                equality("conv_tf", tag, "p_from", pr.p_grid - p);
                equality("conv_tf", tag, "q_from", pr.q_grid - q);
                element_flow(pr.u_f, pr.th_f, 1.0, ac_bus.vm, ac_bus.va, pole.transformer.tap,
                             pole.transformer.g, pole.transformer.b, p, q);
                equality("conv_tf", tag, "p_to", pr.p_tf_to - p);
                equality("conv_tf", tag, "q_to", pr.q_tf_to - q);

                element_flow(pr.u_f, pr.th_f, 1.0, pr.u_cv, pr.th_cv, 1.0, pole.reactor.g,
                             pole.reactor.b, p, q);
                equality("conv_pr", tag, "p_from", pr.p_pr_from - p);
                equality("conv_pr", tag, "q_from", pr.q_pr_from - q);
                element_flow(pr.u_cv, pr.th_cv, 1.0, pr.u_f, pr.th_f, 1.0, pole.reactor.g,
                             pole.reactor.b, p, q);
                equality("conv_pr", tag, "p_to", pr.p_pr_to - p);
                equality("conv_pr", tag, "q_to", pr.q_pr_to - q);

                equality("conv_filter", tag, "p", pr.p_tf_to + pr.p_pr_from);
                equality("conv_filter", tag, "q",
                         pr.q_tf_to + pr.q_pr_from - pole.filter_b * pr.u_f * pr.u_f);
                equality("conv_node", tag, "p", pr.p_ac + pr.p_pr_to);
                equality("conv_node", tag, "q", pr.q_ac + pr.q_pr_to);

                equality("conv_ui", tag, "identity",
                         pr.p_ac * pr.p_ac + pr.q_ac * pr.q_ac -
                             pr.u_cv * pr.u_cv * pr.i_ac * pr.i_ac);
                bound(tag, "s_ac", std::hypot(pr.p_ac, pr.q_ac), 0.0, pole.smax);
                bound(tag, "p_ac", pr.p_ac, pole.pmin_ac, pole.pmax_ac);
                bound(tag, "q_ac", pr.q_ac, pole.qmin_ac, pole.qmax_ac);
                bound(tag, "i_ac", pr.i_ac, 0.0, pole.imax_ac);
                bound(tag, "u_cv", pr.u_cv, pole.vmin_cv, pole.vmax_cv);
                bound(tag, "u_f", pr.u_f, pole.vmin_cv, pole.vmax_cv);
                bound(tag, "p_dc", pr.p_dc, pole.pmin_dc, pole.pmax_dc);
                bound(tag, "i_dc", pr.i_dc, pole.imin_dc, pole.imax_dc);

                const double loss =
                    pole.loss_a + pole.loss_b * pr.i_ac + pole.loss_c * pr.i_ac * pr.i_ac;
                double balance = pr.p_ac + pr.p_dc - loss;
                if (neutral) balance += u0 * pr.i_dc_neutral;
                equality("conv_loss", tag, "balance", balance);

                const double u_pole =
                    balanced_ ? terminal_voltage(conv.dc_bus, DcTerminal::Positive)
                              : terminal_voltage(conv.dc_bus, terminal_of(pole.pole));
                equality("conv_dclink", tag, "p=ui", pr.p_dc - u_pole * pr.i_dc);

                if (neutral) {
                    equality("conv_tie", tag, "pole", pr.i_dc + pr.i_dc_neutral);
                }
            }

            if (neutral) {
                double sum_ports = 0.0;
                double sum_all = cr.i_neutral;
                for (const auto& pr : cr.poles) {
                    sum_ports += pr.i_dc_neutral;
                    sum_all += pr.i_dc;
                }
                equality("conv_tie", conv.id, "neutral_def", cr.i_neutral - sum_ports);
                equality("conv_tie", conv.id, "station_sum", sum_all);
                equality("conv_tie", conv.id, "p_neutral", cr.p_neutral - u0 * cr.i_neutral);
            } else if (!balanced_) {
                double sum = 0.0;
                for (const auto& pr : cr.poles) sum += pr.i_dc;
                equality("conv_tie", conv.id, "series", sum);
            }

            if (!balanced_ && conv.grounding.kind == Grounding::Kind::Resistive) {
                equality("grounding", conv.id, "resistive",
                         cr.i_ground - u0 / conv.grounding.resistance);
            }
            if (!balanced_ && conv.grounding.kind == Grounding::Kind::Rigid) {
                equality("grounding", conv.id, "rigid", u0);
            }
        }
    }

    const Network& net_;
    const Solution& sol_;
    NetworkIndex idx_;
    AuditReport report_;
    bool balanced_ = false;
};

}  // namespace

AuditReport audit(const Network& network, const Solution& solution, double tol) {
    Auditor a(network, solution, tol);
    return a.run();
}

Solution equal_split_embedding(const Solution& balanced, const BalancedEquivalent& aggregate,
                               const Network& unbalanced) {
    if (balanced.model != ModelKind::Balanced) {
        throw DimensionMismatch("equal_split_embedding expects a balanced-model solution");
    }
    Solution out;
    out.model = ModelKind::MultiConductor;
    out.status = balanced.status;
    out.objective = balanced.objective;
    out.kkt = balanced.kkt;
    out.iterations = balanced.iterations;
    out.wall_time_s = balanced.wall_time_s;

    out.ac_buses = balanced.ac_buses;
    out.ac_branches = balanced.ac_branches;
    out.generators = balanced.generators;

    auto bal_voltage = [&](const std::string& bus) {
        const auto* t = balanced.find_terminal(bus, DcTerminal::Positive);
        return t != nullptr ? t->voltage : 0.0;
    };

    for (const auto& bus : unbalanced.dc_buses) {
        const double u = bal_voltage(bus.id);
        if (bus.has(DcTerminal::Positive)) {
            out.dc_terminals.push_back({bus.id, DcTerminal::Positive, u});
        }
        if (bus.has(DcTerminal::Negative)) {
            out.dc_terminals.push_back({bus.id, DcTerminal::Negative, -u});
        }
        if (bus.has(DcTerminal::Neutral)) {
            out.dc_terminals.push_back({bus.id, DcTerminal::Neutral, 0.0});
        }
    }

    for (std::size_t d = 0; d < unbalanced.dc_branches.size(); ++d) {
        const auto& br = unbalanced.dc_branches[d];
        const int poles = aggregate.map.branch_pole_count[d];
        double i_agg = 0.0;
        for (const auto& c : balanced.dc_conductors) {
            if (c.branch == br.id) i_agg = c.i_from;
        }
        for (const auto& [t, cond] : br.conductors) {
            double i = 0.0;
            if (poles > 0) {
                if (t == DcTerminal::Positive) i = i_agg / poles;
                if (t == DcTerminal::Negative) i = -i_agg / poles;
            }
            out.dc_conductors.push_back({br.id, t, i, -i, cond.resistance * i * i});
        }
    }

    for (std::size_t ci = 0; ci < unbalanced.converters.size(); ++ci) {
        const auto& conv = unbalanced.converters[ci];
        const auto* lumped = balanced.find_converter(conv.id);
        const int poles = aggregate.map.converter_pole_count[ci];
        ConverterResult cr;
        cr.id = conv.id;
        cr.has_neutral = has_neutral_connection(conv.configuration);
        cr.has_ground = conv.grounding.kind != Grounding::Kind::None;
        const auto& L = lumped->poles.front();
        const double split = poles > 0 ? 1.0 / poles : 0.0;
        for (const auto& pole : conv.poles) {
            ConverterPoleResult pr;
            const double sign = pole.pole == PoleKind::Negative ? -1.0 : 1.0;
            pr.pole = pole.pole;
            pr.p_grid = L.p_grid * split;
            pr.q_grid = L.q_grid * split;
            pr.p_tf_to = L.p_tf_to * split;
            pr.q_tf_to = L.q_tf_to * split;
            pr.u_f = L.u_f;
            pr.th_f = L.th_f;
            pr.p_pr_from = L.p_pr_from * split;
            pr.q_pr_from = L.q_pr_from * split;
            pr.p_pr_to = L.p_pr_to * split;
            pr.q_pr_to = L.q_pr_to * split;
            pr.u_cv = L.u_cv;
            pr.th_cv = L.th_cv;
            pr.p_ac = L.p_ac * split;
            pr.q_ac = L.q_ac * split;
            pr.i_ac = L.i_ac * split;
            pr.p_dc = L.p_dc * split;
            pr.i_dc = sign * L.i_dc * split;
            // Ports stay tie-consistent; for a bipolar station the two pole
            // ports cancel, so its station neutral quantities are zero and
            // the infeasibility surfaces in the network KCL rows.
            pr.i_dc_neutral = has_neutral_connection(conv.configuration) ? -pr.i_dc : 0.0;
            pr.loss = pole.loss_a + pole.loss_b * pr.i_ac + pole.loss_c * pr.i_ac * pr.i_ac;
            cr.poles.push_back(pr);
        }
        if (cr.has_neutral) {
            double sum = 0.0;
            for (const auto& pr : cr.poles) sum += pr.i_dc_neutral;
            cr.i_neutral = sum;
            cr.p_neutral = 0.0;  // embedded neutral voltage is zero
        }
        cr.i_ground = 0.0;
        out.converters.push_back(std::move(cr));
    }

    for (std::size_t li = 0; li < unbalanced.loads.size(); ++li) {
        const auto& load = unbalanced.loads[li];
        if (!std::holds_alternative<DcAttachment>(load.attachment)) continue;
        double current = 0.0;
        for (const auto& lr : balanced.dc_loads) {
            if (lr.id == load.id) current = lr.current;
        }
        const auto& att = std::get<DcAttachment>(load.attachment);
        if (att.terminal == DcTerminal::Negative) current = -current;
        out.dc_loads.push_back({load.id, current});
    }

    return out;
}

}  // namespace mcopf::oracle
