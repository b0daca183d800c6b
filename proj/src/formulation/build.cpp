#include "mcopf/formulation/build.hpp"

#include <cmath>
#include <set>
#include <stdexcept>
#include <string>

namespace mcopf::formulation {

namespace {

constexpr double kFree = 1e20;

std::string pole_tag(const std::string& conv_id, PoleKind k) {
    return conv_id + (k == PoleKind::Positive ? ":p" : ":n");
}

/// Transformer + filter + phase reactor + converter internals for one pole.
/// The DC-side rows (loss balance, power-current link) differ between the two
/// formulations and stay with the callers.
PoleVars build_pole_chain(ProblemBuilder& b, const std::string& tag, const ConverterPole& pole,
                          int vm_i, int va_i) {
    PoleVars v;
    v.p_tf_from = b.add_var("ptf(" + tag + ":fwd)", -kFree, kFree);
    v.q_tf_from = b.add_var("qtf(" + tag + ":fwd)", -kFree, kFree);
    v.p_tf_to = b.add_var("ptf(" + tag + ":rev)", -kFree, kFree);
    v.q_tf_to = b.add_var("qtf(" + tag + ":rev)", -kFree, kFree);
    v.u_f = b.add_var("uf(" + tag + ")", pole.vmin_cv, pole.vmax_cv);
    v.th_f = b.add_var("thf(" + tag + ")", -kFree, kFree);
    v.p_pr_from = b.add_var("ppr(" + tag + ":fwd)", -kFree, kFree);
    v.q_pr_from = b.add_var("qpr(" + tag + ":fwd)", -kFree, kFree);
    v.p_pr_to = b.add_var("ppr(" + tag + ":rev)", -kFree, kFree);
    v.q_pr_to = b.add_var("qpr(" + tag + ":rev)", -kFree, kFree);
    v.u_cv = b.add_var("ucv(" + tag + ")", pole.vmin_cv, pole.vmax_cv);
    v.th_cv = b.add_var("thcv(" + tag + ")", -kFree, kFree);
    v.p_ac = b.add_var("pac(" + tag + ")", pole.pmin_ac, pole.pmax_ac);
    v.q_ac = b.add_var("qac(" + tag + ")", pole.qmin_ac, pole.qmax_ac);
    v.i_ac = b.add_var("iac(" + tag + ")", 0.0, pole.imax_ac);
    v.p_dc = b.add_var("pdc(" + tag + ")", pole.pmin_dc, pole.pmax_dc);
    v.i_dc = b.add_var("idc(" + tag + ")", pole.imin_dc, pole.imax_dc);

    const auto& tf = pole.transformer;
    const auto& pr = pole.reactor;

    // Transformer flows, both directions; the tap divides the AC-bus voltage.
    {
        int r = b.add_row("tfp(" + tag + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_tf_from, 1.0);
        b.add_polar(r, false, -1.0, vm_i, va_i, tf.tap, v.u_f, v.th_f, 1.0, tf.g, tf.b);
        r = b.add_row("tfq(" + tag + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_tf_from, 1.0);
        b.add_polar(r, true, -1.0, vm_i, va_i, tf.tap, v.u_f, v.th_f, 1.0, tf.g, tf.b);
        r = b.add_row("tfp(" + tag + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_tf_to, 1.0);
        b.add_polar(r, false, -1.0, v.u_f, v.th_f, 1.0, vm_i, va_i, tf.tap, tf.g, tf.b);
        r = b.add_row("tfq(" + tag + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_tf_to, 1.0);
        b.add_polar(r, true, -1.0, v.u_f, v.th_f, 1.0, vm_i, va_i, tf.tap, tf.g, tf.b);
    }
    // Phase reactor flows (tap 1) between filter node and converter node.
    {
        int r = b.add_row("prp(" + tag + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_pr_from, 1.0);
        b.add_polar(r, false, -1.0, v.u_f, v.th_f, 1.0, v.u_cv, v.th_cv, 1.0, pr.g, pr.b);
        r = b.add_row("prq(" + tag + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_pr_from, 1.0);
        b.add_polar(r, true, -1.0, v.u_f, v.th_f, 1.0, v.u_cv, v.th_cv, 1.0, pr.g, pr.b);
        r = b.add_row("prp(" + tag + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_pr_to, 1.0);
        b.add_polar(r, false, -1.0, v.u_cv, v.th_cv, 1.0, v.u_f, v.th_f, 1.0, pr.g, pr.b);
        r = b.add_row("prq(" + tag + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_pr_to, 1.0);
        b.add_polar(r, true, -1.0, v.u_cv, v.th_cv, 1.0, v.u_f, v.th_f, 1.0, pr.g, pr.b);
    }
    // Filter-node balance; the shunt filter only carries reactive power.
    {
        int r = b.add_row("filtp(" + tag + ")", nlp::RowKind::Equality);
        b.add_lin(r, v.p_tf_to, 1.0);
        b.add_lin(r, v.p_pr_from, 1.0);
        r = b.add_row("filtq(" + tag + ")", nlp::RowKind::Equality);
        b.add_lin(r, v.q_tf_to, 1.0);
        b.add_lin(r, v.q_pr_from, 1.0);
        b.add_quad(r, v.u_f, -pole.filter_b);
    }
    // Converter node balance: the internal injection absorbs the reactor flow.
    {
        int r = b.add_row("cnvp(" + tag + ")", nlp::RowKind::Equality);
        b.add_lin(r, v.p_ac, 1.0);
        b.add_lin(r, v.p_pr_to, 1.0);
        r = b.add_row("cnvq(" + tag + ")", nlp::RowKind::Equality);
        b.add_lin(r, v.q_ac, 1.0);
        b.add_lin(r, v.q_pr_to, 1.0);
    }
    // Apparent power / current / voltage identity and the PQ circle.
    {
        int r = b.add_row("ui(" + tag + ")", nlp::RowKind::Equality);
        b.add_quad(r, v.p_ac, 1.0);
        b.add_quad(r, v.q_ac, 1.0);
        b.add_biquad(r, v.u_cv, v.i_ac, -1.0);
        r = b.add_row("circle(" + tag + ")", nlp::RowKind::Inequality);
        b.add_quad(r, v.p_ac, 1.0);
        b.add_quad(r, v.q_ac, 1.0);
        b.add_const(r, -pole.smax * pole.smax);
    }
    return v;
}

/// Objective, AC-bus/branch/generator variables and rows common to both
/// formulations. Converter transformer flows are appended to the bus balance
/// rows by the callers; the rows are returned per bus as (P, Q) pairs.
struct AcSide {
    std::vector<int> kcl_p;
    std::vector<int> kcl_q;
};

AcSide build_ac_side(ProblemBuilder& b, const Network& net, const NetworkIndex& idx,
                     VariableMap& map) {
    AcSide side;
    map.ac_bus.resize(net.ac_buses.size());
    for (std::size_t i = 0; i < net.ac_buses.size(); ++i) {
        const auto& bus = net.ac_buses[i];
        map.ac_bus[i].vm = b.add_var("vm(" + bus.id + ")", bus.vmin, bus.vmax);
        map.ac_bus[i].va = b.add_var("va(" + bus.id + ")", -kFree, kFree);
    }
    map.gen.resize(net.generators.size());
    for (std::size_t i = 0; i < net.generators.size(); ++i) {
        const auto& gen = net.generators[i];
        map.gen[i].p = b.add_var("pg(" + gen.id + ")", gen.pmin, gen.pmax);
        map.gen[i].q = b.add_var("qg(" + gen.id + ")", gen.qmin, gen.qmax);
        b.add_const(ProblemBuilder::kObjective, gen.cost_a);
        b.add_lin(ProblemBuilder::kObjective, map.gen[i].p, gen.cost_b);
        b.add_quad(ProblemBuilder::kObjective, map.gen[i].p, gen.cost_c);
    }
    map.ac_branch.resize(net.ac_branches.size());
    for (std::size_t i = 0; i < net.ac_branches.size(); ++i) {
        const auto& br = net.ac_branches[i];
        auto& v = map.ac_branch[i];
        v.p_from = b.add_var("p(" + br.id + ":fwd)", -kFree, kFree);
        v.q_from = b.add_var("q(" + br.id + ":fwd)", -kFree, kFree);
        v.p_to = b.add_var("p(" + br.id + ":rev)", -kFree, kFree);
        v.q_to = b.add_var("q(" + br.id + ":rev)", -kFree, kFree);
    }

    for (std::size_t i = 0; i < net.ac_buses.size(); ++i) {
        if (net.ac_buses[i].is_reference) {
            int r = b.add_row("ref(" + net.ac_buses[i].id + ")", nlp::RowKind::Equality);
            b.add_lin(r, map.ac_bus[i].va, 1.0);
        }
    }

    for (std::size_t i = 0; i < net.ac_branches.size(); ++i) {
        const auto& br = net.ac_branches[i];
        const auto& v = map.ac_branch[i];
        const int f = idx.ac_bus(br.from_bus);
        const int t = idx.ac_bus(br.to_bus);
        const auto& bf = map.ac_bus[f];
        const auto& bt = map.ac_bus[t];

        int r = b.add_row("pdef(" + br.id + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_from, 1.0);
        b.add_polar(r, false, -1.0, bf.vm, bf.va, 1.0, bt.vm, bt.va, 1.0, br.g, br.b);
        r = b.add_row("qdef(" + br.id + ":fwd)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_from, 1.0);
        b.add_polar(r, true, -1.0, bf.vm, bf.va, 1.0, bt.vm, bt.va, 1.0, br.g, br.b);
        r = b.add_row("pdef(" + br.id + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.p_to, 1.0);
        b.add_polar(r, false, -1.0, bt.vm, bt.va, 1.0, bf.vm, bf.va, 1.0, br.g, br.b);
        r = b.add_row("qdef(" + br.id + ":rev)", nlp::RowKind::Equality);
        b.add_lin(r, v.q_to, 1.0);
        b.add_polar(r, true, -1.0, bt.vm, bt.va, 1.0, bf.vm, bf.va, 1.0, br.g, br.b);

        r = b.add_row("srate(" + br.id + ":fwd)", nlp::RowKind::Inequality);
        b.add_quad(r, v.p_from, 1.0);
        b.add_quad(r, v.q_from, 1.0);
        b.add_const(r, -br.rating * br.rating);
        r = b.add_row("srate(" + br.id + ":rev)", nlp::RowKind::Inequality);
        b.add_quad(r, v.p_to, 1.0);
        b.add_quad(r, v.q_to, 1.0);
        b.add_const(r, -br.rating * br.rating);
    }

    side.kcl_p.resize(net.ac_buses.size());
    side.kcl_q.resize(net.ac_buses.size());
    for (std::size_t i = 0; i < net.ac_buses.size(); ++i) {
        const auto& bus = net.ac_buses[i];
        int rp = b.add_row("kclp(" + bus.id + ")", nlp::RowKind::Equality);
        int rq = b.add_row("kclq(" + bus.id + ")", nlp::RowKind::Equality);
        side.kcl_p[i] = rp;
        side.kcl_q[i] = rq;

        for (const auto& [bi, is_from] : idx.ac_branches_at(static_cast<int>(i))) {
            const auto& v = map.ac_branch[bi];
            b.add_lin(rp, is_from ? v.p_from : v.p_to, 1.0);
            b.add_lin(rq, is_from ? v.q_from : v.q_to, 1.0);
        }
        for (int gi : idx.generators_at(static_cast<int>(i))) {
            b.add_lin(rp, map.gen[gi].p, -1.0);
            b.add_lin(rq, map.gen[gi].q, -1.0);
        }
        for (int li : idx.ac_loads_at(static_cast<int>(i))) {
            b.add_const(rp, net.loads[li].p);
            b.add_const(rq, net.loads[li].q);
        }
        b.add_quad(rp, map.ac_bus[i].vm, bus.gshunt);
        b.add_quad(rq, map.ac_bus[i].vm, -bus.bshunt);
    }
    return side;
}

void bounds_of_terminal(const DcBus& bus, DcTerminal t, double& lo, double& hi) {
    lo = 0.0;
    hi = 0.0;
    switch (t) {
        case DcTerminal::Positive:
            lo = bus.vmin_pole;
            hi = bus.vmax_pole;
            break;
        case DcTerminal::Negative:
            lo = -bus.vmax_pole;
            hi = -bus.vmin_pole;
            break;
        case DcTerminal::Neutral:
            lo = -bus.vmax_neutral;
            hi = bus.vmax_neutral;
            break;
    }
}

}  // namespace

BuiltProblem build_mcdc(const Network& net) {
    if (net.single_conductor_view) {
        throw std::invalid_argument(
            "build_mcdc expects a multi-conductor network, not a balanced view");
    }
    NetworkIndex idx(net);
    ProblemBuilder b;
    VariableMap map;
    map.kind = ModelKind::MultiConductor;

    AcSide ac = build_ac_side(b, net, idx, map);

    // DC terminal voltages; negative-pole voltages are signed.
    map.dc_terminal.assign(net.dc_buses.size(), {-1, -1, -1});
    for (std::size_t e = 0; e < net.dc_buses.size(); ++e) {
        const auto& bus = net.dc_buses[e];
        for (DcTerminal t : kDcTerminals) {
            if (!bus.has(t)) continue;
            double lo, hi;
            bounds_of_terminal(bus, t, lo, hi);
            map.dc_terminal[e][terminal_slot(t)] =
                b.add_var("udc(" + bus.id + ":" + to_string(t) + ")", lo, hi);
        }
    }

    map.dc_branch.assign(net.dc_branches.size(), {});
    for (std::size_t d = 0; d < net.dc_branches.size(); ++d) {
        const auto& br = net.dc_branches[d];
        for (const auto& [t, cond] : br.conductors) {
            auto& cv = map.dc_branch[d][terminal_slot(t)];
            const std::string tag = br.id + ":" + to_string(t);
            cv.i_from = b.add_var("idc(" + tag + ":fwd)", -cond.rating, cond.rating);
            cv.i_to = b.add_var("idc(" + tag + ":rev)", -cond.rating, cond.rating);
        }
    }

    map.dc_load_current.assign(net.loads.size(), -1);
    for (std::size_t li = 0; li < net.loads.size(); ++li) {
        if (std::holds_alternative<DcAttachment>(net.loads[li].attachment)) {
            map.dc_load_current[li] = b.add_var("ild(" + net.loads[li].id + ")", -kFree, kFree);
        }
    }

    // Converter stations.
    map.converter.resize(net.converters.size());
    for (std::size_t ci = 0; ci < net.converters.size(); ++ci) {
        const auto& conv = net.converters[ci];
        auto& cv = map.converter[ci];
        const int ac_bus = idx.ac_bus(conv.ac_bus);
        const int dc_bus = idx.dc_bus(conv.dc_bus);
        const bool neutral = has_neutral_connection(conv.configuration);

        for (const auto& pole : conv.poles) {
            const std::string tag = pole_tag(conv.id, pole.pole);
            PoleVars pv =
                build_pole_chain(b, tag, pole, map.ac_bus[ac_bus].vm, map.ac_bus[ac_bus].va);
            if (neutral) {
                pv.i_dc_neutral = b.add_var("idc0(" + tag + ")", -kFree, kFree);
            }
            b.add_lin(ac.kcl_p[ac_bus], pv.p_tf_from, 1.0);
            b.add_lin(ac.kcl_q[ac_bus], pv.q_tf_from, 1.0);

            const int u_pole = map.dc_voltage(dc_bus, terminal_of(pole.pole));
            // Pole power-current link: p_dc = U * i_dc.
            int r = b.add_row("dclink(" + tag + ")", nlp::RowKind::Equality);
            b.add_lin(r, pv.p_dc, 1.0);
            b.add_bilin(r, u_pole, pv.i_dc, -1.0);

            // Per-pole energy balance including the neutral-port flow.
            r = b.add_row("loss(" + tag + ")", nlp::RowKind::Equality);
            b.add_lin(r, pv.p_ac, 1.0);
            b.add_lin(r, pv.p_dc, 1.0);
            if (neutral) {
                const int u0 = map.dc_voltage(dc_bus, DcTerminal::Neutral);
                b.add_bilin(r, u0, pv.i_dc_neutral, 1.0);
            }
            b.add_lin(r, pv.i_ac, -pole.loss_b);
            b.add_quad(r, pv.i_ac, -pole.loss_c);
            b.add_const(r, -pole.loss_a);

            cv.poles.push_back(pv);
        }

        if (neutral) {
            cv.i_neutral = b.add_var("idc0(" + conv.id + ")", -kFree, kFree);
            cv.p_neutral = b.add_var("pdc0(" + conv.id + ")", -kFree, kFree);
            // Each pole's terminal current returns through its neutral port.
            for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                const std::string tag = pole_tag(conv.id, conv.poles[k].pole);
                int r = b.add_row("tie(" + tag + ")", nlp::RowKind::Equality);
                b.add_lin(r, cv.poles[k].i_dc, 1.0);
                b.add_lin(r, cv.poles[k].i_dc_neutral, 1.0);
            }
            int r = b.add_row("ineut(" + conv.id + ")", nlp::RowKind::Equality);
            b.add_lin(r, cv.i_neutral, 1.0);
            for (const auto& pv : cv.poles) {
                b.add_lin(r, pv.i_dc_neutral, -1.0);
            }
            r = b.add_row("pneut(" + conv.id + ")", nlp::RowKind::Equality);
            b.add_lin(r, cv.p_neutral, 1.0);
            b.add_bilin(r, map.dc_voltage(dc_bus, DcTerminal::Neutral), cv.i_neutral, -1.0);
        } else {
            // Symmetric monopole: the poles operate in series, no neutral tap.
            int r = b.add_row("symtie(" + conv.id + ")", nlp::RowKind::Equality);
            for (const auto& pv : cv.poles) {
                b.add_lin(r, pv.i_dc, 1.0);
            }
        }

        if (conv.grounding.kind != Grounding::Kind::None) {
            cv.i_ground = b.add_var("ig(" + conv.id + ")", -kFree, kFree);
            if (conv.grounding.kind == Grounding::Kind::Resistive) {
                int r = b.add_row("ground(" + conv.id + ")", nlp::RowKind::Equality);
                b.add_lin(r, cv.i_ground, 1.0);
                b.add_lin(r, map.dc_voltage(dc_bus, DcTerminal::Neutral),
                          -1.0 / conv.grounding.resistance);
            }
        }
    }

    // One zero-potential row per rigidly grounded DC bus.
    {
        std::set<int> rigid_buses;
        for (const auto& conv : net.converters) {
            if (conv.grounding.kind == Grounding::Kind::Rigid) {
                rigid_buses.insert(idx.dc_bus(conv.dc_bus));
            }
        }
        for (int e : rigid_buses) {
            int r = b.add_row("rigid(" + net.dc_buses[e].id + ")", nlp::RowKind::Equality);
            b.add_lin(r, map.dc_voltage(e, DcTerminal::Neutral), 1.0);
        }
    }

    // DC branch current rows.
    for (std::size_t d = 0; d < net.dc_branches.size(); ++d) {
        const auto& br = net.dc_branches[d];
        const int e = idx.dc_bus(br.from_bus);
        const int f = idx.dc_bus(br.to_bus);
        for (const auto& [t, cond] : br.conductors) {
            const auto& cvars = map.dc_branch[d][terminal_slot(t)];
            const std::string tag = br.id + ":" + to_string(t);
            int r = b.add_row("antisym(" + tag + ")", nlp::RowKind::Equality);
            b.add_lin(r, cvars.i_from, 1.0);
            b.add_lin(r, cvars.i_to, 1.0);
            r = b.add_row("ohm(" + tag + ")", nlp::RowKind::Equality);
            b.add_lin(r, cvars.i_from, 1.0);
            b.add_lin(r, map.dc_voltage(e, t), -1.0 / cond.resistance);
            b.add_lin(r, map.dc_voltage(f, t), 1.0 / cond.resistance);
        }
    }

    // DC load defining rows: U * i_load = p.
    for (std::size_t li = 0; li < net.loads.size(); ++li) {
        if (map.dc_load_current[li] < 0) continue;
        const auto& att = std::get<DcAttachment>(net.loads[li].attachment);
        int r = b.add_row("dcload(" + net.loads[li].id + ")", nlp::RowKind::Equality);
        b.add_bilin(r, map.dc_voltage(idx.dc_bus(att.bus), att.terminal),
                    map.dc_load_current[li], 1.0);
        b.add_const(r, -net.loads[li].p);
    }

    // Nodal current balance per DC bus terminal.
    for (std::size_t e = 0; e < net.dc_buses.size(); ++e) {
        const auto& bus = net.dc_buses[e];
        for (DcTerminal t : kDcTerminals) {
            if (!bus.has(t)) continue;
            int r = b.add_row("kcl(" + bus.id + ":" + to_string(t) + ")",
                              nlp::RowKind::Equality);
            for (const auto& [di, is_from] : idx.dc_branches_at(static_cast<int>(e))) {
                if (!net.dc_branches[di].has(t)) continue;
                const auto& cvars = map.dc_branch[di][terminal_slot(t)];
                b.add_lin(r, is_from ? cvars.i_from : cvars.i_to, 1.0);
            }
            for (int ci : idx.converters_at_dc(static_cast<int>(e))) {
                const auto& conv = net.converters[ci];
                const auto& cv = map.converter[ci];
                if (t == DcTerminal::Neutral) {
                    if (has_neutral_connection(conv.configuration)) {
                        b.add_lin(r, cv.i_neutral, 1.0);
                    }
                    if (cv.i_ground >= 0) {
                        b.add_lin(r, cv.i_ground, 1.0);
                    }
                } else {
                    for (std::size_t k = 0; k < conv.poles.size(); ++k) {
                        if (terminal_of(conv.poles[k].pole) == t) {
                            b.add_lin(r, cv.poles[k].i_dc, 1.0);
                        }
                    }
                }
            }
            for (int li : idx.dc_loads_at(static_cast<int>(e))) {
                const auto& att = std::get<DcAttachment>(net.loads[li].attachment);
                if (att.terminal == t) {
                    b.add_lin(r, map.dc_load_current[li], 1.0);
                }
            }
        }
    }

    BuiltProblem out;
    out.map = std::move(map);
    out.problem = b.build();
    out.map.num_vars = out.problem->num_vars();
    return out;
}

BuiltProblem build_balanced(const Network& network, bool forced) {
    auto agg = std::make_shared<BalancedEquivalent>(
        forced ? derive_balanced_view_forced(network) : derive_balanced_equivalent(network));
    const Network& net = agg->network;
    NetworkIndex idx(net);
    ProblemBuilder b;
    VariableMap map;
    map.kind = ModelKind::Balanced;

    AcSide ac = build_ac_side(b, net, idx, map);

    map.dc_terminal.assign(net.dc_buses.size(), {-1, -1, -1});
    for (std::size_t e = 0; e < net.dc_buses.size(); ++e) {
        const auto& bus = net.dc_buses[e];
        map.dc_terminal[e][0] = b.add_var("udc(" + bus.id + ")", bus.vmin_pole, bus.vmax_pole);
    }

    map.dc_branch.assign(net.dc_branches.size(), {});
    for (std::size_t d = 0; d < net.dc_branches.size(); ++d) {
        const auto& br = net.dc_branches[d];
        const auto& cond = br.conductors.at(DcTerminal::Positive);
        auto& cv = map.dc_branch[d][0];
        cv.i_from = b.add_var("idc(" + br.id + ":fwd)", -cond.rating, cond.rating);
        cv.i_to = b.add_var("idc(" + br.id + ":rev)", -cond.rating, cond.rating);
    }

    map.dc_load_current.assign(net.loads.size(), -1);
    for (std::size_t li = 0; li < net.loads.size(); ++li) {
        if (std::holds_alternative<DcAttachment>(net.loads[li].attachment)) {
            map.dc_load_current[li] = b.add_var("ild(" + net.loads[li].id + ")", -kFree, kFree);
        }
    }

    map.converter.resize(net.converters.size());
    for (std::size_t ci = 0; ci < net.converters.size(); ++ci) {
        const auto& conv = net.converters[ci];
        auto& cv = map.converter[ci];
        const int ac_bus = idx.ac_bus(conv.ac_bus);
        const int dc_bus = idx.dc_bus(conv.dc_bus);
        const auto& pole = conv.poles.front();

        PoleVars pv = build_pole_chain(b, conv.id, pole, map.ac_bus[ac_bus].vm,
                                       map.ac_bus[ac_bus].va);
        b.add_lin(ac.kcl_p[ac_bus], pv.p_tf_from, 1.0);
        b.add_lin(ac.kcl_q[ac_bus], pv.q_tf_from, 1.0);

        int r = b.add_row("dclink(" + conv.id + ")", nlp::RowKind::Equality);
        b.add_lin(r, pv.p_dc, 1.0);
        b.add_bilin(r, map.dc_terminal[dc_bus][0], pv.i_dc, -1.0);

        r = b.add_row("loss(" + conv.id + ")", nlp::RowKind::Equality);
        b.add_lin(r, pv.p_ac, 1.0);
        b.add_lin(r, pv.p_dc, 1.0);
        b.add_lin(r, pv.i_ac, -pole.loss_b);
        b.add_quad(r, pv.i_ac, -pole.loss_c);
        b.add_const(r, -pole.loss_a);

        cv.poles.push_back(pv);
    }

    for (std::size_t d = 0; d < net.dc_branches.size(); ++d) {
        const auto& br = net.dc_branches[d];
        const auto& cond = br.conductors.at(DcTerminal::Positive);
        const auto& cvars = map.dc_branch[d][0];
        const int e = idx.dc_bus(br.from_bus);
        const int f = idx.dc_bus(br.to_bus);
        int r = b.add_row("antisym(" + br.id + ")", nlp::RowKind::Equality);
        b.add_lin(r, cvars.i_from, 1.0);
        b.add_lin(r, cvars.i_to, 1.0);
        r = b.add_row("ohm(" + br.id + ")", nlp::RowKind::Equality);
        b.add_lin(r, cvars.i_from, 1.0);
        b.add_lin(r, map.dc_terminal[e][0], -1.0 / cond.resistance);
        b.add_lin(r, map.dc_terminal[f][0], 1.0 / cond.resistance);
    }

    for (std::size_t li = 0; li < net.loads.size(); ++li) {
        if (map.dc_load_current[li] < 0) continue;
        const auto& att = std::get<DcAttachment>(net.loads[li].attachment);
        int r = b.add_row("dcload(" + net.loads[li].id + ")", nlp::RowKind::Equality);
        b.add_bilin(r, map.dc_terminal[idx.dc_bus(att.bus)][0], map.dc_load_current[li], 1.0);
        b.add_const(r, -net.loads[li].p);
    }

    for (std::size_t e = 0; e < net.dc_buses.size(); ++e) {
        int r = b.add_row("kcl(" + net.dc_buses[e].id + ")", nlp::RowKind::Equality);
        for (const auto& [di, is_from] : idx.dc_branches_at(static_cast<int>(e))) {
            const auto& cvars = map.dc_branch[di][0];
            b.add_lin(r, is_from ? cvars.i_from : cvars.i_to, 1.0);
        }
        for (int ci : idx.converters_at_dc(static_cast<int>(e))) {
            b.add_lin(r, map.converter[ci].poles.front().i_dc, 1.0);
        }
        for (int li : idx.dc_loads_at(static_cast<int>(e))) {
            b.add_lin(r, map.dc_load_current[li], 1.0);
        }
    }

    BuiltProblem out;
    out.map = std::move(map);
    out.problem = b.build();
    out.map.num_vars = out.problem->num_vars();
    out.balanced_source = std::move(agg);
    return out;
}

FlatStart flat_start(const VariableMap& map, const TermProblem& problem) {
    const int n = problem.num_vars();
    std::vector<double> preferred(n, 0.0);

    for (const auto& bus : map.ac_bus) {
        preferred[bus.vm] = 1.0;
    }
    for (std::size_t e = 0; e < map.dc_terminal.size(); ++e) {
        const auto& slots = map.dc_terminal[e];
        if (slots[0] >= 0) preferred[slots[0]] = 1.0;
        if (slots[1] >= 0) preferred[slots[1]] = -1.0;
        if (slots[2] >= 0) preferred[slots[2]] = 0.0;
    }
    for (const auto& conv : map.converter) {
        for (const auto& pv : conv.poles) {
            preferred[pv.u_f] = 1.0;
            preferred[pv.u_cv] = 1.0;
        }
    }

    FlatStart out;
    out.point.resize(n);
    const auto& lb = problem.lower_bounds();
    const auto& ub = problem.upper_bounds();
    for (int i = 0; i < n; ++i) {
        const double margin_lo = 1e-4 * std::max(1.0, std::abs(lb[i]));
        const double margin_hi = 1e-4 * std::max(1.0, std::abs(ub[i]));
        const double lo = lb[i] > -kFree ? lb[i] + margin_lo : -kFree;
        const double hi = ub[i] < kFree ? ub[i] - margin_hi : kFree;
        if (lo > hi) {
            out.point[i] = 0.5 * (lb[i] + ub[i]);
            out.pinned.push_back(i);
        } else {
            out.point[i] = std::min(std::max(preferred[i], lo), hi);
        }
    }
    return out;
}

Census census_mcdc(const Network& net) {
    Census c;
    for (const auto& bus : net.ac_buses) {
        c.vars += 2;
        c.eq_rows += 2;  // nodal P/Q balance
        if (bus.is_reference) c.eq_rows += 1;
    }
    c.vars += 4 * static_cast<int>(net.ac_branches.size());
    c.eq_rows += 4 * static_cast<int>(net.ac_branches.size());
    c.ineq_rows += 2 * static_cast<int>(net.ac_branches.size());
    c.vars += 2 * static_cast<int>(net.generators.size());

    for (const auto& bus : net.dc_buses) {
        c.vars += static_cast<int>(bus.terminals.size());
        c.eq_rows += static_cast<int>(bus.terminals.size());  // KCL per terminal
    }
    for (const auto& br : net.dc_branches) {
        c.vars += 2 * static_cast<int>(br.conductors.size());
        c.eq_rows += 2 * static_cast<int>(br.conductors.size());
    }
    for (const auto& load : net.loads) {
        if (std::holds_alternative<DcAttachment>(load.attachment)) {
            c.vars += 1;
            c.eq_rows += 1;
        }
    }
    std::set<std::string> rigid_buses;
    for (const auto& conv : net.converters) {
        const bool neutral = has_neutral_connection(conv.configuration);
        const int poles = static_cast<int>(conv.poles.size());
        c.vars += poles * (17 + (neutral ? 1 : 0));
        c.eq_rows += poles * 15;
        c.ineq_rows += poles;  // PQ circle
        if (neutral) {
            c.vars += 2;                 // I_c0, P_c0
            c.eq_rows += poles + 1 + 1;  // ties, neutral definition, P_c0 definition
        } else {
            c.eq_rows += 1;  // series tie
        }
        if (conv.grounding.kind != Grounding::Kind::None) c.vars += 1;
        if (conv.grounding.kind == Grounding::Kind::Resistive) c.eq_rows += 1;
        if (conv.grounding.kind == Grounding::Kind::Rigid) rigid_buses.insert(conv.dc_bus);
    }
    c.eq_rows += static_cast<int>(rigid_buses.size());
    return c;
}

Census census_balanced(const Network& view) {
    Census c;
    for (const auto& bus : view.ac_buses) {
        c.vars += 2;
        c.eq_rows += 2;
        if (bus.is_reference) c.eq_rows += 1;
    }
    c.vars += 4 * static_cast<int>(view.ac_branches.size());
    c.eq_rows += 4 * static_cast<int>(view.ac_branches.size());
    c.ineq_rows += 2 * static_cast<int>(view.ac_branches.size());
    c.vars += 2 * static_cast<int>(view.generators.size());

    c.vars += static_cast<int>(view.dc_buses.size());
    c.eq_rows += static_cast<int>(view.dc_buses.size());
    c.vars += 2 * static_cast<int>(view.dc_branches.size());
    c.eq_rows += 2 * static_cast<int>(view.dc_branches.size());
    for (const auto& load : view.loads) {
        if (std::holds_alternative<DcAttachment>(load.attachment)) {
            c.vars += 1;
            c.eq_rows += 1;
        }
    }
    c.vars += 17 * static_cast<int>(view.converters.size());
    c.eq_rows += 15 * static_cast<int>(view.converters.size());
    c.ineq_rows += static_cast<int>(view.converters.size());
    return c;
}

}  // namespace mcopf::formulation
