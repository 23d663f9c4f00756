#include "gridtariff/equilibrium.hpp"

#include <algorithm>
#include <cmath>

#include "gridtariff/market_model.hpp"

namespace gridtariff {

WelfareProgram assemble_welfare_program(const MarketInstance& inst,
                                        const VolumetricCharges& tau) {
    require_valid(inst);
    if (!tau.in_box())
        throw model_error("volumetric charges outside the admissible box");

    const int n = inst.n_nodes();
    const int n_units = static_cast<int>(inst.units.size());
    const Network& net = inst.network;

    VariableLayout lay;
    lay.d.assign(n, -1);
    lay.l.assign(n, -1);
    lay.z_sell.assign(n, -1);
    lay.z_buy.assign(n, -1);
    lay.g_backup.assign(n, -1);
    lay.g_unit.assign(n_units, -1);
    lay.y.assign(n, -1);
    lay.row_prosumer_balance.assign(n, -1);
    lay.row_node_balance.assign(n, -1);
    lay.row_zero_line.assign(net.lines, -1);
    lay.row_backup_cap.assign(n, -1);
    lay.row_unit_cap.assign(n_units, -1);
    lay.row_line_plus.assign(net.lines, -1);
    lay.row_line_minus.assign(net.lines, -1);

    std::vector<std::string> names;
    int v = 0;
    for (int i = 0; i < n; ++i)
        if (inst.has_consumer_block(i)) {
            lay.d[i] = v++;
            names.push_back("d[" + std::to_string(i) + "]");
        }
    for (int i = 0; i < n; ++i) {
        if (!inst.has_prosumer_block(i)) continue;
        lay.l[i] = v++;
        names.push_back("l[" + std::to_string(i) + "]");
        lay.z_sell[i] = v++;
        names.push_back("z_sell[" + std::to_string(i) + "]");
        lay.z_buy[i] = v++;
        names.push_back("z_buy[" + std::to_string(i) + "]");
        if (inst.prosumer_at(i)->backup_capacity > 0.0) {
            lay.g_backup[i] = v++;
            names.push_back("g_backup[" + std::to_string(i) + "]");
        }
    }
    for (int u = 0; u < n_units; ++u)
        if (inst.units[u].capacity > 0.0) {
            lay.g_unit[u] = v++;
            names.push_back("g[" + std::to_string(inst.units[u].node) + ":" +
                            std::to_string(inst.units[u].id) + "]");
        }
    for (int i = 0; i < n; ++i) {
        lay.y[i] = v++;
        names.push_back("y[" + std::to_string(i) + "]");
    }
    lay.n_vars = v;

    int e = 0;
    for (int i = 0; i < n; ++i)
        if (inst.has_prosumer_block(i)) lay.row_prosumer_balance[i] = e++;
    lay.row_sum_y = e++;
    for (int i = 0; i < n; ++i) lay.row_node_balance[i] = e++;
    for (int k = 0; k < net.lines; ++k)
        if (net.limits[k] == 0.0) lay.row_zero_line[k] = e++;  // pinned flow
    lay.n_eq = e;

    int m = 0;
    for (int i = 0; i < n; ++i)
        if (lay.g_backup[i] >= 0) lay.row_backup_cap[i] = m++;
    for (int u = 0; u < n_units; ++u)
        if (lay.g_unit[u] >= 0) lay.row_unit_cap[u] = m++;
    for (int k = 0; k < net.lines; ++k) {
        if (net.limits[k] == 0.0) continue;
        lay.row_line_plus[k] = m++;
        lay.row_line_minus[k] = m++;
    }
    lay.n_in = m;

    qp::QuadraticProgram prog;
    prog.Q.setZero(v, v);
    prog.c.setZero(v);
    prog.A_eq.setZero(e, v);
    prog.b_eq.setZero(e);
    prog.A_in.setZero(m, v);
    prog.b_in.setZero(m);
    prog.nonneg.assign(v, true);
    prog.var_names = std::move(names);

    for (int i = 0; i < n; ++i) {
        const Node& nd = inst.nodes[i];
        if (lay.d[i] >= 0) {
            const double slope = consumer_demand_slope(nd);
            prog.Q(lay.d[i], lay.d[i]) = -slope;
            prog.c(lay.d[i]) = nd.demand_vertical_intercept - tau.buy;
        }
        if (lay.l[i] >= 0) {
            const ProsumerGroup& pg = *inst.prosumer_at(i);
            const double slope = prosumer_demand_slope(nd);
            prog.Q(lay.l[i], lay.l[i]) = -slope;
            prog.c(lay.l[i]) = nd.demand_vertical_intercept;
            prog.c(lay.z_sell[i]) = tau.sell;
            prog.c(lay.z_buy[i]) = -tau.buy;
            if (lay.g_backup[i] >= 0) {
                prog.Q(lay.g_backup[i], lay.g_backup[i]) = -pg.backup_cost_quadratic;
                prog.c(lay.g_backup[i]) = -pg.backup_cost_linear;
            }
        }
        prog.nonneg[lay.y[i]] = false;
    }
    for (int u = 0; u < n_units; ++u) {
        if (lay.g_unit[u] < 0) continue;
        prog.Q(lay.g_unit[u], lay.g_unit[u]) = -inst.units[u].cost_quadratic;
        prog.c(lay.g_unit[u]) = -inst.units[u].cost_linear;
    }

    // Prosumer balance: l + zs - zb - g = R.
    for (int i = 0; i < n; ++i) {
        const int r = lay.row_prosumer_balance[i];
        if (r < 0) continue;
        prog.A_eq(r, lay.l[i]) = 1.0;
        prog.A_eq(r, lay.z_sell[i]) = 1.0;
        prog.A_eq(r, lay.z_buy[i]) = -1.0;
        if (lay.g_backup[i] >= 0) prog.A_eq(r, lay.g_backup[i]) = -1.0;
        prog.b_eq(r) = inst.prosumer_at(i)->renewable_output;
    }
    // System balance: sum_i y_i = 0.
    for (int i = 0; i < n; ++i) prog.A_eq(lay.row_sum_y, lay.y[i]) = 1.0;
    // Nodal balance: y - sum_h g_ih - (zs - zb) + d = 0, multiplier = LMP.
    for (int i = 0; i < n; ++i) {
        const int r = lay.row_node_balance[i];
        prog.A_eq(r, lay.y[i]) = 1.0;
        if (lay.d[i] >= 0) prog.A_eq(r, lay.d[i]) = 1.0;
        if (lay.z_sell[i] >= 0) {
            prog.A_eq(r, lay.z_sell[i]) = -1.0;
            prog.A_eq(r, lay.z_buy[i]) = 1.0;
        }
    }
    for (int u = 0; u < n_units; ++u)
        if (lay.g_unit[u] >= 0)
            prog.A_eq(lay.row_node_balance[inst.units[u].node], lay.g_unit[u]) = -1.0;
    // Zero-capacity lines become pinned flows.
    for (int k = 0; k < net.lines; ++k) {
        const int r = lay.row_zero_line[k];
        if (r < 0) continue;
        for (int i = 0; i < n; ++i) prog.A_eq(r, lay.y[i]) = net.ptdf_at(k, i, n);
    }

    for (int i = 0; i < n; ++i) {
        const int r = lay.row_backup_cap[i];
        if (r < 0) continue;
        prog.A_in(r, lay.g_backup[i]) = 1.0;
        prog.b_in(r) = inst.prosumer_at(i)->backup_capacity;
    }
    for (int u = 0; u < n_units; ++u) {
        const int r = lay.row_unit_cap[u];
        if (r < 0) continue;
        prog.A_in(r, lay.g_unit[u]) = 1.0;
        prog.b_in(r) = inst.units[u].capacity;
    }
    for (int k = 0; k < net.lines; ++k) {
        if (lay.row_line_plus[k] < 0) continue;
        for (int i = 0; i < n; ++i) {
            const double f = net.ptdf_at(k, i, n);
            prog.A_in(lay.row_line_plus[k], lay.y[i]) = f;
            prog.A_in(lay.row_line_minus[k], lay.y[i]) = -f;
        }
        prog.b_in(lay.row_line_plus[k]) = net.limits[k];
        prog.b_in(lay.row_line_minus[k]) = net.limits[k];
    }

    return WelfareProgram{std::move(prog), std::move(lay)};
}

EquilibriumSolution extract_solution(const MarketInstance& inst,
                                     const VolumetricCharges& tau,
                                     const WelfareProgram& prog,
                                     const qp::QpSolution& sol) {
    const int n = inst.n_nodes();
    const int n_units = static_cast<int>(inst.units.size());
    const VariableLayout& lay = prog.layout;

    EquilibriumSolution eq;
    eq.d.assign(n, 0.0);
    eq.l.assign(n, 0.0);
    eq.z_sell.assign(n, 0.0);
    eq.z_buy.assign(n, 0.0);
    eq.g_backup.assign(n, 0.0);
    eq.g_units.assign(n_units, 0.0);
    eq.y.assign(n, 0.0);
    eq.p.assign(n, 0.0);
    eq.delta.assign(n, 0.0);
    eq.kappa.assign(n, 0.0);
    eq.rho.assign(n_units, 0.0);
    eq.lambda_plus.assign(inst.network.lines, 0.0);
    eq.lambda_minus.assign(inst.network.lines, 0.0);

    auto at = [&](int idx) { return idx >= 0 ? sol.x(idx) : 0.0; };
    for (int i = 0; i < n; ++i) {
        eq.d[i] = at(lay.d[i]);
        eq.l[i] = at(lay.l[i]);
        eq.z_sell[i] = at(lay.z_sell[i]);
        eq.z_buy[i] = at(lay.z_buy[i]);
        eq.g_backup[i] = at(lay.g_backup[i]);
        eq.y[i] = at(lay.y[i]);
        eq.p[i] = sol.eq_mult(lay.row_node_balance[i]);
        if (lay.row_prosumer_balance[i] >= 0)
            eq.delta[i] = sol.eq_mult(lay.row_prosumer_balance[i]);
        if (lay.row_backup_cap[i] >= 0) eq.kappa[i] = sol.ineq_mult(lay.row_backup_cap[i]);
        else if (inst.has_prosumer_block(i))
            // Zero-capacity backup kept out of the program; minimal consistent dual.
            eq.kappa[i] = std::max(0.0, eq.delta[i] - inst.prosumer_at(i)->backup_cost_linear);
    }
    eq.theta = sol.eq_mult(lay.row_sum_y);
    for (int u = 0; u < n_units; ++u) {
        eq.g_units[u] = at(lay.g_unit[u]);
        if (lay.row_unit_cap[u] >= 0) eq.rho[u] = sol.ineq_mult(lay.row_unit_cap[u]);
        else
            eq.rho[u] = std::max(0.0, eq.p[inst.units[u].node] - inst.units[u].cost_linear);
    }
    for (int k = 0; k < inst.network.lines; ++k) {
        if (lay.row_line_plus[k] >= 0) {
            eq.lambda_plus[k] = sol.ineq_mult(lay.row_line_plus[k]);
            eq.lambda_minus[k] = sol.ineq_mult(lay.row_line_minus[k]);
        } else {
            // Pinned line: split the equality multiplier by sign.
            const double w = sol.eq_mult(lay.row_zero_line[k]);
            eq.lambda_plus[k] = std::max(0.0, w);
            eq.lambda_minus[k] = std::max(0.0, -w);
        }
    }
    eq.objective = sol.objective;
    eq.diagnostics = sol.diagnostics;
    (void)tau;
    return eq;
}

EquilibriumSolution solve_equilibrium(const MarketInstance& inst,
                                      const VolumetricCharges& tau,
                                      const SolverSettings& settings) {
    WelfareProgram prog = assemble_welfare_program(inst, tau);
    qp::QpSolution sol = qp::solve_qp(prog.qp, settings);
    if (!sol.ok())
        throw solver_error("equilibrium solve failed: " + qp::to_string(sol.status));
    return extract_solution(inst, tau, prog, sol);
}

namespace {

struct ResidualAcc {
    KktReport rep;
    void add(KktBlock b, KktCategory c, double r) {
        r = std::abs(r);
        rep.block[b][c] = std::max(rep.block[b][c], r);
        rep.max_residual = std::max(rep.max_residual, r);
    }
    // 0 <= var  perp  stationarity expr <= 0.
    void complementarity(KktBlock b, double var, double expr) {
        add(b, kPrimal, std::min(var, 0.0));
        add(b, kDual, std::max(expr, 0.0));
        add(b, kComplementarity, var * expr);
    }
    // 0 <= multiplier  perp  constraint expr <= 0: the multiplier sign is the
    // dual-feasibility condition, the constraint the primal one.
    void complementarity_dual(KktBlock b, double mult, double expr) {
        add(b, kDual, std::min(mult, 0.0));
        add(b, kPrimal, std::max(expr, 0.0));
        add(b, kComplementarity, mult * expr);
    }
};

}  // namespace

KktReport kkt_residuals(const MarketInstance& inst, const VolumetricCharges& tau,
                        const EquilibriumSolution& sol) {
    const int n = inst.n_nodes();
    ResidualAcc acc;

    for (int i = 0; i < n; ++i) {
        const Node& nd = inst.nodes[i];
        // Consumer system: 0 <= d  perp  p_con(d) - (p + tau_b) <= 0.
        if (inst.has_consumer_block(i)) {
            const double f = inverse_demand_consumer(nd, sol.d[i]) - (sol.p[i] + tau.buy);
            acc.complementarity(kConsumer, sol.d[i], f);
        }
        // Prosumer system.
        if (inst.has_prosumer_block(i)) {
            const ProsumerGroup& pg = *inst.prosumer_at(i);
            acc.complementarity(kProsumer, sol.l[i],
                                inverse_demand_prosumer(nd, sol.l[i]) - sol.delta[i]);
            acc.complementarity(kProsumer, sol.g_backup[i],
                                -marginal_backup_cost(pg, sol.g_backup[i]) + sol.delta[i] -
                                    sol.kappa[i]);
            acc.complementarity_dual(kProsumer, sol.kappa[i], sol.g_backup[i] - pg.backup_capacity);
            acc.complementarity(kProsumer, sol.z_sell[i], (sol.p[i] + tau.sell) - sol.delta[i]);
            acc.complementarity(kProsumer, sol.z_buy[i], -(sol.p[i] + tau.buy) + sol.delta[i]);
            acc.add(kProsumer, kPrimal,
                    sol.l[i] + sol.z_sell[i] - sol.z_buy[i] - sol.g_backup[i] -
                        pg.renewable_output);
        }
    }

    // ISO system.
    for (std::size_t u = 0; u < inst.units.size(); ++u) {
        const GenUnit& gu = inst.units[u];
        acc.complementarity(kIso, sol.g_units[u],
                            -marginal_generation_cost(gu, sol.g_units[u]) - sol.rho[u] +
                                sol.p[gu.node]);
        acc.complementarity_dual(kIso, sol.rho[u], sol.g_units[u] - gu.capacity);
    }
    double sum_y = 0.0;
    for (int i = 0; i < n; ++i) {
        sum_y += sol.y[i];
        double stat = -sol.theta - sol.p[i];
        for (int k = 0; k < inst.network.lines; ++k)
            stat += inst.network.ptdf_at(k, i, n) * (sol.lambda_minus[k] - sol.lambda_plus[k]);
        acc.add(kIso, kStationarity, stat);

        double supply = sol.y[i] - sol.z_sell[i] + sol.z_buy[i] + sol.d[i];
        for (std::size_t u = 0; u < inst.units.size(); ++u)
            if (inst.units[u].node == i) supply -= sol.g_units[u];
        acc.add(kIso, kPrimal, supply);
    }
    acc.add(kIso, kPrimal, sum_y);
    for (int k = 0; k < inst.network.lines; ++k) {
        double flow = 0.0;
        for (int i = 0; i < n; ++i) flow += inst.network.ptdf_at(k, i, n) * sol.y[i];
        acc.complementarity_dual(kIso, sol.lambda_plus[k], flow - inst.network.limits[k]);
        acc.complementarity_dual(kIso, sol.lambda_minus[k], -flow - inst.network.limits[k]);
    }

    return acc.rep;
}

std::pair<double, double> canonicalize_net_position(double z_sell, double z_buy) {
    return {std::max(z_sell - z_buy, 0.0), std::max(z_buy - z_sell, 0.0)};
}

EquilibriumSolution canonicalized(const MarketInstance& inst, EquilibriumSolution sol) {
    for (int i = 0; i < inst.n_nodes(); ++i) {
        auto [zs, zb] = canonicalize_net_position(sol.z_sell[i], sol.z_buy[i]);
        sol.z_sell[i] = zs;
        sol.z_buy[i] = zb;
    }
    return sol;
}

SurplusReport surplus_decomposition(const MarketInstance& inst,
                                    const VolumetricCharges& tau,
                                    const EquilibriumSolution& sol) {
    const int n = inst.n_nodes();
    SurplusReport rep;
    rep.consumer_by_node.assign(n, 0.0);
    rep.prosumer_by_node.assign(n, 0.0);

    for (int i = 0; i < n; ++i) {
        const Node& nd = inst.nodes[i];
        if (inst.has_consumer_block(i)) {
            rep.consumer_by_node[i] =
                gross_benefit(nd.demand_vertical_intercept, consumer_demand_slope(nd), sol.d[i]) -
                (sol.p[i] + tau.buy) * sol.d[i];
        }
        if (inst.has_prosumer_block(i)) {
            const ProsumerGroup& pg = *inst.prosumer_at(i);
            rep.prosumer_by_node[i] =
                (sol.p[i] + tau.sell) * sol.z_sell[i] - (sol.p[i] + tau.buy) * sol.z_buy[i] +
                gross_benefit(nd.demand_vertical_intercept, prosumer_demand_slope(nd), sol.l[i]) -
                backup_cost(pg, sol.g_backup[i]);
        }
        rep.consumer += rep.consumer_by_node[i];
        rep.prosumer += rep.prosumer_by_node[i];
        rep.volumetric_revenue +=
            -tau.sell * sol.z_sell[i] + tau.buy * sol.z_buy[i] + tau.buy * sol.d[i];
        rep.iso_revenue -= sol.p[i] * sol.y[i];
    }
    for (std::size_t u = 0; u < inst.units.size(); ++u)
        rep.producer += sol.p[inst.units[u].node] * sol.g_units[u] -
                        generation_cost(inst.units[u], sol.g_units[u]);

    rep.objective = sol.objective;
    rep.wholesale = rep.consumer + rep.producer + rep.iso_revenue;
    rep.total = rep.objective + rep.volumetric_revenue;
    rep.identity_residual =
        rep.consumer + rep.prosumer + rep.producer + rep.iso_revenue - rep.objective;
    return rep;
}

}  // namespace gridtariff
