#include "gridtariff/market_model.hpp"

#include <cmath>
#include <sstream>

namespace gridtariff {

double consumer_demand_slope(const Node& n) {
    if (n.prosumer_fraction >= 1.0)
        throw model_error("consumer demand undefined at node " + std::to_string(n.id) +
                          " (prosumer_fraction = 1)");
    return n.demand_vertical_intercept /
           ((1.0 - n.prosumer_fraction) * n.demand_horizontal_intercept);
}

double prosumer_demand_slope(const Node& n) {
    if (n.prosumer_fraction <= 0.0)
        throw model_error("prosumer demand undefined at node " + std::to_string(n.id) +
                          " (prosumer_fraction = 0)");
    return n.demand_vertical_intercept /
           (n.prosumer_fraction * n.demand_horizontal_intercept);
}

double inverse_demand_consumer(const Node& n, double d) {
    return n.demand_vertical_intercept - consumer_demand_slope(n) * d;
}

double inverse_demand_prosumer(const Node& n, double l) {
    return n.demand_vertical_intercept - prosumer_demand_slope(n) * l;
}

double gross_benefit(double p0, double slope, double q) {
    return p0 * q - 0.5 * slope * q * q;
}

double generation_cost(const GenUnit& u, double g) {
    return u.cost_linear * g + 0.5 * u.cost_quadratic * g * g;
}

double marginal_generation_cost(const GenUnit& u, double g) {
    return u.cost_linear + u.cost_quadratic * g;
}

double backup_cost(const ProsumerGroup& p, double g) {
    return p.backup_cost_linear * g + 0.5 * p.backup_cost_quadratic * g * g;
}

double marginal_backup_cost(const ProsumerGroup& p, double g) {
    return p.backup_cost_linear + p.backup_cost_quadratic * g;
}

namespace {

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace

ValidationReport validate(const MarketInstance& inst) {
    ValidationReport rep;
    auto bad = [&rep](std::string msg) { rep.violations.push_back(std::move(msg)); };

    const int n = inst.n_nodes();
    for (int i = 0; i < n; ++i) {
        const Node& nd = inst.nodes[i];
        if (nd.id != i) bad(cat("node ", i, ": id ", nd.id, " does not match position"));
        if (!(nd.demand_vertical_intercept > 0.0))
            bad(cat("node ", i, ": demand_vertical_intercept must be > 0"));
        if (!(nd.demand_horizontal_intercept > 0.0))
            bad(cat("node ", i, ": demand_horizontal_intercept must be > 0"));
        if (nd.prosumer_fraction < 0.0 || nd.prosumer_fraction > 1.0)
            bad(cat("node ", i, ": prosumer_fraction outside [0,1]"));
    }

    for (const auto& c : inst.consumers) {
        if (c.node < 0 || c.node >= n) {
            bad(cat("consumer group references unknown node ", c.node));
            continue;
        }
        if (c.households < 0.0) bad(cat("consumer group at node ", c.node, ": households < 0"));
        if (c.households > 0.0 && !(c.income > 0.0))
            bad(cat("consumer group at node ", c.node, ": income must be > 0 when populated"));
        if (!inst.has_consumer_block(c.node))
            bad(cat("consumer group at node ", c.node, " but prosumer_fraction = 1"));
    }
    for (const auto& p : inst.prosumers) {
        if (p.node < 0 || p.node >= n) {
            bad(cat("prosumer group references unknown node ", p.node));
            continue;
        }
        if (p.households < 0.0) bad(cat("prosumer group at node ", p.node, ": households < 0"));
        if (p.households > 0.0 && !(p.income > 0.0))
            bad(cat("prosumer group at node ", p.node, ": income must be > 0 when populated"));
        if (p.renewable_output < 0.0)
            bad(cat("prosumer group at node ", p.node, ": renewable_output < 0"));
        if (p.backup_capacity < 0.0)
            bad(cat("prosumer group at node ", p.node, ": backup_capacity < 0"));
        if (p.backup_cost_linear < 0.0 || p.backup_cost_quadratic < 0.0)
            bad(cat("prosumer group at node ", p.node, ": backup cost coefficients must be >= 0"));
        if (p.backup_capacity > 0.0 && !(p.backup_cost_quadratic > 0.0))
            bad(cat("prosumer group at node ", p.node,
                    ": backup_cost_quadratic must be > 0 when capacity > 0"));
        if (p.sunk_cost < 0.0) bad(cat("prosumer group at node ", p.node, ": sunk_cost < 0"));
        if (!inst.has_prosumer_block(p.node))
            bad(cat("prosumer group at node ", p.node, " but prosumer_fraction = 0"));
    }

    // Structural per-node checks: required groups present, someone populated.
    for (int i = 0; i < n; ++i) {
        const ConsumerGroup* c = inst.consumer_at(i);
        const ProsumerGroup* p = inst.prosumer_at(i);
        if (inst.has_consumer_block(i) && c == nullptr)
            bad(cat("node ", i, ": prosumer_fraction < 1 but no consumer group"));
        if (inst.has_prosumer_block(i) && p == nullptr)
            bad(cat("node ", i, ": prosumer_fraction > 0 but no prosumer group"));
        const double pop = (c != nullptr ? c->households : 0.0) +
                           (p != nullptr ? p->households : 0.0);
        if (!(pop > 0.0)) bad(cat("node ", i, ": no populated consumer or prosumer group"));
    }

    for (const auto& u : inst.units) {
        if (u.node < 0 || u.node >= n) {
            bad(cat("unit ", u.id, " references unknown node ", u.node));
            continue;
        }
        if (!(u.cost_linear > 0.0)) bad(cat("unit ", u.node, ":", u.id, ": cost_linear must be > 0"));
        if (!(u.cost_quadratic > 0.0))
            bad(cat("unit ", u.node, ":", u.id, ": cost_quadratic must be > 0"));
        if (u.capacity < 0.0) bad(cat("unit ", u.node, ":", u.id, ": capacity < 0"));
    }

    const Network& net = inst.network;
    if (net.lines < 0) bad("network: negative line count");
    if (static_cast<int>(net.limits.size()) != net.lines)
        bad(cat("network: limits has ", net.limits.size(), " entries, expected ", net.lines));
    if (static_cast<int>(net.ptdf.size()) != net.lines * n)
        bad(cat("network: ptdf has ", net.ptdf.size(), " entries, expected ", net.lines * n));
    for (int k = 0; k < static_cast<int>(net.limits.size()); ++k)
        if (net.limits[k] < 0.0) bad(cat("network: limit of line ", k, " is negative"));

    if (inst.fixed_cost_target < 0.0) bad("fixed_cost_target < 0");
    if (inst.equity_weight < 0.0) bad("equity_weight < 0");

    return rep;
}

void require_valid(const MarketInstance& inst) {
    ValidationReport rep = validate(inst);
    if (rep.ok()) return;
    std::ostringstream os;
    os << "invalid market instance:";
    for (const auto& v : rep.violations) os << "\n  - " << v;
    throw model_error(os.str());
}

TauBox default_tau_box(const MarketInstance& inst) {
    double p0max = 0.0;
    for (const auto& n : inst.nodes) p0max = std::max(p0max, n.demand_vertical_intercept);
    return TauBox{p0max, -p0max};
}

MarketInstance calibrate(const CalibrationSpec& spec) {
    const int n = static_cast<int>(spec.group_scalings.size());
    if (n == 0) throw model_error("calibration: no demand groups");
    if (static_cast<int>(spec.households_per_group.size()) != n)
        throw model_error("calibration: households_per_group size mismatch");
    if (!(spec.baseline_demand_low > 0.0)) throw model_error("calibration: baseline demand must be > 0");
    if (!(spec.expenditure_share > 0.0 && spec.expenditure_share < 1.0))
        throw model_error("calibration: expenditure_share must be in (0,1)");
    if (!(spec.reference_retail_price > 0.0))
        throw model_error("calibration: reference_retail_price must be > 0");
    if (!(spec.demand_price_elasticity_at_reference < 0.0))
        throw model_error("calibration: demand elasticity must be < 0");
    if (spec.solar_node < 0 || spec.solar_node >= n)
        throw model_error("calibration: solar_node out of range");

    const double eps = spec.demand_price_elasticity_at_reference;
    const double pref = spec.reference_retail_price;

    MarketInstance inst;
    inst.units = spec.units;
    inst.network = spec.network;
    inst.fixed_cost_target = spec.fixed_cost_target;
    inst.equity_weight =
        spec.equity_weight >= 0.0 ? spec.equity_weight : 1e6 * spec.fixed_cost_target;

    for (int i = 0; i < n; ++i) {
        const double per_household = spec.baseline_demand_low * spec.group_scalings[i];
        const double households = spec.households_per_group[i];
        const double baseline = per_household * households;  // aggregate MWh/day at reference

        // Linear demand through (pref, baseline) with the given point elasticity:
        //   Q0 = baseline * (1 - eps),  P0 = pref * (1 - eps) / (-eps).
        const double q0 = baseline * (1.0 - eps);
        const double p0 = pref * (1.0 - eps) / (-eps);
        if (!(q0 > baseline))
            throw model_error("calibration: infeasible anchor at node " + std::to_string(i) +
                              " (computed Q0 <= baseline demand)");

        const bool solar = (i == spec.solar_node) && spec.solar_penetration > 0.0;
        const double alpha = solar ? spec.solar_penetration : 0.0;

        inst.nodes.push_back(Node{i, p0, q0, alpha});

        const double income_con = pref * per_household / spec.expenditure_share;
        inst.consumers.push_back(
            ConsumerGroup{i, households * (1.0 - alpha), income_con});

        if (solar) {
            ProsumerGroup pg;
            pg.node = i;
            pg.households = households * alpha;
            const double capacity_mw = pg.households * spec.solar_capacity_per_household / 1000.0;
            pg.renewable_output = spec.renewable_output >= 0.0
                                      ? spec.renewable_output
                                      : capacity_mw * spec.solar_equivalent_hours;
            pg.backup_capacity = spec.backup_capacity;
            pg.backup_cost_linear = spec.backup_cost_linear;
            pg.backup_cost_quadratic = spec.backup_cost_quadratic;
            pg.sunk_cost = spec.sunk_cost;

            // Income anchoring mirrors the consumer rule: expenditure at the reference
            // point (net purchases at pref with the reference renewable output and a
            // fully used backup, plus backup and sunk costs) equals the share of income.
            const double r_ref = spec.reference_renewable_output >= 0.0
                                     ? spec.reference_renewable_output
                                     : pg.renewable_output;
            const double l_ref = per_household * pg.households;
            const double g_ref = pg.backup_capacity;
            const double zb_ref = std::max(l_ref - r_ref - g_ref, 0.0);
            const double spend_ref =
                (pref * zb_ref + backup_cost(pg, g_ref)) / pg.households + pg.sunk_cost;
            pg.income = spend_ref / spec.expenditure_share;
            inst.prosumers.push_back(pg);
        }
    }

    require_valid(inst);
    return inst;
}

}  // namespace gridtariff
