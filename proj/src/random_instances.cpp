#include "gridtariff/random_instances.hpp"

#include <algorithm>
#include <cmath>

#include "gridtariff/market_model.hpp"

namespace gridtariff {

MarketInstance random_instance(Rng& rng, const RandomInstanceOptions& opt) {
    const double scale = opt.small_scale ? 0.08 : 1.0;
    MarketInstance inst;
    const int n = rng.uniform_int(1, opt.max_nodes);

    int units_left = std::max(1, opt.max_units);
    for (int i = 0; i < n; ++i) {
        Node nd;
        nd.id = i;
        nd.demand_vertical_intercept = rng.uniform(40.0, 220.0);
        nd.demand_horizontal_intercept = rng.uniform(40.0, 700.0) * scale;
        const int kind = rng.uniform_int(0, 5);
        if (opt.oracle_sized)
            nd.prosumer_fraction = kind < 4 ? 0.0 : rng.uniform(0.2, 0.8);
        else
            nd.prosumer_fraction =
                kind == 0 ? 0.0 : (kind == 1 ? 1.0 : rng.uniform(0.1, 0.9));
        inst.nodes.push_back(nd);

        if (nd.prosumer_fraction < 1.0) {
            ConsumerGroup c;
            c.node = i;
            c.households = rng.uniform(500.0, 5000.0);
            c.income = rng.uniform(80.0, 400.0);
            inst.consumers.push_back(c);
        }
        if (nd.prosumer_fraction > 0.0) {
            ProsumerGroup p;
            p.node = i;
            p.households = rng.uniform(100.0, 2000.0);
            p.income = rng.uniform(100.0, 600.0);
            p.renewable_output = rng.uniform(0.0, 150.0) * scale;
            p.backup_capacity = rng.uniform_int(0, 3) == 0 ? 0.0 : rng.uniform(5.0, 60.0) * scale;
            p.backup_cost_linear = rng.uniform(5.0, 60.0);
            p.backup_cost_quadratic = rng.uniform(0.02, 0.4) / scale;
            p.sunk_cost = rng.uniform(0.0, 8.0);
            inst.prosumers.push_back(p);
        }

        const int n_units =
            opt.oracle_sized ? rng.uniform_int(i == 0 ? 1 : 0, 1)
                             : rng.uniform_int(i == 0 ? 1 : 0, std::min(2, units_left));
        for (int h = 0; h < n_units && units_left > 0; ++h, --units_left) {
            GenUnit u;
            u.node = i;
            u.id = h;
            u.cost_linear = rng.uniform(5.0, 70.0);
            u.cost_quadratic = rng.uniform(0.01, 0.4) / scale;
            u.capacity = rng.uniform(20.0, 600.0) * scale;
            inst.units.push_back(u);
        }
    }

    // Hub-spoke PTDF rows; oracle-sized instances keep at most one line.
    Network net;
    const int max_lines = opt.oracle_sized ? (n > 1 ? 1 : 0) : (n > 1 ? n : 0);
    net.lines = max_lines > 0 ? rng.uniform_int(n > 1 ? 1 : 0, max_lines) : 0;
    net.ptdf.assign(static_cast<std::size_t>(net.lines) * n, 0.0);
    for (int k = 0; k < net.lines; ++k) {
        for (int i = 1; i < n; ++i)
            net.ptdf[static_cast<std::size_t>(k) * n + i] = rng.uniform(-0.9, 0.9);
        net.limits.push_back(rng.uniform(10.0, 400.0) * scale);
    }
    inst.network = net;

    inst.fixed_cost_target = rng.uniform(1000.0, 50000.0) * scale;
    inst.equity_weight = 1e6 * inst.fixed_cost_target;

    require_valid(inst);
    return inst;
}

VolumetricCharges random_tau(Rng& rng, const MarketInstance& inst, double gap) {
    const TauBox box = default_tau_box(inst);
    VolumetricCharges tau;
    tau.box = box;
    tau.buy = rng.uniform(0.0, 0.5 * box.buy_max);
    const double hi = tau.buy - gap;
    tau.sell = rng.uniform(std::max(box.sell_min * 0.5, hi - 60.0), hi);
    return tau;
}

}  // namespace gridtariff
