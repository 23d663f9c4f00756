#include "gridtariff/stochastic.hpp"

#include <cmath>
#include <set>

#include "gridtariff/market_model.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridtariff {

void ScenarioSet::validate_against(const MarketInstance& inst) const {
    if (scenarios.empty()) throw model_error("scenario set is empty");
    double total = 0.0;
    for (const auto& s : scenarios) {
        if (!(s.probability > 0.0)) throw model_error("scenario probabilities must be > 0");
        total += s.probability;
        ValidationReport rep = validate(apply_overrides(inst, s.overrides));
        if (!rep.ok())
            throw model_error("scenario produces an invalid instance: " + rep.violations.front());
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw model_error("scenario probabilities sum to " + std::to_string(total));
}

MarketInstance apply_overrides(const MarketInstance& inst, const ScenarioOverride& o) {
    MarketInstance out = inst;
    auto prosumer_ref = [&out](int node) -> ProsumerGroup& {
        for (auto& p : out.prosumers)
            if (p.node == node) return p;
        throw model_error("scenario override references node " + std::to_string(node) +
                          " without a prosumer group");
    };
    for (auto [node, r] : o.renewable_output) prosumer_ref(node).renewable_output = r;
    for (auto [node, g] : o.backup_capacity) prosumer_ref(node).backup_capacity = g;
    for (auto [node, id, g] : o.unit_capacity) {
        bool found = false;
        for (auto& u : out.units)
            if (u.node == node && u.id == id) {
                u.capacity = g;
                found = true;
            }
        if (!found)
            throw model_error("scenario override references unknown unit " +
                              std::to_string(node) + ":" + std::to_string(id));
    }
    return out;
}

std::vector<double> scenario_values(const MarketInstance& inst, const ScenarioSet& set,
                                    const VolumetricCharges& tau,
                                    const SolverSettings& settings, ExecPolicy policy) {
    if (!tau.in_box()) throw model_error("volumetric charges outside the admissible box");
    const int s = static_cast<int>(set.scenarios.size());
    std::vector<double> values(s, 0.0);
    std::vector<std::string> failures(s);

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (par)
#endif
    for (int j = 0; j < s; ++j) {
        try {
            MarketInstance scen = apply_overrides(inst, set.scenarios[j].overrides);
            values[j] = solve_equilibrium(scen, tau, settings).objective;
        } catch (const std::exception& e) {
            failures[j] = e.what();
        }
    }
    for (int j = 0; j < s; ++j)
        if (!failures[j].empty())
            throw solver_error("scenario " + std::to_string(j) + " failed: " + failures[j]);
    return values;
}

double ev_estimate(const MarketInstance& inst, const ScenarioSet& set,
                   const VolumetricCharges& tau, const SolverSettings& settings,
                   ExecPolicy policy) {
    const std::vector<double> values = scenario_values(inst, set, tau, settings, policy);
    double ev = 0.0;  // fixed order accumulation for reproducibility
    for (std::size_t j = 0; j < values.size(); ++j)
        ev += set.scenarios[j].probability * values[j];
    return ev;
}

ChanceReport chance_revenue_probability(const MarketInstance& inst, const ScenarioSet& set,
                                        const VolumetricCharges& tau, const FixedCharges& phi,
                                        const ChanceSettings& chance,
                                        const SolverSettings& settings, ExecPolicy policy) {
    if (!(chance.epsilon > 0.0 && chance.epsilon < 1.0))
        throw model_error("epsilon must lie in (0,1)");
    const int s = static_cast<int>(set.scenarios.size());
    ChanceReport rep;
    rep.scenario_revenue.assign(s, 0.0);
    rep.scenario_adequate.assign(s, false);
    std::vector<std::string> failures(s);

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (par)
#endif
    for (int j = 0; j < s; ++j) {
        try {
            MarketInstance scen = apply_overrides(inst, set.scenarios[j].overrides);
            EquilibriumSolution sol = solve_equilibrium(scen, tau, settings);
            RevenueReport r = revenue(scen, tau, phi, sol);
            rep.scenario_revenue[j] = r.volumetric + r.fixed;
        } catch (const std::exception& e) {
            failures[j] = e.what();
        }
    }
    for (int j = 0; j < s; ++j)
        if (!failures[j].empty())
            throw solver_error("scenario " + std::to_string(j) + " failed: " + failures[j]);

    for (int j = 0; j < s; ++j) {
        rep.scenario_adequate[j] =
            rep.scenario_revenue[j] >= inst.fixed_cost_target - chance.tolerance;
        if (rep.scenario_adequate[j]) rep.probability += set.scenarios[j].probability;
    }
    rep.satisfied = rep.probability >= 1.0 - chance.epsilon;
    return rep;
}

StochasticCheckReport stochastic_optimal_check(const MarketInstance& inst,
                                               const ScenarioSet& set,
                                               const std::vector<TauPoint>& grid,
                                               double tolerance,
                                               const SolverSettings& settings,
                                               ExecPolicy policy) {
    int zero_index = -1;
    for (int i = 0; i < static_cast<int>(grid.size()); ++i)
        if (grid[i].buy == 0.0 && grid[i].sell == 0.0) zero_index = i;
    if (zero_index < 0) throw model_error("tau grid must contain (0,0)");

    StochasticCheckReport rep;
    rep.grid = grid;
    rep.ev.assign(grid.size(), 0.0);
    const TauBox box = default_tau_box(inst);

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (par)
#endif
    for (int i = 0; i < static_cast<int>(grid.size()); ++i) {
        VolumetricCharges tau{grid[i].buy, grid[i].sell, box};
        rep.ev[i] = ev_estimate(inst, set, tau, settings, ExecPolicy::Serial);
    }

    rep.argmax = grid_argmax(rep.grid, rep.ev);
    double best_nonzero = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < static_cast<int>(grid.size()); ++i)
        if (i != zero_index) best_nonzero = std::max(best_nonzero, rep.ev[i]);
    rep.margin = rep.ev[zero_index] - best_nonzero;
    rep.pass = rep.ev[zero_index] >= rep.argmax.value - tolerance;
    return rep;
}

}  // namespace gridtariff
