#pragma once

// Scenario-based expected value function EV(tau), chance-constrained revenue
// evaluation, and the grid check that the EV argmax stays at (0,0).

#include "gridtariff/grid_eval.hpp"
#include "gridtariff/tariff_design.hpp"
#include "gridtariff/types.hpp"

namespace gridtariff {

struct ScenarioOverride {
    std::vector<std::pair<int, double>> renewable_output;          // (node, R)
    std::vector<std::pair<int, double>> backup_capacity;           // (node, G)
    std::vector<std::tuple<int, int, double>> unit_capacity;       // (node, unit id, G)
};

struct Scenario {
    double probability = 0.0;
    ScenarioOverride overrides;
};

struct ScenarioSet {
    std::vector<Scenario> scenarios;
    int dimension = 0;  // size of the underlying random vector

    void validate_against(const MarketInstance& inst) const;
};

MarketInstance apply_overrides(const MarketInstance& inst, const ScenarioOverride& o);

// Probability-weighted sum of per-scenario optimal welfare values; the
// summation order is fixed (scenario order) regardless of execution policy.
double ev_estimate(const MarketInstance& inst, const ScenarioSet& set,
                   const VolumetricCharges& tau, const SolverSettings& settings = {},
                   ExecPolicy policy = ExecPolicy::Parallel);

// Per-scenario welfare values, same contract.
std::vector<double> scenario_values(const MarketInstance& inst, const ScenarioSet& set,
                                    const VolumetricCharges& tau,
                                    const SolverSettings& settings = {},
                                    ExecPolicy policy = ExecPolicy::Parallel);

struct ChanceSettings {
    double epsilon = 0.1;
    double tolerance = 1e-9;
};

struct ChanceReport {
    double probability = 0.0;  // P{volumetric + fixed revenue >= target}
    bool satisfied = false;    // probability >= 1 - epsilon
    std::vector<double> scenario_revenue;
    std::vector<bool> scenario_adequate;
};

ChanceReport chance_revenue_probability(const MarketInstance& inst, const ScenarioSet& set,
                                        const VolumetricCharges& tau, const FixedCharges& phi,
                                        const ChanceSettings& chance,
                                        const SolverSettings& settings = {},
                                        ExecPolicy policy = ExecPolicy::Parallel);

struct StochasticCheckReport {
    std::vector<TauPoint> grid;
    std::vector<double> ev;
    GridArgmax argmax;
    double margin = 0.0;  // EV(0,0) - max over nonzero grid points
    bool pass = false;    // argmax at (0,0) within tolerance
};

StochasticCheckReport stochastic_optimal_check(const MarketInstance& inst,
                                               const ScenarioSet& set,
                                               const std::vector<TauPoint>& grid,
                                               double tolerance,
                                               const SolverSettings& settings = {},
                                               ExecPolicy policy = ExecPolicy::Parallel);

}  // namespace gridtariff
