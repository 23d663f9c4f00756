#pragma once

// Core domain types for the wholesale-market / retail-tariff toolkit.
// Units throughout: energy MWh/day, prices $/MWh, money $/day.
// Incomes, fixed charges and sunk costs are per household per day.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridtariff {

class model_error : public std::runtime_error {
public:
    explicit model_error(const std::string& what) : std::runtime_error(what) {}
};

class config_error : public std::runtime_error {
public:
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

class solver_error : public std::runtime_error {
public:
    explicit solver_error(const std::string& what) : std::runtime_error(what) {}
};

struct Node {
    int id = 0;
    double demand_vertical_intercept = 0.0;    // P0, $/MWh
    double demand_horizontal_intercept = 0.0;  // Q0, MWh/day (aggregate retail)
    double prosumer_fraction = 0.0;            // alpha in [0,1]
};

struct ConsumerGroup {
    int node = 0;
    double households = 0.0;
    double income = 0.0;  // $/household/day
};

struct ProsumerGroup {
    int node = 0;
    double households = 0.0;
    double income = 0.0;              // $/household/day
    double renewable_output = 0.0;    // R, MWh/day
    double backup_capacity = 0.0;     // G, MWh/day
    double backup_cost_linear = 0.0;  // $/MWh
    double backup_cost_quadratic = 0.0;  // $/MWh^2
    double sunk_cost = 0.0;           // SC, $/household/day
};

struct GenUnit {
    int node = 0;
    int id = 0;
    double cost_linear = 0.0;     // a, $/MWh
    double cost_quadratic = 0.0;  // A, $/MWh^2
    double capacity = 0.0;        // MWh/day
};

struct Network {
    int lines = 0;
    std::vector<double> ptdf;    // row-major, lines x nodes
    std::vector<double> limits;  // length lines, MWh/day

    double ptdf_at(int line, int node, int n_nodes) const {
        return ptdf[static_cast<std::size_t>(line) * n_nodes + node];
    }
};

struct MarketInstance {
    std::vector<Node> nodes;
    std::vector<ConsumerGroup> consumers;
    std::vector<ProsumerGroup> prosumers;
    std::vector<GenUnit> units;
    Network network;
    double fixed_cost_target = 0.0;  // $/day
    double equity_weight = 0.0;      // M

    int n_nodes() const { return static_cast<int>(nodes.size()); }

    // A consumer demand block exists where alpha < 1, a prosumer block where alpha > 0.
    bool has_consumer_block(int i) const { return nodes[i].prosumer_fraction < 1.0; }
    bool has_prosumer_block(int i) const { return nodes[i].prosumer_fraction > 0.0; }

    const ConsumerGroup* consumer_at(int node) const {
        for (const auto& c : consumers)
            if (c.node == node) return &c;
        return nullptr;
    }
    const ProsumerGroup* prosumer_at(int node) const {
        for (const auto& p : prosumers)
            if (p.node == node) return &p;
        return nullptr;
    }
};

// Bounded box for the volumetric charges (the set the upper level searches over).
struct TauBox {
    double buy_max = 0.0;    // upper bound on tau_b
    double sell_min = 0.0;   // lower bound on tau_s (negative)
};

struct VolumetricCharges {
    double buy = 0.0;   // tau_b >= 0
    double sell = 0.0;  // tau_s <= tau_b
    TauBox box;

    bool in_box(double tol = 1e-12) const {
        return buy >= -tol && buy <= box.buy_max + tol && sell >= box.sell_min - tol &&
               sell <= buy + tol;
    }
};

TauBox default_tau_box(const MarketInstance& inst);

struct FixedCharges {
    // Indexed by node; entries are meaningful only for populated groups.
    std::vector<double> consumer;  // $/household/day
    std::vector<double> prosumer;  // $/household/day
};

struct SolverSettings {
    double feasibility_tolerance = 1e-9;      // absolute, scaled by constraint rhs magnitude
    double complementarity_tolerance = 1e-7;  // absolute per product; met via active-set cleanup
    double duality_gap_tolerance = 1e-12;     // relative
    int max_iterations = 200;
    double regularization = 1e-10;
    double start_scale = 1.0;  // scales the interior starting point (uniqueness checks)
};

struct SolveDiagnostics {
    int iterations = 0;
    double primal_residual = 0.0;
    double dual_residual = 0.0;
    double relative_gap = 0.0;
    double max_complementarity = 0.0;
    bool dual_degenerate = false;  // active constraint gradients rank-deficient
    int active_rank = 0;
    int active_rows = 0;
};

struct EquilibriumSolution {
    // Primal, indexed by node (0 where the block is absent).
    std::vector<double> d;        // conventional demand
    std::vector<double> l;        // prosumer consumption
    std::vector<double> z_sell;   // prosumer grid sales
    std::vector<double> z_buy;    // prosumer grid purchases
    std::vector<double> g_backup; // prosumer backup output
    std::vector<double> g_units;  // aligned to MarketInstance::units
    std::vector<double> y;        // hub-spoke flow variable of the nodal balance (Eq-style: node export)

    // Duals.
    std::vector<double> p;            // LMP per node
    std::vector<double> delta;        // prosumer balance dual
    std::vector<double> kappa;        // backup capacity dual
    std::vector<double> rho;          // unit capacity duals, aligned to units
    double theta = 0.0;               // system balance dual
    std::vector<double> lambda_plus;  // line duals
    std::vector<double> lambda_minus;

    double objective = 0.0;  // welfare value Pi = V(tau)
    SolveDiagnostics diagnostics;
};

struct CalibrationSpec {
    double baseline_demand_low = 0.0;  // MWh/household/day for the scaling-1.0 tier
    std::vector<double> group_scalings;       // per node, multiplier on the low tier
    std::vector<double> households_per_group; // per node
    double expenditure_share = 0.0;           // fraction of income spent at reference
    double reference_retail_price = 0.0;      // $/MWh
    double demand_price_elasticity_at_reference = 0.0;  // < 0
    double solar_penetration = 0.0;           // fraction of households at solar_node
    int solar_node = 0;
    double solar_capacity_per_household = 0.0;  // kW
    double solar_equivalent_hours = 1.0;        // daily full-capacity hours
    double renewable_output = -1.0;             // MWh/day; < 0 means derive from capacity
    double reference_renewable_output = -1.0;   // MWh/day used for income anchoring; < 0 means renewable_output
    double backup_capacity = 0.0;               // MWh/day
    double backup_cost_linear = 0.0;
    double backup_cost_quadratic = 0.0;
    double sunk_cost = 0.0;

    // Supply side and targets pass through unchanged (the recipe only builds demand blocks).
    std::vector<GenUnit> units;
    Network network;
    double fixed_cost_target = 0.0;
    double equity_weight = -1.0;  // < 0 means 1e6 * fixed_cost_target
};

enum class ExecPolicy { Serial, Parallel };

}  // namespace gridtariff
