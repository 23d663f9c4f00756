#pragma once

// Lower-level market: the centralized welfare-maximization program, dual-price
// extraction, KKT verification against the consumer / prosumer / ISO systems,
// and the surplus decomposition.

#include <array>
#include <utility>

#include "gridtariff/qp.hpp"
#include "gridtariff/types.hpp"

namespace gridtariff {

// Index map from model quantities into the stacked QP. -1 marks an omitted block
// (degenerate prosumer fraction, zero-capacity backup or unit).
struct VariableLayout {
    std::vector<int> d;         // per node
    std::vector<int> l;         // per node
    std::vector<int> z_sell;    // per node
    std::vector<int> z_buy;     // per node
    std::vector<int> g_backup;  // per node
    std::vector<int> g_unit;    // aligned to instance.units
    std::vector<int> y;         // per node

    std::vector<int> row_prosumer_balance;  // per node, equality
    int row_sum_y = -1;                     // equality
    std::vector<int> row_node_balance;      // per node, equality
    std::vector<int> row_zero_line;         // equality rows for T_k = 0 lines (-1 otherwise)
    std::vector<int> row_backup_cap;        // per node, inequality
    std::vector<int> row_unit_cap;          // aligned to units, inequality
    std::vector<int> row_line_plus;         // per line, inequality (-1 for T_k = 0)
    std::vector<int> row_line_minus;

    int n_vars = 0, n_eq = 0, n_in = 0;
};

struct WelfareProgram {
    qp::QuadraticProgram qp;
    VariableLayout layout;
};

WelfareProgram assemble_welfare_program(const MarketInstance& inst,
                                        const VolumetricCharges& tau);

EquilibriumSolution solve_equilibrium(const MarketInstance& inst,
                                      const VolumetricCharges& tau,
                                      const SolverSettings& settings = {});

// Maps a raw QP solution back into model space (shared with the oracle path).
EquilibriumSolution extract_solution(const MarketInstance& inst,
                                     const VolumetricCharges& tau,
                                     const WelfareProgram& prog,
                                     const qp::QpSolution& sol);

// KKT residual report over the three systems.
enum KktBlock { kConsumer = 0, kProsumer = 1, kIso = 2 };
enum KktCategory { kPrimal = 0, kDual = 1, kStationarity = 2, kComplementarity = 3 };

struct KktReport {
    std::array<std::array<double, 4>, 3> block{};  // [KktBlock][KktCategory]
    double max_residual = 0.0;

    double at(KktBlock b, KktCategory c) const { return block[b][c]; }
};

KktReport kkt_residuals(const MarketInstance& inst, const VolumetricCharges& tau,
                        const EquilibriumSolution& sol);

// (max(zs-zb,0), max(zb-zs,0)); at most one output nonzero, difference preserved.
std::pair<double, double> canonicalize_net_position(double z_sell, double z_buy);

// Applies canonicalize_net_position node-wise.
EquilibriumSolution canonicalized(const MarketInstance& inst, EquilibriumSolution sol);

struct SurplusReport {
    std::vector<double> consumer_by_node;   // gross benefit - (p + tau_b) d
    std::vector<double> prosumer_by_node;   // prosumer problem objective, fixed charge excluded
    double consumer = 0.0;
    double prosumer = 0.0;
    double producer = 0.0;            // sum p g - C
    double iso_revenue = 0.0;         // congestion rent, equals sum (lambda+ + lambda-) T
    double volumetric_revenue = 0.0;  // -tau_s zs + tau_b zb + tau_b d
    double objective = 0.0;           // Pi = V(tau)
    double wholesale = 0.0;           // consumer + producer + iso_revenue
    double total = 0.0;               // objective + volumetric_revenue (gross welfare)
    double identity_residual = 0.0;   // consumer + prosumer + producer + iso - objective
};

SurplusReport surplus_decomposition(const MarketInstance& inst,
                                    const VolumetricCharges& tau,
                                    const EquilibriumSolution& sol);

}  // namespace gridtariff
