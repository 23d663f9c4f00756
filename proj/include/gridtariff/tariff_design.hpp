#pragma once

// Upper-level logic: energy-expenditure incidence, the equity gap B, revenue
// adequacy, min-norm fixed-charge allocation, the optimal (zero-volumetric)
// tariff, revenue-constrained tariffs and fraction sweeps.

#include <optional>
#include <string>

#include "gridtariff/equilibrium.hpp"
#include "gridtariff/types.hpp"

namespace gridtariff {

struct GroupIncidence {
    int node = 0;
    bool is_prosumer = false;
    double households = 0.0;
    double income = 0.0;
    double spend = 0.0;      // per household, before the fixed charge
    double incidence = 0.0;  // (spend + phi) / income
};

struct IncidenceReport {
    std::vector<GroupIncidence> groups;  // populated groups only
    double gap_B = 0.0;

    std::vector<double> incidences() const {
        std::vector<double> v;
        v.reserve(groups.size());
        for (const auto& g : groups) v.push_back(g.incidence);
        return v;
    }
};

// Squared deviation of incidences from their mean, over all populated groups.
// Reduces to half of Eq.-(14)-style (inc_con - inc_pro)^2 in the one-node
// two-group case.
double equity_gap(const std::vector<double>& incidences);

// Per-household spends of the populated groups at a solution (incidence field
// left at zero). Prosumer sales income is deliberately not netted out.
std::vector<GroupIncidence> group_spends(const MarketInstance& inst,
                                         const VolumetricCharges& tau,
                                         const EquilibriumSolution& sol);

IncidenceReport incidence(const MarketInstance& inst, const VolumetricCharges& tau,
                          const FixedCharges& phi, const EquilibriumSolution& sol);

struct RevenueReport {
    double volumetric = 0.0;  // -zs tau_s + zb tau_b + d tau_b
    double fixed = 0.0;       // sum n phi
    double target = 0.0;
    double residual = 0.0;    // volumetric + fixed - target
    bool adequate(double tol) const { return std::abs(residual) <= tol; }
};

RevenueReport revenue(const MarketInstance& inst, const VolumetricCharges& tau,
                      const FixedCharges& phi, const EquilibriumSolution& sol);

struct AllocationResult {
    FixedCharges phi;
    IncidenceReport report;
    bool equity_feasible = false;  // stage 1 reached B ~ 0 and stage 2 verified
    double stage1_gap = 0.0;       // B at the stage-1 optimum
};

// Two-stage allocation with sum n phi = fixed_budget, phi >= 0: stage 1
// minimizes B; when B = 0 is attainable, stage 2 minimizes ||phi||^2 over the
// equal-incidence set.
AllocationResult allocate_fixed_charges(const MarketInstance& inst,
                                        const VolumetricCharges& tau,
                                        const EquilibriumSolution& sol,
                                        double fixed_budget,
                                        const SolverSettings& settings = {});

// Same allocation on precomputed spends (used when equalizing expected
// incidence over scenarios).
AllocationResult allocate_from_spends(const MarketInstance& inst,
                                      const std::vector<GroupIncidence>& spends,
                                      double fixed_budget,
                                      const SolverSettings& settings = {});

struct FractionPolicy {
    double fraction = 0.0;      // share of the fixed-cost target recovered volumetrically
    double equity_weight = -1;  // < 0: use the instance's M
};

struct TariffReport {
    VolumetricCharges tau;
    FixedCharges phi;
    EquilibriumSolution solution;
    SurplusReport surplus;
    IncidenceReport incidence;
    RevenueReport revenue;
    bool equity_feasible = false;
    double upper_objective = 0.0;  // Pi - M B
};

TariffReport optimal_tariff(const MarketInstance& inst, const SolverSettings& settings = {});

// Thrown when no tau_b root attains the required volumetric revenue.
class fraction_unattainable : public solver_error {
public:
    fraction_unattainable(double fraction, double max_revenue)
        : solver_error("volumetric fraction " + std::to_string(fraction) +
                       " unattainable; maximum attainable revenue " +
                       std::to_string(max_revenue)),
          max_attainable_revenue(max_revenue) {}
    double max_attainable_revenue;
};

TariffReport constrained_tariff(const MarketInstance& inst, const FractionPolicy& policy,
                                const SolverSettings& settings = {});

struct SweepRow {
    double fraction = 0.0;
    std::string status;  // "ok" or a failure note; table emission skips data on failure
    std::optional<TariffReport> report;
};

struct SweepTable {
    std::vector<SweepRow> rows;
};

SweepTable sweep_fraction(const MarketInstance& inst, const std::vector<double>& fractions,
                          const SolverSettings& settings = {},
                          ExecPolicy policy = ExecPolicy::Parallel);

}  // namespace gridtariff
