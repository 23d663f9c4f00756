#pragma once

// Independent brute-force oracles: exhaustive active-set enumeration for tiny
// programs and closed-form single-node clearing. These never touch the
// interior-point path; tests and the `verify` command cross-check against them.

#include <limits>

#include "gridtariff/equilibrium.hpp"
#include "gridtariff/qp.hpp"
#include "gridtariff/types.hpp"

namespace gridtariff {

struct OracleBudget {
    int max_inequalities = 18;  // hard ceiling 25 (2^25 enumeration cap)
    double tolerance = 1e-7;
};

struct OracleResult {
    qp::QpSolution best;
    std::uint32_t active_set = 0;  // bitmask over stacked inequality rows
    int candidates_feasible = 0;
};

// Enumerates every subset of inequality rows (A_in rows then bound rows) as the
// tight set, solves the stationarity system, keeps sign-correct feasible
// candidates, returns the best objective. Ties break toward the lowest subset index.
OracleResult enumerate_active_sets_qp(const qp::QuadraticProgram& prog,
                                      const OracleBudget& budget,
                                      ExecPolicy policy = ExecPolicy::Parallel);

EquilibriumSolution enumerate_active_sets(const MarketInstance& inst,
                                          const VolumetricCharges& tau,
                                          const OracleBudget& budget,
                                          ExecPolicy policy = ExecPolicy::Parallel);

struct SingleNodeClearing {
    double d = 0.0;
    double p = 0.0;
    double g = 0.0;
    double rho = 0.0;
};

// Consumer-only node with one unit: interior branch d = (P0 - a - tau_b)/(P0/Q0 + A),
// capacity branch d = G with rho = p - (a + A G), no-trade branch d = 0.
SingleNodeClearing closed_form_single_node(double p0, double q0, double a, double A,
                                           double G, double tau_b);

struct ConvexitySample {
    double tau_buy = 0.0;
    double tau_sell = 0.0;
    double value = 0.0;
};

struct ConvexityReport {
    double worst_violation = -std::numeric_limits<double>::infinity();
    int triple[3] = {-1, -1, -1};  // sample indices (end, mid, end)
    int triples_checked = 0;
};

// Worst midpoint-convexity violation V(mid) - (V(a)+V(b))/2 over all collinear
// triples found in the samples. Requires at least one such triple.
ConvexityReport convexity_probe(const std::vector<ConvexitySample>& samples);

}  // namespace gridtariff
