#pragma once

// Grid evaluation of the optimal value function V(tau): the embarrassingly
// parallel kernel behind the Proposition-2/3 checks, convexity probes and the
// benchmark. Serial and OpenMP variants produce identical results (each grid
// point is an independent solve written to its own slot).

#include <optional>
#include <vector>

#include "gridtariff/types.hpp"

namespace gridtariff {

struct TauPoint {
    double buy = 0.0;
    double sell = 0.0;
};

// Cartesian nb x ns grid over the admissible set {0 <= tau_b <= box.buy_max,
// box.sell_min <= tau_s <= tau_b}, filtered to points inside the set. Contains
// (0,0) whenever both axes pass through zero.
std::vector<TauPoint> tau_grid(const TauBox& box, int nb, int ns);

// The four extreme points of the admissible set.
std::vector<TauPoint> tau_extreme_points(const TauBox& box);

// V(tau) for each point, reported as the primal objective of the converged
// iterate (one-sided error: never above the true optimum by more than the
// feasibility slack).
std::vector<double> value_function_grid(const MarketInstance& inst,
                                        const std::vector<TauPoint>& points,
                                        const SolverSettings& settings,
                                        ExecPolicy policy = ExecPolicy::Parallel);

struct GridArgmax {
    TauPoint at;
    int index = -1;
    double value = 0.0;
};

GridArgmax grid_argmax(const std::vector<TauPoint>& points, const std::vector<double>& values);

}  // namespace gridtariff
