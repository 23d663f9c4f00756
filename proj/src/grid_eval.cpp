#include "gridtariff/grid_eval.hpp"

#include <cmath>

#include "gridtariff/equilibrium.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridtariff {

std::vector<TauPoint> tau_grid(const TauBox& box, int nb, int ns) {
    std::vector<TauPoint> pts;
    for (int ib = 0; ib < nb; ++ib) {
        const double tb = nb > 1 ? box.buy_max * ib / (nb - 1) : 0.0;
        for (int is = 0; is < ns; ++is) {
            const double ts =
                ns > 1 ? box.sell_min + (box.buy_max - box.sell_min) * is / (ns - 1)
                       : 0.0;
            if (ts <= tb + 1e-12) pts.push_back({tb, ts});
        }
    }
    return pts;
}

std::vector<TauPoint> tau_extreme_points(const TauBox& box) {
    return {{0.0, 0.0},
            {box.buy_max, box.buy_max},
            {box.buy_max, box.sell_min},
            {0.0, box.sell_min}};
}

std::vector<double> value_function_grid(const MarketInstance& inst,
                                        const std::vector<TauPoint>& points,
                                        const SolverSettings& settings,
                                        ExecPolicy policy) {
    const int n = static_cast<int>(points.size());
    std::vector<double> values(n, 0.0);
    std::vector<std::string> failures(n);
    const TauBox box = default_tau_box(inst);

    auto eval = [&](int i) {
        try {
            VolumetricCharges tau{points[i].buy, points[i].sell, box};
            values[i] = solve_equilibrium(inst, tau, settings).objective;
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    };

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#else
    const bool par = false;
#endif
    if (par) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
        for (int i = 0; i < n; ++i) eval(i);
#endif
    } else {
        for (int i = 0; i < n; ++i) eval(i);
    }
    for (int i = 0; i < n; ++i)
        if (!failures[i].empty())
            throw solver_error("value grid point " + std::to_string(i) + " failed: " + failures[i]);
    return values;
}

GridArgmax grid_argmax(const std::vector<TauPoint>& points, const std::vector<double>& values) {
    GridArgmax best;
    for (int i = 0; i < static_cast<int>(points.size()); ++i) {
        if (best.index < 0 || values[i] > best.value) {
            best.index = i;
            best.value = values[i];
            best.at = points[i];
        }
    }
    return best;
}

}  // namespace gridtariff
