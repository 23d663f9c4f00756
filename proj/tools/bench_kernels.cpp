// Benchmark: serial reference vs OpenMP kernels on the three parallel surfaces
// (value-function grids, scenario EV, active-set enumeration).

#include <chrono>
#include <cstdio>

#include "gridtariff/config_io.hpp"
#include "gridtariff/grid_eval.hpp"
#include "gridtariff/random_instances.hpp"
#include "gridtariff/stochastic.hpp"
#include "gridtariff/verification.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace gridtariff;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
double timed(F&& f) {
    auto t0 = std::chrono::steady_clock::now();
    f();
    return seconds_since(t0);
}

}  // namespace

int main(int argc, char** argv) {
    const char* config = argc > 1 ? argv[1] : "data/three_node.json";
    MarketInstance inst = io::load_instance(config);
    SolverSettings settings;

#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (OpenMP disabled)\n");
#endif

    {
        auto grid = tau_grid(default_tau_box(inst), 15, 15);
        std::vector<double> serial, parallel;
        const double ts = timed([&] {
            serial = value_function_grid(inst, grid, settings, ExecPolicy::Serial);
        });
        const double tp = timed([&] {
            parallel = value_function_grid(inst, grid, settings, ExecPolicy::Parallel);
        });
        double diff = 0.0;
        for (std::size_t i = 0; i < serial.size(); ++i)
            diff = std::max(diff, std::abs(serial[i] - parallel[i]));
        std::printf("value grid   (%3zu pts): serial %7.3fs  parallel %7.3fs  speedup %5.2fx  max|diff| %.2e\n",
                    grid.size(), ts, tp, ts / tp, diff);
    }

    {
        ScenarioSet set;
        for (int j = 0; j < 16; ++j) {
            Scenario s;
            s.probability = 1.0 / 16;
            s.overrides.renewable_output = {{0, 10.0 + 10.0 * j}};
            set.scenarios.push_back(s);
        }
        VolumetricCharges tau{5.0, -2.0, default_tau_box(inst)};
        double es = 0.0, ep = 0.0;
        const double ts = timed([&] { es = ev_estimate(inst, set, tau, settings, ExecPolicy::Serial); });
        const double tp = timed([&] { ep = ev_estimate(inst, set, tau, settings, ExecPolicy::Parallel); });
        std::printf("scenario EV  (16 scen) : serial %7.3fs  parallel %7.3fs  speedup %5.2fx  max|diff| %.2e\n",
                    ts, tp, ts / tp, std::abs(es - ep));
    }

    {
        Rng rng(7);
        RandomInstanceOptions opt;
        opt.oracle_sized = true;
        opt.small_scale = true;
        opt.max_nodes = 2;
        OracleBudget budget;
        // keep drawing until the subset space is big enough to be worth timing
        MarketInstance small = random_instance(rng, opt);
        for (int tries = 0; tries < 200; ++tries) {
            WelfareProgram prog =
                assemble_welfare_program(small, VolumetricCharges{0, 0, default_tau_box(small)});
            const int m = prog.qp.n_inequalities();
            if (m >= 14 && m <= budget.max_inequalities) break;
            small = random_instance(rng, opt);
        }
        VolumetricCharges tau = random_tau(rng, small, 1.0);
        EquilibriumSolution ss, sp;
        const double ts = timed([&] { ss = enumerate_active_sets(small, tau, budget, ExecPolicy::Serial); });
        const double tp = timed([&] { sp = enumerate_active_sets(small, tau, budget, ExecPolicy::Parallel); });
        std::printf("enumeration            : serial %7.3fs  parallel %7.3fs  speedup %5.2fx  max|diff| %.2e\n",
                    ts, tp, ts / tp, std::abs(ss.objective - sp.objective));
    }
    return 0;
}
