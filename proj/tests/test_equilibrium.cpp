#include <doctest.h>

#include <cmath>

#include "gridtariff/equilibrium.hpp"
#include "gridtariff/market_model.hpp"
#include "gridtariff/random_instances.hpp"

using namespace gridtariff;

namespace {

// One consumer-only node, one unit: p(d) = 100 - 0.1 d, C' = 10 + 0.05 g.
MarketInstance single_node(double unit_cap = 1000.0) {
    MarketInstance inst;
    inst.nodes = {Node{0, 100.0, 1000.0, 0.0}};
    inst.consumers = {ConsumerGroup{0, 1000.0, 150.0}};
    inst.units = {GenUnit{0, 0, 10.0, 0.05, unit_cap}};
    inst.network.lines = 0;
    inst.fixed_cost_target = 1000.0;
    inst.equity_weight = 1e6 * inst.fixed_cost_target;
    return inst;
}

VolumetricCharges tau_of(const MarketInstance& inst, double tb, double ts) {
    return VolumetricCharges{tb, ts, default_tau_box(inst)};
}

// Two nodes, cheap generation at node 1, demand at node 0, one congested line.
MarketInstance two_node_congested() {
    MarketInstance inst;
    inst.nodes = {Node{0, 120.0, 800.0, 0.0}, Node{1, 110.0, 300.0, 0.0}};
    inst.consumers = {ConsumerGroup{0, 2000.0, 200.0}, ConsumerGroup{1, 800.0, 150.0}};
    inst.units = {GenUnit{0, 0, 60.0, 0.10, 500.0}, GenUnit{1, 0, 10.0, 0.02, 900.0}};
    inst.network.lines = 1;
    inst.network.ptdf = {0.0, 1.0};  // line flow = y_1
    inst.network.limits = {150.0};
    inst.fixed_cost_target = 5000.0;
    inst.equity_weight = 1e6 * inst.fixed_cost_target;
    return inst;
}

}  // namespace

TEST_CASE("welfare program structure counts") {
    SUBCASE("one consumer-only node with one unit") {
        MarketInstance inst = single_node();
        WelfareProgram prog = assemble_welfare_program(inst, tau_of(inst, 0, 0));
        CHECK(prog.qp.n_vars() == 3);  // d, g, y
        CHECK(prog.qp.n_eq() == 2);    // sum y, nodal balance
    }
    SUBCASE("full three-node layout: 5N + units + N") {
        MarketInstance inst;
        for (int i = 0; i < 3; ++i) {
            inst.nodes.push_back(Node{i, 100.0, 400.0, 0.5});
            inst.consumers.push_back(ConsumerGroup{i, 500.0, 100.0});
            inst.prosumers.push_back(ProsumerGroup{i, 100.0, 200.0, 20.0, 10.0, 20.0, 0.1, 3.0});
            inst.units.push_back(GenUnit{i, 0, 20.0, 0.05, 300.0});
        }
        inst.network.lines = 0;
        inst.fixed_cost_target = 100.0;
        inst.equity_weight = 1e8;
        WelfareProgram prog = assemble_welfare_program(inst, tau_of(inst, 0, 0));
        CHECK(prog.qp.n_vars() == 5 * 3 + 3 + 3);
    }
    SUBCASE("degenerate prosumer fraction omits the block") {
        MarketInstance inst = single_node();  // alpha = 0
        WelfareProgram prog = assemble_welfare_program(inst, tau_of(inst, 0, 0));
        CHECK(prog.layout.l[0] == -1);
        CHECK(prog.layout.z_sell[0] == -1);
        CHECK(prog.layout.g_backup[0] == -1);
    }
    SUBCASE("tau outside the box is rejected") {
        MarketInstance inst = single_node();
        CHECK_THROWS_AS(assemble_welfare_program(inst, tau_of(inst, 1e6, 0)), model_error);
        CHECK_THROWS_AS(assemble_welfare_program(inst, tau_of(inst, 5.0, 10.0)), model_error);
    }
}

TEST_CASE("single-node clearing against closed forms") {
    SUBCASE("interior: d = 600, p = 40") {
        MarketInstance inst = single_node();
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
        CHECK(sol.d[0] == doctest::Approx(600.0).epsilon(1e-7));
        CHECK(sol.p[0] == doctest::Approx(40.0).epsilon(1e-7));
        CHECK(sol.g_units[0] == doctest::Approx(600.0).epsilon(1e-7));
    }
    SUBCASE("buy wedge: tau_b = 15 gives d = 500, p = 35") {
        MarketInstance inst = single_node();
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 15.0, 0.0));
        CHECK(sol.d[0] == doctest::Approx(500.0).epsilon(1e-7));
        CHECK(sol.p[0] == doctest::Approx(35.0).epsilon(1e-7));
    }
    SUBCASE("binding capacity: G = 100 gives p = 90, rho = 75") {
        MarketInstance inst = single_node(100.0);
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
        CHECK(sol.d[0] == doctest::Approx(100.0).epsilon(1e-7));
        CHECK(sol.p[0] == doctest::Approx(90.0).epsilon(1e-6));
        CHECK(sol.rho[0] == doctest::Approx(75.0).epsilon(1e-6));
    }
}

TEST_CASE("kkt residual report") {
    MarketInstance inst = single_node();
    SUBCASE("hand-built exact solution has zero residuals") {
        EquilibriumSolution sol;
        sol.d = {600.0};
        sol.l = sol.z_sell = sol.z_buy = sol.g_backup = {0.0};
        sol.g_units = {600.0};
        sol.y = {0.0};
        sol.p = {40.0};
        sol.delta = sol.kappa = {0.0};
        sol.rho = {0.0};
        sol.theta = -40.0;
        KktReport rep = kkt_residuals(inst, tau_of(inst, 0, 0), sol);
        CHECK(rep.max_residual <= 1e-10);
    }
    SUBCASE("perturbing d by one unit moves the consumer block by slope x 1") {
        EquilibriumSolution sol;
        sol.d = {601.0};  // stationarity now violated by exactly slope * 1
        sol.l = sol.z_sell = sol.z_buy = sol.g_backup = {0.0};
        sol.g_units = {600.0};
        sol.y = {0.0};
        sol.p = {40.0};
        sol.delta = sol.kappa = {0.0};
        sol.rho = {0.0};
        sol.theta = -40.0;
        KktReport rep = kkt_residuals(inst, tau_of(inst, 0, 0), sol);
        const double slope = 100.0 / 1000.0;
        CHECK(rep.at(kConsumer, kComplementarity) ==
              doctest::Approx(601.0 * slope).epsilon(1e-9));
        CHECK(rep.at(kIso, kPrimal) == doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("solver output is within tolerance") {
        SolverSettings settings;
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 7.0, -3.0), settings);
        KktReport rep = kkt_residuals(inst, tau_of(inst, 7.0, -3.0), sol);
        CHECK(rep.max_residual <= 1e-6);
    }
}

TEST_CASE("canonicalize net position") {
    CHECK(canonicalize_net_position(5, 3) == std::pair<double, double>{2.0, 0.0});
    CHECK(canonicalize_net_position(0, 0) == std::pair<double, double>{0.0, 0.0});
    CHECK(canonicalize_net_position(3, 7) == std::pair<double, double>{0.0, 4.0});

    Rng rng(3);
    for (int t = 0; t < 100; ++t) {
        const double zs = rng.uniform(0, 50), zb = rng.uniform(0, 50);
        auto [s, b] = canonicalize_net_position(zs, zb);
        CHECK(s * b == 0.0);
        CHECK(s - b == doctest::Approx(zs - zb).epsilon(1e-12));
        CHECK(s >= 0.0);
        CHECK(b >= 0.0);
    }
}

TEST_CASE("lemma 1: no simultaneous buy and sell when tau_s < tau_b") {
    Rng rng(17);
    for (int t = 0; t < 20; ++t) {
        MarketInstance inst = random_instance(rng);
        VolumetricCharges tau = random_tau(rng, inst, 1.0);
        EquilibriumSolution sol = solve_equilibrium(inst, tau);
        for (int i = 0; i < inst.n_nodes(); ++i)
            CHECK(sol.z_sell[i] * sol.z_buy[i] <= 1e-8);
    }
}

TEST_CASE("lemma 2: solutions agree from different interior starts") {
    Rng rng(29);
    for (int t = 0; t < 10; ++t) {
        MarketInstance inst = random_instance(rng);
        VolumetricCharges tau = random_tau(rng, inst, 0.5);
        SolverSettings a, b;
        b.start_scale = 7.5;
        EquilibriumSolution sa = solve_equilibrium(inst, tau, a);
        EquilibriumSolution sb = solve_equilibrium(inst, tau, b);
        const double tol = 1e-4;
        for (int i = 0; i < inst.n_nodes(); ++i) {
            CHECK(std::abs(sa.d[i] - sb.d[i]) <= tol * (1.0 + std::abs(sa.d[i])));
            CHECK(std::abs(sa.l[i] - sb.l[i]) <= tol * (1.0 + std::abs(sa.l[i])));
            CHECK(std::abs(sa.g_backup[i] - sb.g_backup[i]) <=
                  tol * (1.0 + std::abs(sa.g_backup[i])));
            CHECK(std::abs((sa.z_sell[i] - sa.z_buy[i]) - (sb.z_sell[i] - sb.z_buy[i])) <=
                  tol * (1.0 + std::abs(sa.z_sell[i] - sa.z_buy[i])));
        }
    }
}

TEST_CASE("network feasibility and congestion-rent duality") {
    MarketInstance inst = two_node_congested();
    EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));

    double sum_y = 0.0;
    for (double v : sol.y) sum_y += v;
    CHECK(std::abs(sum_y) <= 1e-6);

    double flow = 0.0;
    for (int i = 0; i < 2; ++i) flow += inst.network.ptdf_at(0, i, 2) * sol.y[i];
    CHECK(std::abs(flow) <= inst.network.limits[0] + 1e-6);
    CHECK(flow == doctest::Approx(150.0).epsilon(1e-6));  // binds by construction

    double rent = 0.0;
    for (int i = 0; i < 2; ++i) rent -= sol.p[i] * sol.y[i];
    const double dual_rent =
        (sol.lambda_plus[0] + sol.lambda_minus[0]) * inst.network.limits[0];
    CHECK(rent == doctest::Approx(dual_rent).epsilon(1e-6));
    CHECK(rent > 1.0);
    CHECK(sol.p[0] > sol.p[1]);
}

TEST_CASE("zero-capacity line becomes a pinned flow") {
    MarketInstance inst = two_node_congested();
    inst.network.limits = {0.0};
    EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
    double flow = 0.0;
    for (int i = 0; i < 2; ++i) flow += inst.network.ptdf_at(0, i, 2) * sol.y[i];
    CHECK(std::abs(flow) <= 1e-7);
    KktReport rep = kkt_residuals(inst, tau_of(inst, 0, 0), sol);
    CHECK(rep.max_residual <= 1e-6);
}

TEST_CASE("zero-capacity blocks are omitted with consistent duals") {
    MarketInstance inst;
    inst.nodes = {Node{0, 100.0, 500.0, 0.4}};
    inst.consumers = {ConsumerGroup{0, 600.0, 150.0}};
    inst.prosumers = {ProsumerGroup{0, 400.0, 250.0, 30.0, 0.0, 20.0, 0.1, 4.0}};  // G = 0
    inst.units = {GenUnit{0, 0, 12.0, 0.04, 800.0}, GenUnit{0, 1, 15.0, 0.05, 0.0}};
    inst.network.lines = 0;
    inst.fixed_cost_target = 100.0;
    inst.equity_weight = 1e8;

    VolumetricCharges tau{0.0, 0.0, default_tau_box(inst)};
    WelfareProgram prog = assemble_welfare_program(inst, tau);
    CHECK(prog.layout.g_backup[0] == -1);  // zero backup capacity
    CHECK(prog.layout.g_unit[1] == -1);    // zero unit capacity

    EquilibriumSolution sol = solve_equilibrium(inst, tau);
    CHECK(sol.g_backup[0] == 0.0);
    CHECK(sol.g_units[1] == 0.0);
    CHECK(sol.rho[1] == doctest::Approx(std::max(0.0, sol.p[0] - 15.0)).epsilon(1e-8));
    KktReport rep = kkt_residuals(inst, tau, sol);
    CHECK(rep.max_residual <= 1e-6);
}

TEST_CASE("degenerate prosumer fractions at both ends") {
    // node 0 all prosumers, node 1 all consumers
    MarketInstance inst;
    inst.nodes = {Node{0, 90.0, 200.0, 1.0}, Node{1, 110.0, 400.0, 0.0}};
    inst.prosumers = {ProsumerGroup{0, 300.0, 300.0, 50.0, 10.0, 15.0, 0.2, 2.0}};
    inst.consumers = {ConsumerGroup{1, 900.0, 160.0}};
    inst.units = {GenUnit{1, 0, 20.0, 0.03, 700.0}};
    inst.network.lines = 1;
    inst.network.ptdf = {0.0, 0.5};
    inst.network.limits = {120.0};
    inst.fixed_cost_target = 500.0;
    inst.equity_weight = 1e8;
    CHECK(validate(inst).ok());

    VolumetricCharges tau{3.0, -1.0, default_tau_box(inst)};
    EquilibriumSolution sol = solve_equilibrium(inst, tau);
    CHECK(sol.d[0] == 0.0);  // no consumer block at node 0
    CHECK(sol.l[1] == 0.0);  // no prosumer block at node 1
    CHECK(kkt_residuals(inst, tau, sol).max_residual <= 1e-6);
}

TEST_CASE("welfare optimum satisfies all three KKT systems") {
    Rng rng(53);
    for (int t = 0; t < 15; ++t) {
        MarketInstance inst = random_instance(rng);
        VolumetricCharges tau = random_tau(rng, inst);
        EquilibriumSolution sol = solve_equilibrium(inst, tau);
        KktReport rep = kkt_residuals(inst, tau, sol);
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 4; ++c)
                CHECK(rep.block[b][c] <= 1e-6);
    }
}

TEST_CASE("surplus decomposition") {
    SUBCASE("single-node closed form") {
        MarketInstance inst = single_node();
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
        SurplusReport rep = surplus_decomposition(inst, tau_of(inst, 0, 0), sol);
        const double slope = 100.0 / 1000.0;
        CHECK(rep.consumer == doctest::Approx(0.5 * slope * 600.0 * 600.0).epsilon(1e-6));
        CHECK(rep.producer == doctest::Approx(0.5 * 0.05 * 600.0 * 600.0).epsilon(1e-6));
        CHECK(rep.iso_revenue == doctest::Approx(0.0).epsilon(1e-8));
        CHECK(std::abs(rep.identity_residual) <= 1e-6);
    }
    SUBCASE("binding capacity adds the scarcity rent") {
        MarketInstance inst = single_node(100.0);
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
        SurplusReport rep = surplus_decomposition(inst, tau_of(inst, 0, 0), sol);
        CHECK(rep.producer ==
              doctest::Approx(0.5 * 0.05 * 100.0 * 100.0 + 75.0 * 100.0).epsilon(1e-6));
    }
    SUBCASE("zero-demand instance yields all zeros") {
        MarketInstance inst = single_node();
        inst.nodes[0].demand_vertical_intercept = 5.0;  // below marginal cost 10
        EquilibriumSolution sol = solve_equilibrium(inst, tau_of(inst, 0, 0));
        SurplusReport rep = surplus_decomposition(inst, tau_of(inst, 0, 0), sol);
        CHECK(std::abs(rep.consumer) <= 1e-6);
        CHECK(std::abs(rep.producer) <= 1e-6);
        CHECK(std::abs(rep.objective) <= 1e-6);
    }
    SUBCASE("identity holds on random instances with tau") {
        Rng rng(71);
        for (int t = 0; t < 10; ++t) {
            MarketInstance inst = random_instance(rng);
            VolumetricCharges tau = random_tau(rng, inst, 0.5);
            EquilibriumSolution sol = solve_equilibrium(inst, tau);
            SurplusReport rep = surplus_decomposition(inst, tau, sol);
            CHECK(std::abs(rep.identity_residual) <= 1e-5 * (1.0 + std::abs(rep.objective)));
            CHECK(rep.total ==
                  doctest::Approx(rep.objective + rep.volumetric_revenue).epsilon(1e-12));
        }
    }
}
