#include <doctest.h>

#include "gridtariff/qp.hpp"
#include "gridtariff/random_instances.hpp"
#include "gridtariff/verification.hpp"

using namespace gridtariff;
using qp::QuadraticProgram;
using qp::SolveStatus;

namespace {

// maximize -(x - 1)^2 = -x^2 + 2x - 1 (constant dropped)
QuadraticProgram parabola() {
    QuadraticProgram p;
    p.Q = Eigen::MatrixXd::Constant(1, 1, -2.0);
    p.c = Eigen::VectorXd::Constant(1, 2.0);
    p.A_eq.resize(0, 1);
    p.b_eq.resize(0);
    p.A_in.resize(0, 1);
    p.b_in.resize(0);
    p.nonneg = {true};
    p.var_names = {"x"};
    return p;
}

// Bounded random concave QP: box plus a few random rows, feasible at 0.
QuadraticProgram random_concave(Rng& rng, int n, int extra_rows) {
    QuadraticProgram p;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) L(i, j) = rng.uniform(-1.0, 1.0);
    p.Q = -(L * L.transpose()) - 0.05 * Eigen::MatrixXd::Identity(n, n);
    p.c = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) p.c(i) = rng.uniform(-3.0, 3.0);
    p.A_eq.resize(0, n);
    p.b_eq.resize(0);
    p.A_in.setZero(extra_rows, n);
    p.b_in.setZero(extra_rows);
    for (int r = 0; r < extra_rows; ++r) {
        for (int j = 0; j < n; ++j) p.A_in(r, j) = rng.uniform(-1.0, 1.0);
        p.b_in(r) = rng.uniform(0.5, 4.0);  // keeps x = 0 strictly feasible
    }
    p.nonneg.assign(n, true);
    for (int j = 0; j < n; ++j) p.var_names.push_back("x" + std::to_string(j));
    return p;
}

}  // namespace

TEST_CASE("unconstrained-side optimum") {
    qp::QpSolution s = qp::solve_qp(parabola(), {});
    REQUIRE(s.ok());
    CHECK(s.x(0) == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("active bound with hand-computed multiplier") {
    QuadraticProgram p = parabola();
    p.nonneg = {false};
    p.A_in.setZero(1, 1);
    p.A_in(0, 0) = 1.0;  // x <= 0
    p.b_in.setZero(1);
    qp::QpSolution s = qp::solve_qp(p, {});
    REQUIRE(s.ok());
    CHECK(s.x(0) == doctest::Approx(0.0).epsilon(1e-7));
    CHECK(s.ineq_mult(0) == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("equality-constrained path") {
    QuadraticProgram p;
    p.Q = -Eigen::MatrixXd::Identity(2, 2);
    p.c = Eigen::VectorXd::Zero(2);
    p.A_eq.setOnes(1, 2);
    p.b_eq = Eigen::VectorXd::Constant(1, 4.0);
    p.A_in.resize(0, 2);
    p.b_in.resize(0);
    p.nonneg = {false, false};
    p.var_names = {"a", "b"};
    qp::QpSolution s = qp::solve_qp(p, {});
    REQUIRE(s.ok());
    CHECK(s.x(0) == doctest::Approx(2.0).epsilon(1e-7));
    CHECK(s.x(1) == doctest::Approx(2.0).epsilon(1e-7));
}

TEST_CASE("random concave programs match the enumeration oracle") {
    Rng rng(41);
    OracleBudget budget;
    for (int t = 0; t < 25; ++t) {
        const int n = rng.uniform_int(2, 6);
        const int rows = rng.uniform_int(0, 4);
        QuadraticProgram p = random_concave(rng, n, rows);
        if (p.n_inequalities() > budget.max_inequalities) continue;

        qp::QpSolution ipm = qp::solve_qp(p, {});
        REQUIRE(ipm.ok());
        OracleResult oracle = enumerate_active_sets_qp(p, budget);
        CHECK(std::abs(ipm.objective - oracle.best.objective) <=
              1e-6 * (1.0 + std::abs(oracle.best.objective)));
    }
}

TEST_CASE("infeasible program is reported, not silently solved") {
    QuadraticProgram p;
    p.Q = -Eigen::MatrixXd::Identity(1, 1);
    p.c = Eigen::VectorXd::Zero(1);
    p.A_eq.resize(0, 1);
    p.b_eq.resize(0);
    p.A_in.setZero(2, 1);
    p.A_in(0, 0) = -1.0;  // x >= 1
    p.A_in(1, 0) = 1.0;   // x <= 0
    p.b_in.resize(2);
    p.b_in << -1.0, 0.0;
    p.nonneg = {false};
    p.var_names = {"x"};
    SolverSettings s;
    s.max_iterations = 60;
    qp::QpSolution sol = qp::solve_qp(p, s);
    CHECK_FALSE(sol.ok());
}

TEST_CASE("malformed program is rejected") {
    QuadraticProgram p = parabola();
    p.Q(0, 0) = 2.0;  // convex maximization
    CHECK_THROWS_AS(qp::solve_qp(p, {}), solver_error);
}

TEST_CASE("enumeration reports inconsistent programs") {
    QuadraticProgram p = parabola();
    p.nonneg = {true};
    p.A_in.setZero(1, 1);
    p.A_in(0, 0) = 1.0;  // x <= -1 contradicts x >= 0
    p.b_in = Eigen::VectorXd::Constant(1, -1.0);
    CHECK_THROWS_AS(enumerate_active_sets_qp(p, {}), solver_error);
}
