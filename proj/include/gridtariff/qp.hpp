#pragma once

// Dense concave-QP solver. Problems are stated in maximization form:
//
//   maximize   x' Q x / 2 + c' x
//   subject to A_eq x  = b_eq      (multipliers nu, free)
//              A_in x <= b_in      (multipliers mu >= 0)
//              x_j    >= 0         (for flagged j, multipliers sigma >= 0)
//
// with Q negative semidefinite. Internally solved as a convex minimization by
// a primal-dual interior-point method with Mehrotra predictor-corrector steps
// and a small fixed diagonal regularization; instances here are tiny (tens of
// variables), so dense LDLT factorizations are used throughout.

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "gridtariff/types.hpp"

namespace gridtariff::qp {

struct QuadraticProgram {
    Eigen::MatrixXd Q;     // n x n, negative semidefinite
    Eigen::VectorXd c;     // n
    Eigen::MatrixXd A_eq;  // p x n (p may be 0)
    Eigen::VectorXd b_eq;
    Eigen::MatrixXd A_in;  // m x n (m may be 0)
    Eigen::VectorXd b_in;
    std::vector<bool> nonneg;            // per-variable lower bound at zero
    std::vector<std::string> var_names;  // layout descriptor

    int n_vars() const { return static_cast<int>(Q.rows()); }
    int n_eq() const { return static_cast<int>(A_eq.rows()); }
    int n_in() const { return static_cast<int>(A_in.rows()); }
    int n_bounds() const;
    // Total inequality count seen by the KKT system (rows of A_in plus bounds).
    int n_inequalities() const { return n_in() + n_bounds(); }

    // Structural checks: dimension consistency and Q symmetric NSD (within tol).
    std::vector<std::string> structural_violations(double tol = 1e-8) const;
};

enum class SolveStatus {
    Optimal,
    MaxIterations,
    PrimalInfeasible,
    Unbounded,
    NumericalFailure,
};

std::string to_string(SolveStatus s);

struct QpSolution {
    Eigen::VectorXd x;
    Eigen::VectorXd eq_mult;     // nu
    Eigen::VectorXd ineq_mult;   // mu, size n_in
    Eigen::VectorXd bound_mult;  // sigma, size n (zero for unbounded vars)
    double objective = 0.0;      // maximization objective at x
    SolveStatus status = SolveStatus::NumericalFailure;
    SolveDiagnostics diagnostics;

    bool ok() const { return status == SolveStatus::Optimal; }
};

QpSolution solve_qp(const QuadraticProgram& prog, const SolverSettings& settings);

}  // namespace gridtariff::qp
