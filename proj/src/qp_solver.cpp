#include "gridtariff/qp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gridtariff::qp {

int QuadraticProgram::n_bounds() const {
    int k = 0;
    for (bool b : nonneg)
        if (b) ++k;
    return k;
}

std::vector<std::string> QuadraticProgram::structural_violations(double tol) const {
    std::vector<std::string> v;
    const int n = n_vars();
    if (Q.cols() != n) v.push_back("Q not square");
    if (c.size() != n) v.push_back("c size mismatch");
    if (A_eq.rows() != b_eq.size()) v.push_back("equality rhs size mismatch");
    if (A_eq.rows() > 0 && A_eq.cols() != n) v.push_back("A_eq column count mismatch");
    if (A_in.rows() != b_in.size()) v.push_back("inequality rhs size mismatch");
    if (A_in.rows() > 0 && A_in.cols() != n) v.push_back("A_in column count mismatch");
    if (static_cast<int>(nonneg.size()) != n) v.push_back("nonneg flag size mismatch");
    if (Q.cols() == n && c.size() == n) {
        if ((Q - Q.transpose()).cwiseAbs().maxCoeff() > tol) v.push_back("Q not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Q + Q.transpose()));
        if (es.info() == Eigen::Success && es.eigenvalues().size() > 0 &&
            es.eigenvalues().maxCoeff() > tol * (1.0 + Q.cwiseAbs().maxCoeff()))
            v.push_back("Q has a positive eigenvalue (objective not concave)");
    }
    return v;
}

std::string to_string(SolveStatus s) {
    switch (s) {
        case SolveStatus::Optimal: return "optimal";
        case SolveStatus::MaxIterations: return "max_iterations";
        case SolveStatus::PrimalInfeasible: return "primal_infeasible";
        case SolveStatus::Unbounded: return "unbounded";
        case SolveStatus::NumericalFailure: return "numerical_failure";
    }
    return "unknown";
}

namespace {

// Builds the stacked inequality system G x <= h from A_in rows plus -x_j <= 0
// bound rows, remembering the bound row -> variable mapping.
struct Stacked {
    Eigen::MatrixXd G;
    Eigen::VectorXd h;
    std::vector<int> bound_var;  // for rows past A_in
};

Stacked stack_inequalities(const QuadraticProgram& prog) {
    const int n = prog.n_vars();
    const int m_in = prog.n_in();
    const int m_b = prog.n_bounds();
    Stacked s;
    s.G.setZero(m_in + m_b, n);
    s.h.setZero(m_in + m_b);
    if (m_in > 0) {
        s.G.topRows(m_in) = prog.A_in;
        s.h.head(m_in) = prog.b_in;
    }
    int r = m_in;
    for (int j = 0; j < n; ++j) {
        if (!prog.nonneg[j]) continue;
        s.G(r, j) = -1.0;
        s.bound_var.push_back(j);
        ++r;
    }
    return s;
}

double max_step(const Eigen::VectorXd& v, const Eigen::VectorXd& dv) {
    double a = 1.0;
    for (int i = 0; i < v.size(); ++i)
        if (dv(i) < 0.0) a = std::min(a, -v(i) / dv(i));
    return a;
}

// Fallback cleanup: least-norm primal correction onto the active face, duals
// untouched. Repairs the tiny bound violations an interior iterate can carry
// (x_j = s_j - rg_j can dip below zero at small slacks).
bool project_primal(const QuadraticProgram& prog, const Eigen::MatrixXd& G,
                    const Eigen::VectorXd& h, const std::vector<int>& act,
                    Eigen::VectorXd& x, Eigen::VectorXd& s) {
    const int n = prog.n_vars();
    const int p = prog.n_eq();
    const int t = static_cast<int>(act.size());
    if (p + t == 0) return true;

    Eigen::MatrixXd M(p + t, n);
    Eigen::VectorXd resid(p + t);
    if (p > 0) {
        M.topRows(p) = prog.A_eq;
        resid.head(p) = prog.A_eq * x - prog.b_eq;
    }
    for (int r = 0; r < t; ++r) {
        M.row(p + r) = G.row(act[r]);
        resid(p + r) = G.row(act[r]).dot(x) - h(act[r]);
    }
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(M);
    Eigen::VectorXd dx = cod.solve(-resid);
    if (!dx.allFinite()) return false;
    const Eigen::VectorXd x2 = x + dx;

    const double scale = 1.0 + resid.cwiseAbs().maxCoeff();
    Eigen::VectorXd resid2(p + t);
    if (p > 0) resid2.head(p) = prog.A_eq * x2 - prog.b_eq;
    for (int r = 0; r < t; ++r) resid2(p + r) = G.row(act[r]).dot(x2) - h(act[r]);
    if (resid2.cwiseAbs().maxCoeff() > 1e-10 * scale) return false;

    const int m = static_cast<int>(G.rows());
    const double htop = 1.0 + (m > 0 ? h.cwiseAbs().maxCoeff() : 0.0);
    const Eigen::VectorXd slack = h - G * x2;
    if (m > 0 && slack.minCoeff() < -1e-9 * htop) return false;

    const double obj_old = 0.5 * x.dot(prog.Q * x) + prog.c.dot(x);
    const double obj_new = 0.5 * x2.dot(prog.Q * x2) + prog.c.dot(x2);
    if (std::abs(obj_new - obj_old) > 1e-5 * (1.0 + std::abs(obj_old))) return false;

    x = x2;
    s = slack.cwiseMax(0.0);
    for (int r = 0; r < t; ++r) s(act[r]) = 0.0;
    return true;
}

// Active-set cleanup after interior-point convergence: pins the rows the
// iterate identifies as active and re-solves the equality KKT system, which
// zeroes the complementarity products exactly. Falls back to the primal
// projection when the full system does not verify.
bool polish(const QuadraticProgram& prog, const Eigen::MatrixXd& G, const Eigen::VectorXd& h,
            Eigen::VectorXd& x, Eigen::VectorXd& y, Eigen::VectorXd& z,
            Eigen::VectorXd& s) {
    const int n = prog.n_vars();
    const int p = prog.n_eq();
    const int m = static_cast<int>(G.rows());
    const Eigen::MatrixXd P = -prog.Q;
    const Eigen::VectorXd q = -prog.c;

    std::vector<int> act;
    for (int i = 0; i < m; ++i)
        if (z(i) >= s(i)) act.push_back(i);
    const int t = static_cast<int>(act.size());

    const auto fallback = [&] { return project_primal(prog, G, h, act, x, s); };

    Eigen::MatrixXd K(n + p + t, n + p + t);
    K.setZero();
    Eigen::VectorXd rhs(n + p + t);
    K.topLeftCorner(n, n) = P;
    rhs.head(n) = -q;
    if (p > 0) {
        K.block(0, n, n, p) = prog.A_eq.transpose();
        K.block(n, 0, p, n) = prog.A_eq;
        rhs.segment(n, p) = prog.b_eq;
    }
    for (int r = 0; r < t; ++r) {
        K.block(0, n + p + r, n, 1) = G.row(act[r]).transpose();
        K.block(n + p + r, 0, 1, n) = G.row(act[r]);
        rhs(n + p + r) = h(act[r]);
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    Eigen::VectorXd sol = cod.solve(rhs);
    if (!sol.allFinite()) return fallback();
    const double sys_res = (K * sol - rhs).cwiseAbs().maxCoeff();
    if (sys_res > 1e-10 * (1.0 + rhs.cwiseAbs().maxCoeff())) return fallback();

    const Eigen::VectorXd xp = sol.head(n);
    const Eigen::VectorXd hscaled = h.cwiseAbs();
    const double htop = 1.0 + (m > 0 ? hscaled.maxCoeff() : 0.0);
    const Eigen::VectorXd slack = h - G * xp;
    if (m > 0 && slack.minCoeff() < -1e-9 * htop) return fallback();
    // Tight rows must hold almost exactly: complementarity products scale with
    // the dual magnitudes, so loose actives would leak into the KKT residuals.
    for (int r = 0; r < t; ++r) {
        if (std::abs(G.row(act[r]).dot(xp) - h(act[r])) > 1e-9) return fallback();
        if (sol(n + p + r) < -1e-7 * (1.0 + std::abs(h(act[r])))) return fallback();
    }

    const double obj_old = -(0.5 * x.dot(P * x) + q.dot(x));
    const double obj_new = -(0.5 * xp.dot(P * xp) + q.dot(xp));
    if (std::abs(obj_new - obj_old) > 1e-5 * (1.0 + std::abs(obj_old))) return fallback();

    x = xp;
    if (p > 0) y = sol.segment(n, p);
    z.setZero();
    for (int r = 0; r < t; ++r) z(act[r]) = std::max(0.0, sol(n + p + r));
    s = (h - G * xp).cwiseMax(0.0);
    for (int r = 0; r < t; ++r) s(act[r]) = 0.0;
    return true;
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& prog, const SolverSettings& settings) {
    QpSolution out;
    {
        auto viol = prog.structural_violations();
        if (!viol.empty()) throw solver_error("malformed QP: " + viol.front());
    }

    const int n = prog.n_vars();
    const int p = prog.n_eq();
    const Eigen::MatrixXd P = -prog.Q;  // PSD for the internal minimization
    const Eigen::VectorXd q = -prog.c;
    const Stacked st = stack_inequalities(prog);
    const Eigen::MatrixXd& G = st.G;
    const Eigen::VectorXd& h = st.h;
    const int m = static_cast<int>(G.rows());

    const double reg = std::max(settings.regularization, 1e-14);
    const double bscale = 1.0 + (p > 0 ? prog.b_eq.cwiseAbs().maxCoeff() : 0.0);
    const double hscale = 1.0 + (m > 0 ? h.cwiseAbs().maxCoeff() : 0.0);
    const double qscale = 1.0 + q.cwiseAbs().maxCoeff();

    auto fill_multipliers = [&](const Eigen::VectorXd& z) {
        out.ineq_mult = z.head(prog.n_in());
        out.bound_mult.setZero(n);
        for (int r = 0; r < static_cast<int>(st.bound_var.size()); ++r)
            out.bound_mult(st.bound_var[r]) = z(prog.n_in() + r);
    };

    auto objective_of = [&](const Eigen::VectorXd& x) {
        return 0.5 * x.dot(prog.Q * x) + prog.c.dot(x);
    };

    // Equality-constrained (or unconstrained) case: one regularized KKT solve.
    if (m == 0) {
        Eigen::MatrixXd K(n + p, n + p);
        K.setZero();
        K.topLeftCorner(n, n) = P + reg * Eigen::MatrixXd::Identity(n, n);
        if (p > 0) {
            K.topRightCorner(n, p) = prog.A_eq.transpose();
            K.bottomLeftCorner(p, n) = prog.A_eq;
            K.bottomRightCorner(p, p) = -reg * Eigen::MatrixXd::Identity(p, p);
        }
        Eigen::VectorXd rhs(n + p);
        rhs.head(n) = -q;
        if (p > 0) rhs.tail(p) = prog.b_eq;
        Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
        out.x = sol.head(n);
        out.eq_mult = p > 0 ? Eigen::VectorXd(sol.tail(p)) : Eigen::VectorXd(0);
        fill_multipliers(Eigen::VectorXd::Zero(0));
        out.ineq_mult.resize(0);
        out.objective = objective_of(out.x);
        const double rp = p > 0 ? (prog.A_eq * out.x - prog.b_eq).cwiseAbs().maxCoeff() : 0.0;
        out.status = (std::isfinite(out.objective) && rp < 1e-6 * bscale)
                         ? SolveStatus::Optimal
                         : SolveStatus::NumericalFailure;
        out.diagnostics.iterations = 1;
        out.diagnostics.primal_residual = rp;
        return out;
    }

    // Starting point: regularized equality solve, slacks pushed into the interior.
    Eigen::VectorXd x(n);
    {
        Eigen::MatrixXd K(n + p, n + p);
        K.setZero();
        K.topLeftCorner(n, n) =
            P + std::max(1e-8, reg) * Eigen::MatrixXd::Identity(n, n);
        if (p > 0) {
            K.topRightCorner(n, p) = prog.A_eq.transpose();
            K.bottomLeftCorner(p, n) = prog.A_eq;
            K.bottomRightCorner(p, p) = -1e-8 * Eigen::MatrixXd::Identity(p, p);
        }
        Eigen::VectorXd rhs(n + p);
        rhs.head(n) = -q;
        if (p > 0) rhs.tail(p) = prog.b_eq;
        Eigen::VectorXd sol = K.partialPivLu().solve(rhs);
        x = sol.head(n);
        if (!x.allFinite()) x.setZero();
    }
    const double margin = std::max(1.0, 0.05 * hscale) * settings.start_scale;
    Eigen::VectorXd s = (h - G * x).cwiseMax(margin);
    Eigen::VectorXd z = Eigen::VectorXd::Constant(m, std::max(1.0, 0.05 * qscale) *
                                                         settings.start_scale);
    Eigen::VectorXd y = Eigen::VectorXd::Zero(p);

    Eigen::MatrixXd K(n + p, n + p);
    Eigen::VectorXd rhs(n + p), dx(n), dy(p), dz(m), ds(m);

    SolveStatus status = SolveStatus::MaxIterations;
    int iter = 0;
    double rp_eq = 0.0, rd_norm = 0.0, gap_rel = 0.0;
    double mu_best = std::numeric_limits<double>::infinity();
    int stalled = 0;  // Mehrotra steps can cycle; damp when mu stops improving

    for (iter = 0; iter < settings.max_iterations; ++iter) {
        const Eigen::VectorXd rd = P * x + q + (p > 0 ? Eigen::VectorXd(prog.A_eq.transpose() * y)
                                                      : Eigen::VectorXd(Eigen::VectorXd::Zero(n))) +
                                   G.transpose() * z;
        const Eigen::VectorXd rp = p > 0 ? Eigen::VectorXd(prog.A_eq * x - prog.b_eq)
                                         : Eigen::VectorXd(0);
        const Eigen::VectorXd rg = G * x + s - h;
        const double mu = s.dot(z) / m;

        rp_eq = p > 0 ? rp.cwiseAbs().maxCoeff() : 0.0;
        rd_norm = rd.cwiseAbs().maxCoeff();
        const double obj = objective_of(x);
        gap_rel = s.dot(z) / (1.0 + std::abs(obj));

#ifdef GRIDTARIFF_IPM_TRACE
        std::fprintf(stderr, "it %3d mu %.3e rp %.3e rd %.3e gap %.3e smin %.3e zmax %.3e\n",
                     iter, mu, rp_eq, rd_norm, gap_rel, s.minCoeff(), z.maxCoeff());
#endif
        if (!x.allFinite() || !s.allFinite() || !z.allFinite()) {
            status = SolveStatus::NumericalFailure;
            break;
        }
        if (x.cwiseAbs().maxCoeff() > 1e12) {
            status = SolveStatus::Unbounded;
            break;
        }

        const bool feas = rp_eq <= settings.feasibility_tolerance * bscale &&
                          rg.cwiseAbs().maxCoeff() <= settings.feasibility_tolerance * hscale &&
                          rd_norm <= 10.0 * settings.feasibility_tolerance * qscale;
        if (feas && gap_rel <= settings.duality_gap_tolerance) {
            status = SolveStatus::Optimal;
            break;
        }

        const Eigen::ArrayXd w = z.array() / s.array();
        Eigen::MatrixXd M = P + G.transpose() * w.matrix().asDiagonal() * G;
        M.diagonal().array() += reg;
        K.setZero(n + p, n + p);
        K.topLeftCorner(n, n) = M;
        if (p > 0) {
            K.topRightCorner(n, p) = prog.A_eq.transpose();
            K.bottomLeftCorner(p, n) = prog.A_eq;
            K.bottomRightCorner(p, p) = -reg * Eigen::MatrixXd::Identity(p, p);
        }
        Eigen::PartialPivLU<Eigen::MatrixXd> lu(K);

        auto kkt_solve = [&](const Eigen::VectorXd& rx, const Eigen::VectorXd& ry) {
            rhs.head(n) = rx;
            if (p > 0) rhs.tail(p) = ry;
            Eigen::VectorXd sol = lu.solve(rhs);
            // One step of iterative refinement.
            Eigen::VectorXd resid = rhs - K * sol;
            sol += lu.solve(resid);
            return sol;
        };

        // Affine predictor (sigma = 0): complementarity residual rc = s.*z.
        Eigen::VectorXd rc = s.array() * z.array();
        Eigen::VectorXd rx = -rd - G.transpose() * (w * rg.array() - (rc.array() / s.array())).matrix();
        Eigen::VectorXd sol = kkt_solve(rx, p > 0 ? Eigen::VectorXd(-rp) : Eigen::VectorXd(0));
        dx = sol.head(n);
        if (p > 0) dy = sol.tail(p);
        dz = (w * (G * dx + rg).array() - rc.array() / s.array()).matrix();
        ds = -rg - G * dx;

        const double ap_aff = max_step(s, ds);
        const double ad_aff = max_step(z, dz);
        const double mu_aff =
            (s + ap_aff * ds).dot(z + ad_aff * dz) / m;
        double sigma = std::pow(mu_aff / std::max(mu, 1e-300), 3);
        sigma = std::clamp(sigma, 1e-8, 1.0);
        if (mu < 0.9 * mu_best) {
            mu_best = mu;
            stalled = 0;
        } else {
            ++stalled;
        }
        if (stalled >= 3) sigma = std::max(sigma, 0.5);  // recenter to break cycles
        if (stalled >= 10) sigma = std::max(sigma, 0.9);

        // Corrector with centering.
        rc = (s.array() * z.array() + ds.array() * dz.array() - sigma * mu).matrix();
        rx = -rd - G.transpose() * (w * rg.array() - (rc.array() / s.array())).matrix();
        sol = kkt_solve(rx, p > 0 ? Eigen::VectorXd(-rp) : Eigen::VectorXd(0));
        dx = sol.head(n);
        if (p > 0) dy = sol.tail(p);
        dz = (w * (G * dx + rg).array() - rc.array() / s.array()).matrix();
        ds = -rg - G * dx;

        if (!dx.allFinite() || !ds.allFinite() || !dz.allFinite()) {
            // Numerics exhausted; accept the iterate if it is essentially converged.
            if (rp_eq <= 10 * settings.feasibility_tolerance * bscale &&
                gap_rel <= 1e3 * settings.duality_gap_tolerance)
                status = SolveStatus::Optimal;
            else
                status = SolveStatus::NumericalFailure;
            break;
        }

        // One common step length: with a nonzero quadratic term, unequal
        // primal/dual steps re-inject dual residual through P dx.
        double frac = mu > 1e-6 * hscale ? 0.995 : 0.9995;
        if (stalled >= 3) frac = 0.7;
        const double alpha =
            std::min({1.0, frac * max_step(s, ds), frac * max_step(z, dz)});
        x += alpha * dx;
        s += alpha * ds;
        if (p > 0) y += alpha * dy;
        z += alpha * dz;
    }

    if (status == SolveStatus::MaxIterations) {
        // If complementarity collapsed but primal residuals stayed large, the
        // problem is (numerically) infeasible rather than unconverged.
        if (gap_rel < 1e-8 && rp_eq > 1e3 * settings.feasibility_tolerance * bscale)
            status = SolveStatus::PrimalInfeasible;
        const Eigen::VectorXd rg = G * x + s - h;
        if (gap_rel < 1e-8 && rg.cwiseAbs().maxCoeff() > 1e3 * settings.feasibility_tolerance * hscale)
            status = SolveStatus::PrimalInfeasible;
        if (z.cwiseAbs().maxCoeff() > 1e10) status = SolveStatus::PrimalInfeasible;
    }

    if (status == SolveStatus::Optimal) polish(prog, G, h, x, y, z, s);

    out.x = x;
    out.eq_mult = y;
    fill_multipliers(z);
    out.objective = objective_of(x);
    out.status = status;
    out.diagnostics.iterations = iter;
    {
        const Eigen::VectorXd rd_f = P * x + q +
                                     (p > 0 ? Eigen::VectorXd(prog.A_eq.transpose() * y)
                                            : Eigen::VectorXd(Eigen::VectorXd::Zero(n))) +
                                     G.transpose() * z;
        out.diagnostics.primal_residual =
            p > 0 ? (prog.A_eq * x - prog.b_eq).cwiseAbs().maxCoeff() : 0.0;
        out.diagnostics.dual_residual = rd_f.cwiseAbs().maxCoeff();
        out.diagnostics.relative_gap = s.dot(z) / (1.0 + std::abs(out.objective));
        out.diagnostics.max_complementarity =
            s.size() > 0 ? (s.array() * z.array()).maxCoeff() : 0.0;
    }

    // Active-set rank diagnostic: LICQ / dual uniqueness hint at the solution.
    if (status == SolveStatus::Optimal) {
        std::vector<int> active;
        for (int i = 0; i < m; ++i)
            if (s(i) <= std::sqrt(settings.complementarity_tolerance) * (1.0 + std::abs(h(i))))
                active.push_back(i);
        Eigen::MatrixXd Gr(p + static_cast<int>(active.size()), n);
        if (p > 0) Gr.topRows(p) = prog.A_eq;
        for (int r = 0; r < static_cast<int>(active.size()); ++r)
            Gr.row(p + r) = G.row(active[r]);
        out.diagnostics.active_rows = static_cast<int>(Gr.rows());
        if (Gr.rows() > 0) {
            Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Gr.transpose());
            qr.setThreshold(1e-10);
            out.diagnostics.active_rank = static_cast<int>(qr.rank());
            out.diagnostics.dual_degenerate = out.diagnostics.active_rank < Gr.rows();
        }
    }
    return out;
}

}  // namespace gridtariff::qp
