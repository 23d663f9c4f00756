#include "gridtariff/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridtariff {

namespace {

constexpr double kSignSlack = 1e-9;  // admits degenerate zero multipliers

struct Candidate {
    bool valid = false;
    double objective = -std::numeric_limits<double>::infinity();
    std::uint32_t mask = 0;
    Eigen::VectorXd x, nu, mu_tight;
};

// Solves the stationarity system for a fixed tight set and filters by primal
// feasibility and multiplier signs. Redundant tight rows fall back to a
// minimum-norm least-squares solve followed by a feasibility re-check.
Candidate try_active_set(const qp::QuadraticProgram& prog, const Eigen::MatrixXd& G,
                         const Eigen::VectorXd& h, std::uint32_t mask, double tol) {
    const int n = prog.n_vars();
    const int p = prog.n_eq();
    const int m = static_cast<int>(G.rows());

    std::vector<int> tight;
    for (int i = 0; i < m; ++i)
        if (mask & (1u << i)) tight.push_back(i);
    const int t = static_cast<int>(tight.size());

    // Stationarity (max convention): Q x - A_eq' nu - C_S' mu = -c, plus the
    // equality rows and the tight rows.
    Eigen::MatrixXd K(n + p + t, n + p + t);
    K.setZero();
    Eigen::VectorXd rhs(n + p + t);
    K.topLeftCorner(n, n) = prog.Q;
    rhs.head(n) = -prog.c;
    if (p > 0) {
        K.block(0, n, n, p) = -prog.A_eq.transpose();
        K.block(n, 0, p, n) = prog.A_eq;
        rhs.segment(n, p) = prog.b_eq;
    }
    for (int r = 0; r < t; ++r) {
        K.block(0, n + p + r, n, 1) = -G.row(tight[r]).transpose();
        K.block(n + p + r, 0, 1, n) = G.row(tight[r]);
        rhs(n + p + r) = h(tight[r]);
    }

    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(K);
    Eigen::VectorXd sol = cod.solve(rhs);
    if (!sol.allFinite()) return {};
    if ((K * sol - rhs).cwiseAbs().maxCoeff() > tol * (1.0 + rhs.cwiseAbs().maxCoeff()))
        return {};

    Candidate cand;
    cand.x = sol.head(n);
    cand.nu = sol.segment(n, p);
    cand.mu_tight = sol.tail(t);

    for (int r = 0; r < t; ++r)
        if (cand.mu_tight(r) < -kSignSlack * (1.0 + std::abs(h(tight[r])))) return {};
    const Eigen::VectorXd slack = h - G * cand.x;
    if (slack.size() > 0 && slack.minCoeff() < -tol * (1.0 + h.cwiseAbs().maxCoeff())) return {};

    cand.valid = true;
    cand.mask = mask;
    cand.objective = 0.5 * cand.x.dot(prog.Q * cand.x) + prog.c.dot(cand.x);
    return cand;
}

// Lower subset index wins ties: associative, deterministic reduction.
void merge_best(Candidate& best, const Candidate& c) {
    if (!c.valid) return;
    if (!best.valid) {
        best = c;
        return;
    }
    const double tie = 1e-12 * (1.0 + std::abs(best.objective));
    if (c.objective > best.objective + tie ||
        (std::abs(c.objective - best.objective) <= tie && c.mask < best.mask))
        best = c;
}

}  // namespace

OracleResult enumerate_active_sets_qp(const qp::QuadraticProgram& prog,
                                      const OracleBudget& budget, ExecPolicy policy) {
    const int capped = std::min(budget.max_inequalities, 25);
    const int m = prog.n_inequalities();
    if (m > capped)
        throw solver_error("oracle budget exceeded: " + std::to_string(m) +
                           " inequalities, budget " + std::to_string(capped));

    // Same stacked row order as the interior-point path: A_in rows, then bounds.
    const int n = prog.n_vars();
    Eigen::MatrixXd G(m, n);
    Eigen::VectorXd h(m);
    G.setZero();
    h.setZero();
    if (prog.n_in() > 0) {
        G.topRows(prog.n_in()) = prog.A_in;
        h.head(prog.n_in()) = prog.b_in;
    }
    std::vector<int> bound_var;
    {
        int r = prog.n_in();
        for (int j = 0; j < n; ++j)
            if (prog.nonneg[j]) {
                G(r, j) = -1.0;
                bound_var.push_back(j);
                ++r;
            }
    }

    const std::uint64_t total = 1ull << m;
    Candidate best;
    int feasible = 0;

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#else
    const bool par = false;
#endif

    if (par) {
#ifdef _OPENMP
#pragma omp parallel
        {
            Candidate local;
            int local_feasible = 0;
#pragma omp for schedule(static)
            for (std::int64_t mask = 0; mask < static_cast<std::int64_t>(total); ++mask) {
                Candidate c = try_active_set(prog, G, h, static_cast<std::uint32_t>(mask),
                                             budget.tolerance);
                if (c.valid) {
                    ++local_feasible;
                    merge_best(local, c);
                }
            }
#pragma omp critical
            {
                feasible += local_feasible;
                merge_best(best, local);
            }
        }
#endif
    } else {
        for (std::uint64_t mask = 0; mask < total; ++mask) {
            Candidate c =
                try_active_set(prog, G, h, static_cast<std::uint32_t>(mask), budget.tolerance);
            if (c.valid) {
                ++feasible;
                merge_best(best, c);
            }
        }
    }

    if (!best.valid)
        throw solver_error("active-set enumeration found no feasible candidate (inconsistent instance)");

    OracleResult res;
    res.active_set = best.mask;
    res.candidates_feasible = feasible;
    res.best.x = best.x;
    res.best.eq_mult = best.nu;
    res.best.ineq_mult.setZero(prog.n_in());
    res.best.bound_mult.setZero(n);
    {
        int t = 0;
        for (int i = 0; i < m; ++i) {
            if (!(best.mask & (1u << i))) continue;
            const double mu = std::max(0.0, best.mu_tight(t++));
            if (i < prog.n_in())
                res.best.ineq_mult(i) = mu;
            else
                res.best.bound_mult(bound_var[i - prog.n_in()]) = mu;
        }
    }
    res.best.objective = best.objective;
    res.best.status = qp::SolveStatus::Optimal;
    return res;
}

EquilibriumSolution enumerate_active_sets(const MarketInstance& inst,
                                          const VolumetricCharges& tau,
                                          const OracleBudget& budget, ExecPolicy policy) {
    WelfareProgram prog = assemble_welfare_program(inst, tau);
    OracleResult res = enumerate_active_sets_qp(prog.qp, budget, policy);
    return extract_solution(inst, tau, prog, res.best);
}

SingleNodeClearing closed_form_single_node(double p0, double q0, double a, double A,
                                           double G, double tau_b) {
    SingleNodeClearing out;
    if (p0 <= a + tau_b) return out;  // demand priced out, no trade
    const double slope = p0 / q0;
    double d = (p0 - a - tau_b) / (slope + A);
    if (d <= G) {
        out.d = d;
        out.p = a + A * d;
        out.g = d;
        return out;
    }
    out.d = G;
    out.g = G;
    out.p = p0 - slope * G - tau_b;
    out.rho = out.p - (a + A * G);
    return out;
}

ConvexityReport convexity_probe(const std::vector<ConvexitySample>& samples) {
    const int n = static_cast<int>(samples.size());
    if (n < 3) throw model_error("convexity probe needs at least 3 samples");

    auto key = [](double b, double s) {
        return std::make_pair(std::llround(b * 1e7), std::llround(s * 1e7));
    };
    std::map<std::pair<long long, long long>, int> index;
    for (int i = 0; i < n; ++i)
        index[key(samples[i].tau_buy, samples[i].tau_sell)] = i;

    ConvexityReport rep;
    for (int i = 0; i < n; ++i) {
        for (int k = i + 1; k < n; ++k) {
            const double mb = 0.5 * (samples[i].tau_buy + samples[k].tau_buy);
            const double ms = 0.5 * (samples[i].tau_sell + samples[k].tau_sell);
            auto it = index.find(key(mb, ms));
            if (it == index.end() || it->second == i || it->second == k) continue;
            const int j = it->second;
            ++rep.triples_checked;
            const double viol =
                samples[j].value - 0.5 * (samples[i].value + samples[k].value);
            if (viol > rep.worst_violation) {
                rep.worst_violation = viol;
                rep.triple[0] = i;
                rep.triple[1] = j;
                rep.triple[2] = k;
            }
        }
    }
    if (rep.triples_checked == 0)
        throw model_error("convexity probe found no collinear midpoint triple");
    return rep;
}

}  // namespace gridtariff
