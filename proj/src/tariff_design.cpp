#include "gridtariff/tariff_design.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gridtariff/market_model.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gridtariff {

double equity_gap(const std::vector<double>& incidences) {
    if (incidences.empty()) throw model_error("equity gap needs at least one populated group");
    const double mean =
        std::accumulate(incidences.begin(), incidences.end(), 0.0) / incidences.size();
    double b = 0.0;
    for (double v : incidences) b += (v - mean) * (v - mean);
    return b;
}

std::vector<GroupIncidence> group_spends(const MarketInstance& inst,
                                         const VolumetricCharges& tau,
                                         const EquilibriumSolution& sol) {
    std::vector<GroupIncidence> gs;
    for (const auto& c : inst.consumers) {
        if (!(c.households > 0.0)) continue;
        GroupIncidence g{c.node, false, c.households, c.income, 0.0, 0.0};
        g.spend = (sol.p[c.node] + tau.buy) * sol.d[c.node] / c.households;
        gs.push_back(g);
    }
    for (const auto& p : inst.prosumers) {
        if (!(p.households > 0.0)) continue;
        GroupIncidence g{p.node, true, p.households, p.income, 0.0, 0.0};
        // net position: the buy/sell split is not unique under net metering
        const double z_buy = canonicalize_net_position(sol.z_sell[p.node], sol.z_buy[p.node]).second;
        g.spend = ((sol.p[p.node] + tau.buy) * z_buy + backup_cost(p, sol.g_backup[p.node])) /
                      p.households +
                  p.sunk_cost;
        gs.push_back(g);
    }
    return gs;
}

namespace {

double phi_of(const FixedCharges& phi, const GroupIncidence& g) {
    const auto& v = g.is_prosumer ? phi.prosumer : phi.consumer;
    if (g.node >= static_cast<int>(v.size()))
        throw model_error("fixed charge missing for populated group at node " +
                          std::to_string(g.node));
    return v[g.node];
}

IncidenceReport build_report(const std::vector<GroupIncidence>& gs, const FixedCharges& phi) {
    IncidenceReport rep;
    for (const auto& g : gs) {
        GroupIncidence gi = g;
        gi.incidence = (g.spend + phi_of(phi, g)) / g.income;
        rep.groups.push_back(gi);
    }
    rep.gap_B = equity_gap(rep.incidences());
    return rep;
}

FixedCharges charges_from_vector(const MarketInstance& inst,
                                 const std::vector<GroupIncidence>& gs,
                                 const Eigen::VectorXd& phi) {
    FixedCharges out;
    out.consumer.assign(inst.n_nodes(), 0.0);
    out.prosumer.assign(inst.n_nodes(), 0.0);
    for (int g = 0; g < static_cast<int>(gs.size()); ++g) {
        const double v = std::max(0.0, phi(g));
        if (gs[g].is_prosumer)
            out.prosumer[gs[g].node] = v;
        else
            out.consumer[gs[g].node] = v;
    }
    return out;
}

}  // namespace

IncidenceReport incidence(const MarketInstance& inst, const VolumetricCharges& tau,
                          const FixedCharges& phi, const EquilibriumSolution& sol) {
    auto gs = group_spends(inst, tau, sol);
    if (gs.empty()) throw model_error("no populated groups");
    return build_report(gs, phi);
}

RevenueReport revenue(const MarketInstance& inst, const VolumetricCharges& tau,
                      const FixedCharges& phi, const EquilibriumSolution& sol) {
    RevenueReport rep;
    rep.target = inst.fixed_cost_target;
    for (int i = 0; i < inst.n_nodes(); ++i) {
        auto [zs, zb] = canonicalize_net_position(sol.z_sell[i], sol.z_buy[i]);
        rep.volumetric += -tau.sell * zs + tau.buy * zb + tau.buy * sol.d[i];
    }
    for (const auto& c : inst.consumers)
        if (c.households > 0.0 && c.node < static_cast<int>(phi.consumer.size()))
            rep.fixed += c.households * phi.consumer[c.node];
    for (const auto& p : inst.prosumers)
        if (p.households > 0.0 && p.node < static_cast<int>(phi.prosumer.size()))
            rep.fixed += p.households * phi.prosumer[p.node];
    rep.residual = rep.volumetric + rep.fixed - rep.target;
    return rep;
}

AllocationResult allocate_fixed_charges(const MarketInstance& inst,
                                        const VolumetricCharges& tau,
                                        const EquilibriumSolution& sol, double fixed_budget,
                                        const SolverSettings& settings) {
    return allocate_from_spends(inst, group_spends(inst, tau, sol), fixed_budget, settings);
}

AllocationResult allocate_from_spends(const MarketInstance& inst,
                                      const std::vector<GroupIncidence>& gs,
                                      double fixed_budget, const SolverSettings& settings) {
    if (fixed_budget < 0.0) throw model_error("fixed-charge budget must be nonnegative");
    const int G = static_cast<int>(gs.size());
    if (G == 0) throw model_error("no populated groups to allocate fixed charges to");

    AllocationResult res;

    if (fixed_budget == 0.0) {
        res.phi = charges_from_vector(inst, gs, Eigen::VectorXd::Zero(G));
        res.report = build_report(gs, res.phi);
        res.stage1_gap = res.report.gap_B;
        res.equity_feasible = res.stage1_gap <= 1e-10;
        return res;
    }

    Eigen::VectorXd inv_income(G), t0(G), n_house(G);
    for (int g = 0; g < G; ++g) {
        inv_income(g) = 1.0 / gs[g].income;
        t0(g) = gs[g].spend / gs[g].income;
        n_house(g) = gs[g].households;
    }
    const Eigen::MatrixXd C =
        Eigen::MatrixXd::Identity(G, G) - Eigen::MatrixXd::Constant(G, G, 1.0 / G);
    const Eigen::MatrixXd D = inv_income.asDiagonal();

    // Stage 1: minimize B(phi) subject to the budget equality and phi >= 0.
    qp::QuadraticProgram s1;
    s1.Q = -2.0 * D * C * D;
    s1.c = -2.0 * D * C * t0;
    s1.A_eq = n_house.transpose();
    s1.b_eq = Eigen::VectorXd::Constant(1, fixed_budget);
    s1.A_in.resize(0, G);
    s1.b_in.resize(0);
    s1.nonneg.assign(G, true);
    for (int g = 0; g < G; ++g)
        s1.var_names.push_back("phi[" + std::to_string(g) + "]");

    qp::QpSolution stage1 = qp::solve_qp(s1, settings);
    if (!stage1.ok())
        throw solver_error("fixed-charge stage-1 allocation failed: " +
                           qp::to_string(stage1.status));
    Eigen::VectorXd phi = stage1.x;
    {
        Eigen::VectorXd inc = D * phi + t0;
        res.stage1_gap = (C * inc).squaredNorm();
    }

    // Stage 2: minimum-norm selection on the equal-incidence set, attempted when
    // stage 1 reached (numerically) zero gap, verified before acceptance.
    res.equity_feasible = false;
    if (res.stage1_gap <= 1e-8) {
        qp::QuadraticProgram s2;
        const int nv = G + 1;  // phi plus the common incidence level t
        s2.Q = Eigen::MatrixXd::Zero(nv, nv);
        s2.Q.topLeftCorner(G, G) = -Eigen::MatrixXd::Identity(G, G);
        s2.c = Eigen::VectorXd::Zero(nv);
        s2.A_eq = Eigen::MatrixXd::Zero(G + 1, nv);
        s2.b_eq = Eigen::VectorXd::Zero(G + 1);
        for (int g = 0; g < G; ++g) {
            s2.A_eq(g, g) = inv_income(g);
            s2.A_eq(g, G) = -1.0;
            s2.b_eq(g) = -t0(g);
        }
        s2.A_eq.row(G).head(G) = n_house.transpose();
        s2.b_eq(G) = fixed_budget;
        s2.A_in.resize(0, nv);
        s2.b_in.resize(0);
        s2.nonneg.assign(nv, true);
        s2.nonneg[G] = false;
        for (int g = 0; g < G; ++g)
            s2.var_names.push_back("phi[" + std::to_string(g) + "]");
        s2.var_names.push_back("t");

        try {
            qp::QpSolution stage2 = qp::solve_qp(s2, settings);
            if (stage2.ok()) {
                const Eigen::VectorXd cand = stage2.x.head(G);
                const Eigen::VectorXd inc = D * cand + t0;
                const double gap = (C * inc).squaredNorm();
                const double budget_err = std::abs(n_house.dot(cand) - fixed_budget);
                if (gap <= 1e-10 && cand.minCoeff() >= -1e-9 &&
                    budget_err <= 1e-7 * (1.0 + fixed_budget)) {
                    phi = cand;
                    res.equity_feasible = true;
                }
            }
        } catch (const solver_error&) {
            // stage-1 solution stands
        }
    }

    res.phi = charges_from_vector(inst, gs, phi);
    res.report = build_report(gs, res.phi);
    return res;
}

namespace {

double volumetric_of(const MarketInstance& inst, const VolumetricCharges& tau,
                     const EquilibriumSolution& sol) {
    double v = 0.0;
    for (int i = 0; i < inst.n_nodes(); ++i) {
        auto [zs, zb] = canonicalize_net_position(sol.z_sell[i], sol.z_buy[i]);
        v += -tau.sell * zs + tau.buy * zb + tau.buy * sol.d[i];
    }
    return v;
}

TariffReport assemble_report(const MarketInstance& inst, const VolumetricCharges& tau,
                             const EquilibriumSolution& sol, const AllocationResult& alloc,
                             double equity_weight) {
    TariffReport rep;
    rep.tau = tau;
    rep.phi = alloc.phi;
    rep.solution = sol;
    rep.surplus = surplus_decomposition(inst, tau, sol);
    rep.incidence = alloc.report;
    rep.revenue = revenue(inst, tau, alloc.phi, sol);
    rep.equity_feasible = alloc.equity_feasible;
    rep.upper_objective = sol.objective - equity_weight * alloc.report.gap_B;
    return rep;
}

struct CandidateEval {
    bool feasible = false;
    double tau_sell = 0.0;
    double tau_buy = 0.0;
    double objective = -std::numeric_limits<double>::infinity();
    double max_revenue_seen = 0.0;
};

// Inner 1-D root finding: smallest tau_b in [max(0, tau_s), buy_max] with
// volumetric revenue equal to the target, by scan plus bisection.
CandidateEval eval_tau_sell(const MarketInstance& inst, const TauBox& box, double tau_s,
                            double target, double fixed_budget, double equity_weight,
                            const SolverSettings& settings) {
    CandidateEval ev;
    ev.tau_sell = tau_s;
    const double lo = std::max(0.0, tau_s);
    const double hi = box.buy_max;
    if (lo > hi) return ev;

    // Revenue-adequacy budget: a quarter of the 1e-6-relative allowance.
    const double tol_rev = 2.5e-8 * std::max(inst.fixed_cost_target, 1.0);
    const int n_scan = 33;
    auto rev_at = [&](double tb) {
        VolumetricCharges tau{tb, tau_s, box};
        EquilibriumSolution sol = solve_equilibrium(inst, tau, settings);
        return volumetric_of(inst, tau, sol);
    };

    double prev_t = lo, prev_h = rev_at(lo) - target;
    ev.max_revenue_seen = prev_h + target;
    double root = std::numeric_limits<double>::quiet_NaN();
    if (std::abs(prev_h) <= tol_rev) root = lo;
    for (int j = 1; j < n_scan && !(root == root); ++j) {
        const double t = lo + (hi - lo) * j / (n_scan - 1);
        const double h = rev_at(t) - target;
        ev.max_revenue_seen = std::max(ev.max_revenue_seen, h + target);
        if (std::abs(h) <= tol_rev) {
            root = t;
            break;
        }
        if (prev_h * h < 0.0) {
            double a = prev_t, b = t, ha = prev_h;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (a + b);
                const double hm = rev_at(mid) - target;
                if (std::abs(hm) <= tol_rev || (b - a) < 1e-13 * (1.0 + hi)) {
                    root = mid;
                    break;
                }
                if (ha * hm < 0.0)
                    b = mid;
                else {
                    a = mid;
                    ha = hm;
                }
            }
            if (!(root == root)) root = 0.5 * (a + b);
            break;
        }
        prev_t = t;
        prev_h = h;
    }
    if (!(root == root)) return ev;

    VolumetricCharges tau{root, tau_s, box};
    EquilibriumSolution sol = solve_equilibrium(inst, tau, settings);
    AllocationResult alloc = allocate_fixed_charges(inst, tau, sol, fixed_budget, settings);
    ev.feasible = true;
    ev.tau_buy = root;
    ev.objective = sol.objective - equity_weight * alloc.report.gap_B;
    return ev;
}

}  // namespace

TariffReport optimal_tariff(const MarketInstance& inst, const SolverSettings& settings) {
    require_valid(inst);
    VolumetricCharges tau{0.0, 0.0, default_tau_box(inst)};
    EquilibriumSolution sol = solve_equilibrium(inst, tau, settings);
    AllocationResult alloc =
        allocate_fixed_charges(inst, tau, sol, inst.fixed_cost_target, settings);
    return assemble_report(inst, tau, sol, alloc, inst.equity_weight);
}

TariffReport constrained_tariff(const MarketInstance& inst, const FractionPolicy& policy,
                                const SolverSettings& settings) {
    require_valid(inst);
    if (policy.fraction < 0.0 || policy.fraction > 1.0)
        throw model_error("volumetric fraction must lie in [0,1]");
    if (policy.fraction == 0.0) return optimal_tariff(inst, settings);

    const TauBox box = default_tau_box(inst);
    const double target = policy.fraction * inst.fixed_cost_target;
    const double fixed_budget = (1.0 - policy.fraction) * inst.fixed_cost_target;
    const double M = policy.equity_weight >= 0.0 ? policy.equity_weight : inst.equity_weight;

    // Candidate tau_s values ordered by distance from zero: the first candidate
    // attaining the best objective wins, so flat directions resolve to the
    // least-distorting choice deterministically.
    auto make_candidates = [](double lo, double hi, int count) {
        std::vector<double> v;
        for (int j = 0; j < count; ++j) v.push_back(lo + (hi - lo) * j / (count - 1));
        std::stable_sort(v.begin(), v.end(), [](double a, double b) {
            if (std::abs(a) != std::abs(b)) return std::abs(a) < std::abs(b);
            return a < b;
        });
        return v;
    };

    auto evaluate_all = [&](const std::vector<double>& cands) {
        std::vector<CandidateEval> evals(cands.size());
#ifdef _OPENMP
        const bool par = !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (par)
#endif
        for (int j = 0; j < static_cast<int>(cands.size()); ++j) {
            try {
                evals[j] =
                    eval_tau_sell(inst, box, cands[j], target, fixed_budget, M, settings);
            } catch (const std::exception&) {
                evals[j] = CandidateEval{};  // infeasible candidate, skipped
                evals[j].tau_sell = cands[j];
            }
        }
        return evals;
    };

    // Improvements below the root-finder's objective jitter (the revenue
    // tolerance times dPi/drev ~ 1) count as ties, so the |tau_s|-ordered scan
    // resolves flat directions toward zero.
    auto improvement = [&](double incumbent) {
        return std::max({0.1, 100.0 * 2.5e-8 * inst.fixed_cost_target,
                         1e-8 * (1.0 + std::abs(incumbent))});
    };
    auto best_of = [&](const std::vector<CandidateEval>& evals) -> const CandidateEval* {
        const CandidateEval* best = nullptr;
        for (const auto& ev : evals) {
            if (!ev.feasible) continue;
            if (best == nullptr || ev.objective > best->objective + improvement(best->objective))
                best = &ev;
        }
        return best;
    };

    double max_rev = 0.0;
    auto track_max = [&](const std::vector<CandidateEval>& evals) {
        for (const auto& ev : evals) max_rev = std::max(max_rev, ev.max_revenue_seen);
    };

    const int kCoarse = 21;
    std::vector<double> coarse = make_candidates(box.sell_min, box.buy_max, kCoarse);
    std::vector<CandidateEval> evals = evaluate_all(coarse);
    track_max(evals);
    const CandidateEval* coarse_best = best_of(evals);
    if (coarse_best == nullptr) throw fraction_unattainable(policy.fraction, max_rev);
    CandidateEval win = *coarse_best;

    // Multiresolution refinement around the incumbent tau_s.
    double halfwidth = (box.buy_max - box.sell_min) / (kCoarse - 1);
    for (int pass = 0; pass < 3; ++pass) {
        std::vector<double> fine =
            make_candidates(std::max(box.sell_min, win.tau_sell - halfwidth),
                            std::min(box.buy_max, win.tau_sell + halfwidth), kCoarse);
        std::vector<CandidateEval> fevals = evaluate_all(fine);
        track_max(fevals);
        const CandidateEval* fbest = best_of(fevals);
        if (fbest != nullptr && fbest->objective > win.objective + improvement(win.objective))
            win = *fbest;
        halfwidth /= 10.0;
    }
    VolumetricCharges tau{win.tau_buy, win.tau_sell, box};
    EquilibriumSolution sol = solve_equilibrium(inst, tau, settings);
    AllocationResult alloc = allocate_fixed_charges(inst, tau, sol, fixed_budget, settings);
    return assemble_report(inst, tau, sol, alloc, M);
}

SweepTable sweep_fraction(const MarketInstance& inst, const std::vector<double>& fractions,
                          const SolverSettings& settings, ExecPolicy policy) {
    for (double f : fractions)
        if (f < 0.0 || f > 1.0) throw model_error("sweep fractions must lie in [0,1]");

    SweepTable table;
    table.rows.resize(fractions.size());

#ifdef _OPENMP
    const bool par = policy == ExecPolicy::Parallel && !omp_in_parallel();
#pragma omp parallel for schedule(dynamic) if (par)
#endif
    for (int j = 0; j < static_cast<int>(fractions.size()); ++j) {
        SweepRow& row = table.rows[j];
        row.fraction = fractions[j];
        try {
            row.report = constrained_tariff(inst, FractionPolicy{fractions[j], -1.0}, settings);
            row.status = "ok";
        } catch (const fraction_unattainable& e) {
            row.status = "unattainable_max_volumetric=" + std::to_string(e.max_attainable_revenue);
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
    }
    return table;
}

}  // namespace gridtariff
