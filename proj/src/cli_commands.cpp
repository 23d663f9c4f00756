#include "gridtariff/cli_commands.hpp"

#include <cmath>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "gridtariff/config_io.hpp"
#include "gridtariff/grid_eval.hpp"
#include "gridtariff/market_model.hpp"
#include "gridtariff/random_instances.hpp"
#include "gridtariff/stochastic.hpp"
#include "gridtariff/tariff_design.hpp"
#include "gridtariff/verification.hpp"

namespace gridtariff::cli {

using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kBadConfig = 2;
constexpr int kSolverFailure = 3;

SolverSettings settings_of(const RunConfig& cfg) {
    SolverSettings s;
    if (cfg.tol > 0.0) {
        s.feasibility_tolerance = cfg.tol;
        s.complementarity_tolerance = cfg.tol;
    }
    return s;
}

MarketInstance load(const RunConfig& cfg) {
    if (cfg.config_path.empty()) throw config_error("--config is required");
    if (cfg.format != "csv" && cfg.format != "json")
        throw config_error("--format must be csv or json");
    return io::load_instance(cfg.config_path);
}

// Mirrors a metric,value CSV into a JSON object when --format json is chosen.
void maybe_write_json_summary(const RunConfig& cfg, const std::string& csv) {
    if (cfg.format != "json") return;
    json obj;
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);  // header
    while (std::getline(is, line)) {
        const auto comma = line.find(',');
        if (comma == std::string::npos) continue;
        const std::string key = line.substr(0, comma);
        const std::string value = line.substr(comma + 1);
        char* end = nullptr;
        const double num = std::strtod(value.c_str(), &end);
        if (end != nullptr && *end == '\0')
            obj[key] = num;
        else
            obj[key] = value;
    }
    io::write_text_file(cfg.out_dir / "summary.json", obj.dump(2) + "\n");
}

void ensure_out_dir(const RunConfig& cfg) {
    if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);
}

std::string tau_cell(const VolumetricCharges& tau) {
    return io::format_number(tau.buy) + " (" + io::format_number(tau.sell) + ")";
}

void append_solution_rows(std::string& csv, const MarketInstance& inst,
                          const VolumetricCharges& tau, const EquilibriumSolution& raw,
                          const SurplusReport& sur) {
    const EquilibriumSolution sol = canonicalized(inst, raw);
    double net_sale = 0.0, load = 0.0, backup = 0.0, conventional = 0.0;
    for (int i = 0; i < inst.n_nodes(); ++i) {
        net_sale += sol.z_sell[i] - sol.z_buy[i];
        load += sol.l[i];
        backup += sol.g_backup[i];
    }
    for (double g : sol.g_units) conventional += g;

    auto row = [&csv](const std::string& k, const std::string& v) {
        csv += io::csv_row({k, v});
    };
    row("volumetric_charge", tau_cell(tau));
    row("prosumer_net_sale", io::format_number(net_sale));
    row("prosumer_load", io::format_number(load));
    row("backup_generation", io::format_number(backup));
    row("conventional_generation", io::format_number(conventional));
    for (int i = 0; i < inst.n_nodes(); ++i)
        row("lmp_" + std::to_string(i), io::format_number(sol.p[i]));
    for (int i = 0; i < inst.n_nodes(); ++i)
        row("demand_" + std::to_string(i), io::format_number(sol.d[i]));
    row("surplus_consumer", io::format_number(sur.consumer));
    row("surplus_prosumer", io::format_number(sur.prosumer));
    row("surplus_producer", io::format_number(sur.producer));
    row("iso_revenue", io::format_number(sur.iso_revenue));
    row("wholesale_surplus", io::format_number(sur.wholesale));
    row("total_surplus", io::format_number(sur.total));
    row("volumetric_revenue", io::format_number(sur.volumetric_revenue));
    row("objective", io::format_number(sur.objective));
}

}  // namespace

std::vector<double> parse_fraction_grid(const std::string& text) {
    double start = 0.0, stop = 0.0, step = 0.0;
    char c1 = 0, c2 = 0;
    std::istringstream is(text);
    if (!(is >> start >> c1 >> stop >> c2 >> step) || c1 != ':' || c2 != ':' || step <= 0.0)
        throw config_error("--fractions expects START:STOP:STEP with positive STEP");
    std::vector<double> grid;
    for (double f = start; f <= stop + 1e-12; f += step) grid.push_back(std::min(f, stop));
    if (grid.empty()) throw config_error("--fractions produced an empty grid");
    return grid;
}

int run_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    MarketInstance inst = load(cfg);
    VolumetricCharges tau{cfg.tau_b, cfg.tau_s, default_tau_box(inst)};
    if (!tau.in_box()) throw config_error("tau outside the admissible box");
    const SolverSettings settings = settings_of(cfg);

    EquilibriumSolution sol = solve_equilibrium(inst, tau, settings);
    KktReport kkt = kkt_residuals(inst, tau, sol);
    SurplusReport sur = surplus_decomposition(inst, tau, sol);

    ensure_out_dir(cfg);
    io::write_text_file(cfg.out_dir / "solution.json",
                        io::solution_to_json_text(inst, tau, sol));
    std::string csv = io::csv_row({"metric", "value"});
    append_solution_rows(csv, inst, tau, sol, sur);
    csv += io::csv_row({"max_kkt_residual", io::format_number(kkt.max_residual)});
    io::write_text_file(cfg.out_dir / "summary.csv", csv);
    maybe_write_json_summary(cfg, csv);

    out << "solved: objective " << io::format_number(sol.objective) << ", max KKT residual "
        << io::format_number(kkt.max_residual) << "\n";
    if (sol.diagnostics.dual_degenerate)
        err << "warning: degenerate duals (LMPs may be non-unique)\n";
    return kOk;
}

namespace {

int emit_tariff_report(const RunConfig& cfg, const MarketInstance& inst,
                       const TariffReport& rep, std::ostream& out) {
    ensure_out_dir(cfg);
    io::write_text_file(cfg.out_dir / "solution.json",
                        io::solution_to_json_text(inst, rep.tau, rep.solution));

    std::string csv = io::csv_row({"metric", "value"});
    append_solution_rows(csv, inst, rep.tau, rep.solution, rep.surplus);
    auto row = [&csv](const std::string& k, const std::string& v) {
        csv += io::csv_row({k, v});
    };
    for (const auto& g : rep.incidence.groups) {
        const std::string tag = (g.is_prosumer ? "pro_" : "con_") + std::to_string(g.node);
        row("phi_" + tag,
            io::format_number(g.is_prosumer ? rep.phi.prosumer[g.node]
                                            : rep.phi.consumer[g.node]));
    }
    for (const auto& g : rep.incidence.groups) {
        const std::string tag = (g.is_prosumer ? "pro_" : "con_") + std::to_string(g.node);
        row("incidence_" + tag, io::format_number(g.incidence));
    }
    row("equity_gap_B", io::format_number(rep.incidence.gap_B));
    row("equity_feasible", rep.equity_feasible ? "1" : "0");
    row("fixed_revenue", io::format_number(rep.revenue.fixed));
    row("revenue_residual", io::format_number(rep.revenue.residual));
    io::write_text_file(cfg.out_dir / "summary.csv", csv);
    maybe_write_json_summary(cfg, csv);

    json jt;
    jt["tau"] = {{"buy", rep.tau.buy}, {"sell", rep.tau.sell}};
    jt["phi"] = {{"consumer", rep.phi.consumer}, {"prosumer", rep.phi.prosumer}};
    jt["revenue"] = {{"volumetric", rep.revenue.volumetric},
                     {"fixed", rep.revenue.fixed},
                     {"target", rep.revenue.target},
                     {"residual", rep.revenue.residual}};
    jt["equity_gap_B"] = rep.incidence.gap_B;
    jt["equity_feasible"] = rep.equity_feasible;
    jt["objective"] = rep.solution.objective;
    jt["upper_objective"] = rep.upper_objective;
    io::write_text_file(cfg.out_dir / "tariff.json", jt.dump(2) + "\n");

    out << "tariff: tau_b " << io::format_number(rep.tau.buy) << ", tau_s "
        << io::format_number(rep.tau.sell) << ", revenue residual "
        << io::format_number(rep.revenue.residual) << ", B "
        << io::format_number(rep.incidence.gap_B) << "\n";
    return kOk;
}

}  // namespace

int run_optimal(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    (void)err;
    MarketInstance inst = load(cfg);
    TariffReport rep = optimal_tariff(inst, settings_of(cfg));
    return emit_tariff_report(cfg, inst, rep, out);
}

int run_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    MarketInstance inst = load(cfg);
    const std::vector<double> grid = parse_fraction_grid(cfg.fractions);
    SweepTable table = sweep_fraction(inst, grid, settings_of(cfg));
    ensure_out_dir(cfg);
    io::write_text_file(cfg.out_dir / "sweep.csv", io::sweep_to_csv(inst, table));
    int failures = 0;
    for (const auto& r : table.rows)
        if (r.status != "ok") {
            ++failures;
            err << "fraction " << io::format_number(r.fraction) << ": " << r.status << "\n";
        }
    out << "sweep: " << table.rows.size() - failures << "/" << table.rows.size()
        << " fractions solved\n";
    return kOk;
}

int run_stochastic(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    MarketInstance inst = load(cfg);
    if (cfg.scenarios_path.empty()) throw config_error("--scenarios is required");
    ScenarioSet set = io::load_scenarios(cfg.scenarios_path);
    set.validate_against(inst);
    const SolverSettings settings = settings_of(cfg);

    const TauBox box = default_tau_box(inst);
    std::vector<TauPoint> grid = tau_grid(box, cfg.grid_points, cfg.grid_points);
    StochasticCheckReport check =
        stochastic_optimal_check(inst, set, grid, 1e-6, settings);

    ensure_out_dir(cfg);
    std::string csv = io::csv_row({"tau_buy", "tau_sell", "ev"});
    for (std::size_t i = 0; i < check.grid.size(); ++i)
        csv += io::csv_row({io::format_number(check.grid[i].buy),
                            io::format_number(check.grid[i].sell),
                            io::format_number(check.ev[i])});
    io::write_text_file(cfg.out_dir / "ev_grid.csv", csv);

    // Chance evaluation at the flag tau; fixed charges equalize the expected
    // incidence with the residual budget.
    VolumetricCharges tau{cfg.tau_b, cfg.tau_s, box};
    if (!tau.in_box()) throw config_error("tau outside the admissible box");
    std::vector<GroupIncidence> expected;
    double expected_vol = 0.0;
    for (const auto& sc : set.scenarios) {
        MarketInstance scen = apply_overrides(inst, sc.overrides);
        EquilibriumSolution sol = solve_equilibrium(scen, tau, settings);
        auto spends = group_spends(scen, tau, sol);
        if (expected.empty()) {
            expected = spends;
            for (auto& g : expected) g.spend = 0.0;
        }
        for (std::size_t g = 0; g < spends.size(); ++g)
            expected[g].spend += sc.probability * spends[g].spend;
        RevenueReport rr = revenue(scen, tau, FixedCharges{}, sol);
        expected_vol += sc.probability * rr.volumetric;
    }
    const double budget = std::max(0.0, inst.fixed_cost_target - expected_vol);
    AllocationResult alloc = allocate_from_spends(inst, expected, budget, settings);
    ChanceReport chance = chance_revenue_probability(inst, set, tau, alloc.phi,
                                                     ChanceSettings{cfg.epsilon, 1e-9}, settings);

    json jr;
    jr["tau"] = {{"buy", tau.buy}, {"sell", tau.sell}};
    jr["epsilon"] = cfg.epsilon;
    jr["probability"] = chance.probability;
    jr["satisfied"] = chance.satisfied;
    jr["incidence_basis"] = "expected";  // per-scenario equalization is the flagged alternative
    jr["argmax"] = {{"tau_buy", check.argmax.at.buy},
                    {"tau_sell", check.argmax.at.sell},
                    {"ev", check.argmax.value}};
    jr["margin"] = check.margin;
    jr["pass"] = check.pass;
    json sc = json::array();
    for (std::size_t j = 0; j < chance.scenario_revenue.size(); ++j)
        sc.push_back({{"probability", set.scenarios[j].probability},
                      {"revenue", chance.scenario_revenue[j]},
                      {"adequate", static_cast<bool>(chance.scenario_adequate[j])}});
    jr["scenarios"] = sc;
    io::write_text_file(cfg.out_dir / "chance_report.json", jr.dump(2) + "\n");

    out << "ev argmax at (" << io::format_number(check.argmax.at.buy) << ", "
        << io::format_number(check.argmax.at.sell) << "), "
        << (check.pass ? "PASS" : "FAIL") << "; chance "
        << io::format_number(chance.probability) << (chance.satisfied ? " >= " : " < ")
        << io::format_number(1.0 - cfg.epsilon) << "\n";
    if (!check.pass) err << "warning: EV argmax moved away from (0,0)\n";
    return kOk;
}

int run_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    MarketInstance inst = load(cfg);
    const SolverSettings settings = settings_of(cfg);
    const double tol = cfg.tol > 0.0 ? cfg.tol : 1e-6;
    VolumetricCharges tau{cfg.tau_b, cfg.tau_s, default_tau_box(inst)};

    // Checking a stored solution takes precedence.
    if (!cfg.solution_path.empty()) {
        VolumetricCharges stored_tau = tau;
        EquilibriumSolution sol = io::solution_from_json_text(
            inst, io::read_text_file(cfg.solution_path), &stored_tau);
        KktReport kkt = kkt_residuals(inst, stored_tau, sol);
        out << "stored solution max KKT residual " << io::format_number(kkt.max_residual)
            << (kkt.max_residual <= tol ? " (ok)" : " (FLAGGED)") << "\n";
        if (kkt.max_residual > tol) {
            err << "stored solution violates the KKT system beyond tolerance\n";
            return kSolverFailure;
        }
        return kOk;
    }

    OracleBudget budget;
    {
        WelfareProgram prog = assemble_welfare_program(inst, tau);
        if (prog.qp.n_inequalities() > budget.max_inequalities) {
            err << "refusing: instance has " << prog.qp.n_inequalities()
                << " inequality constraints, oracle budget is " << budget.max_inequalities
                << "\n";
            return kBadConfig;
        }
    }

    double worst_obj_gap = 0.0, worst_primal_gap = 0.0, worst_kkt = 0.0;
    auto compare = [&](const MarketInstance& m, const VolumetricCharges& t) {
        EquilibriumSolution ipm = solve_equilibrium(m, t, settings);
        EquilibriumSolution oracle = enumerate_active_sets(m, t, budget);
        worst_obj_gap = std::max(worst_obj_gap, std::abs(ipm.objective - oracle.objective));
        double pg = 0.0;
        for (int i = 0; i < m.n_nodes(); ++i) {
            pg = std::max(pg, std::abs(ipm.d[i] - oracle.d[i]));
            pg = std::max(pg, std::abs(ipm.l[i] - oracle.l[i]));
            pg = std::max(pg, std::abs((ipm.z_sell[i] - ipm.z_buy[i]) -
                                       (oracle.z_sell[i] - oracle.z_buy[i])));
            pg = std::max(pg, std::abs(ipm.g_backup[i] - oracle.g_backup[i]));
        }
        for (std::size_t u = 0; u < m.units.size(); ++u)
            pg = std::max(pg, std::abs(ipm.g_units[u] - oracle.g_units[u]));
        worst_primal_gap = std::max(worst_primal_gap, pg);
        worst_kkt = std::max(worst_kkt, kkt_residuals(m, t, ipm).max_residual);
    };

    compare(inst, tau);
    Rng rng(cfg.seed);
    RandomInstanceOptions opt;
    opt.oracle_sized = true;
    opt.small_scale = true;
    opt.max_nodes = 2;
    opt.max_units = 2;
    for (int k = 0; k < cfg.verify_count; ++k) {
        MarketInstance m = random_instance(rng, opt);
        compare(m, random_tau(rng, m, 1.0));
    }

    out << "verify: " << 1 + cfg.verify_count << " instances, worst objective gap "
        << io::format_number(worst_obj_gap) << ", worst primal gap "
        << io::format_number(worst_primal_gap) << ", worst KKT residual "
        << io::format_number(worst_kkt) << "\n";
    if (worst_obj_gap > tol || worst_primal_gap > 10.0 * tol || worst_kkt > tol) {
        err << "verification failed beyond tolerance " << io::format_number(tol) << "\n";
        return kSolverFailure;
    }
    return kOk;
}

}  // namespace gridtariff::cli
