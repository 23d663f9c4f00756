// CLI front end: solve | optimal | sweep | stochastic | verify.

#include <iostream>

#include <CLI11.hpp>

#include "gridtariff/cli_commands.hpp"
#include "gridtariff/types.hpp"

int main(int argc, char** argv) {
    CLI::App app{"wholesale market equilibrium and retail tariff design"};
    app.require_subcommand(1);

    gridtariff::cli::RunConfig cfg;
    std::string command;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", cfg.config_path, "instance or calibration JSON");
        sub->add_option("--tau-b", cfg.tau_b, "volumetric buy charge [$/MWh]");
        sub->add_option("--tau-s", cfg.tau_s, "volumetric sell charge [$/MWh]");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--format", cfg.format, "csv|json (csv artifacts always written)");
        sub->add_option("--seed", cfg.seed, "random seed");
        sub->add_option("--tol", cfg.tol, "tolerance override");
        sub->callback([&, sub] { command = sub->get_name(); });
    };

    add_common(app.add_subcommand("solve", "solve the market at a fixed tariff"));
    add_common(app.add_subcommand("optimal", "zero-volumetric optimal tariff"));
    CLI::App* sweep = app.add_subcommand("sweep", "sweep the volumetric fraction");
    add_common(sweep);
    sweep->add_option("--fractions", cfg.fractions, "START:STOP:STEP over [0,1]");
    CLI::App* stoch = app.add_subcommand("stochastic", "scenario EV grid and chance report");
    add_common(stoch);
    stoch->add_option("--scenarios", cfg.scenarios_path, "scenario JSON");
    stoch->add_option("--epsilon", cfg.epsilon, "chance-constraint epsilon");
    stoch->add_option("--grid-points", cfg.grid_points, "tau grid points per axis (odd)");
    CLI::App* verify = app.add_subcommand("verify", "oracle-vs-solver cross check");
    add_common(verify);
    verify->add_option("--solution", cfg.solution_path, "stored solution JSON to KKT-check");
    verify->add_option("--count", cfg.verify_count, "random instances to cross-check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        if (command == "solve") return gridtariff::cli::run_solve(cfg, std::cout, std::cerr);
        if (command == "optimal") return gridtariff::cli::run_optimal(cfg, std::cout, std::cerr);
        if (command == "sweep") return gridtariff::cli::run_sweep(cfg, std::cout, std::cerr);
        if (command == "stochastic")
            return gridtariff::cli::run_stochastic(cfg, std::cout, std::cerr);
        if (command == "verify") return gridtariff::cli::run_verify(cfg, std::cout, std::cerr);
        std::cerr << "unknown command\n";
        return 2;
    } catch (const gridtariff::config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const gridtariff::model_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "solver error: " << e.what() << "\n";
        return 3;
    }
}
