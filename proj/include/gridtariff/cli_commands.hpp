#pragma once

// Command implementations behind the CLI binary, kept in the library so the
// test suites can drive them directly. Exit codes: 0 success, 2 bad config,
// 3 solver/verification failure.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridtariff/types.hpp"

namespace gridtariff::cli {

struct RunConfig {
    std::filesystem::path config_path;
    double tau_b = 0.0;
    double tau_s = 0.0;
    std::string fractions = "0:1:0.1";  // START:STOP:STEP
    std::filesystem::path scenarios_path;
    double epsilon = 0.1;
    std::filesystem::path out_dir = ".";
    std::string format = "csv";
    std::uint64_t seed = 1;
    double tol = -1.0;  // < 0: solver defaults
    std::filesystem::path solution_path;  // verify: check a stored solution
    int verify_count = 8;                 // verify: random cross-check instances
    int grid_points = 5;                  // stochastic: grid per axis (odd keeps (0,0))
};

std::vector<double> parse_fraction_grid(const std::string& text);

int run_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_optimal(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_stochastic(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int run_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err);

}  // namespace gridtariff::cli
