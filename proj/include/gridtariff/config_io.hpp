#pragma once

// JSON schemas (market instance, calibration recipe, scenario sets, solutions)
// and the fixed-format CSV emission used by the CLI. All numeric CSV cells use
// "%.9g" with the C locale for reproducible diffs.

#include <filesystem>
#include <string>

#include "gridtariff/stochastic.hpp"
#include "gridtariff/tariff_design.hpp"
#include "gridtariff/types.hpp"

namespace gridtariff::io {

// Loads either a direct instance document or a calibration document (detected
// by a top-level "calibration" key). Unknown keys are rejected.
MarketInstance load_instance(const std::filesystem::path& path);

MarketInstance instance_from_json_text(const std::string& text);

std::string instance_to_json_text(const MarketInstance& inst);

ScenarioSet load_scenarios(const std::filesystem::path& path);

std::string solution_to_json_text(const MarketInstance& inst, const VolumetricCharges& tau,
                                  const EquilibriumSolution& sol);
EquilibriumSolution solution_from_json_text(const MarketInstance& inst, const std::string& text,
                                            VolumetricCharges* tau_out = nullptr);

std::string format_number(double v);  // %.9g, '.' decimal point

// One CSV cell per value; strings pass through unquoted (no commas allowed).
std::string csv_row(const std::vector<std::string>& cells);

void write_text_file(const std::filesystem::path& path, const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

// Sweep table emission with the canonical column order.
std::string sweep_to_csv(const MarketInstance& inst, const SweepTable& table);

}  // namespace gridtariff::io
