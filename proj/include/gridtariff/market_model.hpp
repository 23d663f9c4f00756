#pragma once

// Demand and cost primitives, instance validation, calibration.

#include <string>
#include <vector>

#include "gridtariff/types.hpp"

namespace gridtariff {

// Slope of the consumer (resp. prosumer) inverse demand at a node.
double consumer_demand_slope(const Node& n);
double prosumer_demand_slope(const Node& n);

// p = P0 - slope * q, linear inverse demand of the two retail sub-curves.
double inverse_demand_consumer(const Node& n, double d);
double inverse_demand_prosumer(const Node& n, double l);

// Integral of a linear inverse demand from 0 to q: P0*q - slope*q^2/2.
double gross_benefit(double p0, double slope, double q);

// a*g + A*g^2/2 and its derivative.
double generation_cost(const GenUnit& u, double g);
double marginal_generation_cost(const GenUnit& u, double g);
double backup_cost(const ProsumerGroup& p, double g);
double marginal_backup_cost(const ProsumerGroup& p, double g);

struct ValidationReport {
    std::vector<std::string> violations;
    bool ok() const { return violations.empty(); }
};

ValidationReport validate(const MarketInstance& inst);

// Throws model_error listing the violations when validation fails.
void require_valid(const MarketInstance& inst);

MarketInstance calibrate(const CalibrationSpec& spec);

}  // namespace gridtariff
