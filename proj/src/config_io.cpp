#include "gridtariff/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "gridtariff/market_model.hpp"

namespace gridtariff::io {

using nlohmann::json;

namespace {

void reject_unknown_keys(const json& j, const std::vector<std::string>& allowed,
                         const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const auto& k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw config_error("unknown key '" + it.key() + "' in " + where);
    }
}

double require_num(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key)) throw config_error("missing key '" + key + "' in " + where);
    if (!j.at(key).is_number()) throw config_error("key '" + key + "' in " + where + " must be a number");
    return j.at(key).get<double>();
}

double opt_num(const json& j, const std::string& key, double fallback) {
    return j.contains(key) ? j.at(key).get<double>() : fallback;
}

struct UnitScale {
    double energy = 1.0;  // to MWh/day
    double price = 1.0;   // to $/MWh
};

UnitScale parse_units(const json& root) {
    UnitScale s;
    if (!root.contains("units_of_measure")) return s;
    const json& u = root.at("units_of_measure");
    reject_unknown_keys(u, {"energy", "price", "money"}, "units_of_measure");
    const std::string energy = u.value("energy", "MWh_per_day");
    const std::string price = u.value("price", "USD_per_MWh");
    const std::string money = u.value("money", "USD_per_day");
    if (energy == "MWh_per_day")
        s.energy = 1.0;
    else if (energy == "kWh_per_day")
        s.energy = 1e-3;
    else
        throw config_error("unsupported energy unit '" + energy + "'");
    if (price == "USD_per_MWh")
        s.price = 1.0;
    else if (price == "USD_per_kWh")
        s.price = 1e3;
    else
        throw config_error("unsupported price unit '" + price + "'");
    if (money != "USD_per_day") throw config_error("unsupported money unit '" + money + "'");
    return s;
}

Network parse_network(const json& jn, int n_nodes) {
    reject_unknown_keys(jn, {"lines", "ptdf", "limits"}, "network");
    Network net;
    net.lines = jn.value("lines", 0);
    if (jn.contains("ptdf")) net.ptdf = jn.at("ptdf").get<std::vector<double>>();
    if (jn.contains("limits")) net.limits = jn.at("limits").get<std::vector<double>>();
    if (static_cast<int>(net.ptdf.size()) != net.lines * n_nodes)
        throw config_error("network.ptdf must hold lines x nodes entries (row-major)");
    if (static_cast<int>(net.limits.size()) != net.lines)
        throw config_error("network.limits must hold one entry per line");
    return net;
}

std::vector<GenUnit> parse_units_list(const json& arr, const UnitScale& us) {
    std::vector<GenUnit> units;
    for (const auto& ju : arr) {
        reject_unknown_keys(ju, {"node", "id", "cost_linear", "cost_quadratic", "capacity"},
                            "units[]");
        GenUnit u;
        u.node = static_cast<int>(require_num(ju, "node", "units[]"));
        u.id = static_cast<int>(opt_num(ju, "id", static_cast<double>(units.size())));
        u.cost_linear = require_num(ju, "cost_linear", "units[]") * us.price;
        u.cost_quadratic = require_num(ju, "cost_quadratic", "units[]") * us.price / us.energy;
        u.capacity = require_num(ju, "capacity", "units[]") * us.energy;
        units.push_back(u);
    }
    return units;
}

MarketInstance parse_instance(const json& root) {
    reject_unknown_keys(root,
                        {"nodes", "consumers", "prosumers", "units", "network",
                         "fixed_cost_target", "equity_weight", "units_of_measure"},
                        "instance config");
    const UnitScale us = parse_units(root);

    MarketInstance inst;
    if (!root.contains("nodes")) throw config_error("instance config needs 'nodes'");
    for (const auto& jn : root.at("nodes")) {
        reject_unknown_keys(jn,
                            {"id", "demand_vertical_intercept", "demand_horizontal_intercept",
                             "prosumer_fraction"},
                            "nodes[]");
        Node n;
        n.id = static_cast<int>(require_num(jn, "id", "nodes[]"));
        n.demand_vertical_intercept =
            require_num(jn, "demand_vertical_intercept", "nodes[]") * us.price;
        n.demand_horizontal_intercept =
            require_num(jn, "demand_horizontal_intercept", "nodes[]") * us.energy;
        n.prosumer_fraction = require_num(jn, "prosumer_fraction", "nodes[]");
        inst.nodes.push_back(n);
    }
    const int nn = inst.n_nodes();
    if (root.contains("consumers"))
        for (const auto& jc : root.at("consumers")) {
            reject_unknown_keys(jc, {"node", "households", "income"}, "consumers[]");
            ConsumerGroup c;
            c.node = static_cast<int>(require_num(jc, "node", "consumers[]"));
            c.households = require_num(jc, "households", "consumers[]");
            c.income = require_num(jc, "income", "consumers[]");
            inst.consumers.push_back(c);
        }
    if (root.contains("prosumers"))
        for (const auto& jp : root.at("prosumers")) {
            reject_unknown_keys(jp,
                                {"node", "households", "income", "renewable_output",
                                 "backup_capacity", "backup_cost_linear",
                                 "backup_cost_quadratic", "sunk_cost"},
                                "prosumers[]");
            ProsumerGroup p;
            p.node = static_cast<int>(require_num(jp, "node", "prosumers[]"));
            p.households = require_num(jp, "households", "prosumers[]");
            p.income = require_num(jp, "income", "prosumers[]");
            p.renewable_output = require_num(jp, "renewable_output", "prosumers[]") * us.energy;
            p.backup_capacity = require_num(jp, "backup_capacity", "prosumers[]") * us.energy;
            p.backup_cost_linear = require_num(jp, "backup_cost_linear", "prosumers[]") * us.price;
            p.backup_cost_quadratic =
                require_num(jp, "backup_cost_quadratic", "prosumers[]") * us.price / us.energy;
            p.sunk_cost = require_num(jp, "sunk_cost", "prosumers[]");
            inst.prosumers.push_back(p);
        }
    if (root.contains("units")) inst.units = parse_units_list(root.at("units"), us);
    if (root.contains("network")) inst.network = parse_network(root.at("network"), nn);
    else {
        inst.network.lines = 0;
    }
    inst.fixed_cost_target = opt_num(root, "fixed_cost_target", 0.0);
    inst.equity_weight = opt_num(root, "equity_weight", 1e6 * inst.fixed_cost_target);

    ValidationReport rep = validate(inst);
    if (!rep.ok()) throw config_error("instance config invalid: " + rep.violations.front());
    return inst;
}

MarketInstance parse_calibration(const json& root) {
    reject_unknown_keys(root,
                        {"calibration", "units", "network", "fixed_cost_target",
                         "equity_weight", "units_of_measure"},
                        "calibration config");
    const UnitScale us = parse_units(root);
    const json& jc = root.at("calibration");
    reject_unknown_keys(jc,
                        {"baseline_demand_low", "group_scalings", "households_per_group",
                         "expenditure_share", "reference_retail_price",
                         "demand_price_elasticity_at_reference", "solar_penetration",
                         "solar_node", "solar_capacity_per_household", "solar_equivalent_hours",
                         "renewable_output", "reference_renewable_output", "backup_capacity",
                         "backup_cost_linear", "backup_cost_quadratic", "sunk_cost"},
                        "calibration");

    CalibrationSpec spec;
    spec.baseline_demand_low = require_num(jc, "baseline_demand_low", "calibration") * us.energy;
    spec.group_scalings = jc.at("group_scalings").get<std::vector<double>>();
    spec.households_per_group = jc.at("households_per_group").get<std::vector<double>>();
    spec.expenditure_share = require_num(jc, "expenditure_share", "calibration");
    spec.reference_retail_price =
        require_num(jc, "reference_retail_price", "calibration") * us.price;
    spec.demand_price_elasticity_at_reference =
        require_num(jc, "demand_price_elasticity_at_reference", "calibration");
    spec.solar_penetration = opt_num(jc, "solar_penetration", 0.0);
    spec.solar_node = static_cast<int>(opt_num(jc, "solar_node", 0));
    spec.solar_capacity_per_household = opt_num(jc, "solar_capacity_per_household", 0.0);
    spec.solar_equivalent_hours = opt_num(jc, "solar_equivalent_hours", 1.0);
    spec.renewable_output = opt_num(jc, "renewable_output", -1.0);
    if (spec.renewable_output >= 0.0) spec.renewable_output *= us.energy;
    spec.reference_renewable_output = opt_num(jc, "reference_renewable_output", -1.0);
    if (spec.reference_renewable_output >= 0.0) spec.reference_renewable_output *= us.energy;
    spec.backup_capacity = opt_num(jc, "backup_capacity", 0.0) * us.energy;
    spec.backup_cost_linear = opt_num(jc, "backup_cost_linear", 0.0) * us.price;
    spec.backup_cost_quadratic = opt_num(jc, "backup_cost_quadratic", 0.0) * us.price / us.energy;
    spec.sunk_cost = opt_num(jc, "sunk_cost", 0.0);

    if (root.contains("units")) spec.units = parse_units_list(root.at("units"), us);
    spec.network = root.contains("network")
                       ? parse_network(root.at("network"),
                                       static_cast<int>(spec.group_scalings.size()))
                       : Network{};
    spec.fixed_cost_target = opt_num(root, "fixed_cost_target", 0.0);
    spec.equity_weight = opt_num(root, "equity_weight", -1.0);
    return calibrate(spec);
}

}  // namespace

MarketInstance instance_from_json_text(const std::string& text) {
    json root = json::parse(text);
    if (root.contains("calibration")) return parse_calibration(root);
    return parse_instance(root);
}

MarketInstance load_instance(const std::filesystem::path& path) {
    return instance_from_json_text(read_text_file(path));
}

std::string instance_to_json_text(const MarketInstance& inst) {
    json root;
    root["units_of_measure"] = {{"energy", "MWh_per_day"},
                                {"price", "USD_per_MWh"},
                                {"money", "USD_per_day"}};
    for (const auto& n : inst.nodes)
        root["nodes"].push_back({{"id", n.id},
                                 {"demand_vertical_intercept", n.demand_vertical_intercept},
                                 {"demand_horizontal_intercept", n.demand_horizontal_intercept},
                                 {"prosumer_fraction", n.prosumer_fraction}});
    root["consumers"] = json::array();
    for (const auto& c : inst.consumers)
        root["consumers"].push_back(
            {{"node", c.node}, {"households", c.households}, {"income", c.income}});
    root["prosumers"] = json::array();
    for (const auto& p : inst.prosumers)
        root["prosumers"].push_back({{"node", p.node},
                                     {"households", p.households},
                                     {"income", p.income},
                                     {"renewable_output", p.renewable_output},
                                     {"backup_capacity", p.backup_capacity},
                                     {"backup_cost_linear", p.backup_cost_linear},
                                     {"backup_cost_quadratic", p.backup_cost_quadratic},
                                     {"sunk_cost", p.sunk_cost}});
    root["units"] = json::array();
    for (const auto& u : inst.units)
        root["units"].push_back({{"node", u.node},
                                 {"id", u.id},
                                 {"cost_linear", u.cost_linear},
                                 {"cost_quadratic", u.cost_quadratic},
                                 {"capacity", u.capacity}});
    root["network"] = {{"lines", inst.network.lines},
                       {"ptdf", inst.network.ptdf},
                       {"limits", inst.network.limits}};
    root["fixed_cost_target"] = inst.fixed_cost_target;
    root["equity_weight"] = inst.equity_weight;
    return root.dump(2) + "\n";
}

ScenarioSet load_scenarios(const std::filesystem::path& path) {
    json root = json::parse(read_text_file(path));
    reject_unknown_keys(root, {"scenarios"}, "scenario file");
    ScenarioSet set;
    std::set<std::pair<int, int>> touched;  // coarse random-vector dimension count
    for (const auto& js : root.at("scenarios")) {
        reject_unknown_keys(js, {"probability", "overrides"}, "scenarios[]");
        Scenario s;
        s.probability = require_num(js, "probability", "scenarios[]");
        if (js.contains("overrides")) {
            const json& jo = js.at("overrides");
            reject_unknown_keys(jo, {"renewable_output", "backup_capacity", "unit_capacity"},
                                "overrides");
            if (jo.contains("renewable_output"))
                for (const auto& it : jo.at("renewable_output")) {
                    reject_unknown_keys(it, {"node", "value"}, "renewable_output[]");
                    s.overrides.renewable_output.emplace_back(
                        static_cast<int>(require_num(it, "node", "renewable_output[]")),
                        require_num(it, "value", "renewable_output[]"));
                    touched.insert({0, s.overrides.renewable_output.back().first});
                }
            if (jo.contains("backup_capacity"))
                for (const auto& it : jo.at("backup_capacity")) {
                    reject_unknown_keys(it, {"node", "value"}, "backup_capacity[]");
                    s.overrides.backup_capacity.emplace_back(
                        static_cast<int>(require_num(it, "node", "backup_capacity[]")),
                        require_num(it, "value", "backup_capacity[]"));
                    touched.insert({1, s.overrides.backup_capacity.back().first});
                }
            if (jo.contains("unit_capacity"))
                for (const auto& it : jo.at("unit_capacity")) {
                    reject_unknown_keys(it, {"node", "id", "value"}, "unit_capacity[]");
                    const int node = static_cast<int>(require_num(it, "node", "unit_capacity[]"));
                    const int id = static_cast<int>(require_num(it, "id", "unit_capacity[]"));
                    s.overrides.unit_capacity.emplace_back(
                        node, id, require_num(it, "value", "unit_capacity[]"));
                    touched.insert({2 + id, node});
                }
        }
        set.scenarios.push_back(std::move(s));
    }
    set.dimension = static_cast<int>(touched.size());
    return set;
}

std::string solution_to_json_text(const MarketInstance& inst, const VolumetricCharges& tau,
                                  const EquilibriumSolution& sol) {
    json root;
    root["tau"] = {{"buy", tau.buy}, {"sell", tau.sell}};
    root["objective"] = sol.objective;
    json primal;
    primal["d"] = sol.d;
    primal["l"] = sol.l;
    primal["z_sell"] = sol.z_sell;
    primal["z_buy"] = sol.z_buy;
    primal["g_backup"] = sol.g_backup;
    primal["g_units"] = sol.g_units;
    primal["y"] = sol.y;
    root["primal"] = primal;
    json duals;
    duals["p"] = sol.p;
    duals["delta"] = sol.delta;
    duals["kappa"] = sol.kappa;
    duals["rho"] = sol.rho;
    duals["theta"] = sol.theta;
    duals["lambda_plus"] = sol.lambda_plus;
    duals["lambda_minus"] = sol.lambda_minus;
    root["duals"] = duals;
    root["diagnostics"] = {{"iterations", sol.diagnostics.iterations},
                           {"dual_degenerate", sol.diagnostics.dual_degenerate},
                           {"active_rank", sol.diagnostics.active_rank},
                           {"active_rows", sol.diagnostics.active_rows}};
    (void)inst;
    return root.dump(2) + "\n";
}

EquilibriumSolution solution_from_json_text(const MarketInstance& inst, const std::string& text,
                                            VolumetricCharges* tau_out) {
    json root = json::parse(text);
    EquilibriumSolution sol;
    const json& primal = root.at("primal");
    sol.d = primal.at("d").get<std::vector<double>>();
    sol.l = primal.at("l").get<std::vector<double>>();
    sol.z_sell = primal.at("z_sell").get<std::vector<double>>();
    sol.z_buy = primal.at("z_buy").get<std::vector<double>>();
    sol.g_backup = primal.at("g_backup").get<std::vector<double>>();
    sol.g_units = primal.at("g_units").get<std::vector<double>>();
    sol.y = primal.at("y").get<std::vector<double>>();
    const json& duals = root.at("duals");
    sol.p = duals.at("p").get<std::vector<double>>();
    sol.delta = duals.at("delta").get<std::vector<double>>();
    sol.kappa = duals.at("kappa").get<std::vector<double>>();
    sol.rho = duals.at("rho").get<std::vector<double>>();
    sol.theta = duals.at("theta").get<double>();
    sol.lambda_plus = duals.at("lambda_plus").get<std::vector<double>>();
    sol.lambda_minus = duals.at("lambda_minus").get<std::vector<double>>();
    sol.objective = root.value("objective", 0.0);
    if (static_cast<int>(sol.d.size()) != inst.n_nodes() ||
        sol.g_units.size() != inst.units.size())
        throw config_error("solution dimensions do not match the instance");
    if (tau_out != nullptr && root.contains("tau")) {
        tau_out->buy = root.at("tau").value("buy", 0.0);
        tau_out->sell = root.at("tau").value("sell", 0.0);
        tau_out->box = default_tau_box(inst);
    }
    return sol;
}

std::string format_number(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

std::string csv_row(const std::vector<std::string>& cells) {
    std::string row;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i > 0) row += ",";
        row += cells[i];
    }
    row += "\n";
    return row;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot write " + path.string());
    f << text;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw config_error("cannot read " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

std::string sweep_to_csv(const MarketInstance& inst, const SweepTable& table) {
    const int n = inst.n_nodes();
    std::vector<std::pair<bool, int>> groups;  // (is_prosumer, node), populated only
    for (const auto& c : inst.consumers)
        if (c.households > 0.0) groups.emplace_back(false, c.node);
    for (const auto& p : inst.prosumers)
        if (p.households > 0.0) groups.emplace_back(true, p.node);

    std::vector<std::string> header = {"fraction", "tau_buy", "tau_sell"};
    for (auto [pro, node] : groups)
        header.push_back(std::string("phi_") + (pro ? "pro" : "con") + "_" + std::to_string(node));
    for (int i = 0; i < n; ++i) header.push_back("lmp_" + std::to_string(i));
    for (int i = 0; i < n; ++i) header.push_back("demand_" + std::to_string(i));
    header.insert(header.end(),
                  {"prosumer_net_sale", "backup_generation", "surplus_consumer",
                   "surplus_prosumer", "surplus_producer", "iso_revenue", "wholesale_surplus",
                   "total_surplus"});
    for (auto [pro, node] : groups)
        header.push_back(std::string("incidence_") + (pro ? "pro" : "con") + "_" +
                         std::to_string(node));
    header.insert(header.end(), {"equity_gap_B", "status"});

    std::string out = csv_row(header);
    for (const auto& row : table.rows) {
        std::vector<std::string> cells;
        cells.push_back(format_number(row.fraction));
        if (row.report.has_value()) {
            const TariffReport& r = *row.report;
            cells.push_back(format_number(r.tau.buy));
            cells.push_back(format_number(r.tau.sell));
            for (auto [pro, node] : groups)
                cells.push_back(format_number(pro ? r.phi.prosumer[node] : r.phi.consumer[node]));
            for (int i = 0; i < n; ++i) cells.push_back(format_number(r.solution.p[i]));
            for (int i = 0; i < n; ++i) cells.push_back(format_number(r.solution.d[i]));
            double net_sale = 0.0, backup = 0.0;
            for (int i = 0; i < n; ++i) {
                net_sale += r.solution.z_sell[i] - r.solution.z_buy[i];
                backup += r.solution.g_backup[i];
            }
            cells.push_back(format_number(net_sale));
            cells.push_back(format_number(backup));
            cells.push_back(format_number(r.surplus.consumer));
            cells.push_back(format_number(r.surplus.prosumer));
            cells.push_back(format_number(r.surplus.producer));
            cells.push_back(format_number(r.surplus.iso_revenue));
            cells.push_back(format_number(r.surplus.wholesale));
            cells.push_back(format_number(r.surplus.total));
            // incidence cells in group order
            for (auto [pro, node] : groups) {
                double v = 0.0;
                for (const auto& gi : r.incidence.groups)
                    if (gi.is_prosumer == pro && gi.node == node) v = gi.incidence;
                cells.push_back(format_number(v));
            }
            cells.push_back(format_number(r.incidence.gap_B));
        } else {
            while (cells.size() + 1 < header.size()) cells.push_back("");
        }
        cells.push_back(row.status);
        out += csv_row(cells);
    }
    return out;
}

}  // namespace gridtariff::io
