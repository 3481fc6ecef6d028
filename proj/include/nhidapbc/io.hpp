#pragma once

#include "nhidapbc/scenario.hpp"
#include "nhidapbc/sim.hpp"

#include <filesystem>
#include <ostream>
#include <string>

#include "json.hpp"

namespace nhidapbc {

/// Plain decimal notation with 12 significant digits, no exponent.
std::string format_plain(double value);

/// Header `t,agent,mode,q0..,ptilde0..,tau0..,H_d,constraint_viol`. Column
/// counts are the maxima over the scenario's agents; agents with fewer
/// coordinates leave the trailing fields of a block empty.
void write_trajectory_csv(const Scenario& scenario, const TrajectoryLog& log, std::ostream& out);

nlohmann::json report_to_json(const RunReport& report, const nlohmann::json& defaults = nlohmann::json::object());
RunReport report_from_json(const nlohmann::json& doc);

/// Two-column text series, one file per curve, under `dir`.
void write_plot_data(const Scenario& scenario, const TrajectoryLog& log, const std::filesystem::path& dir);

}  // namespace nhidapbc
