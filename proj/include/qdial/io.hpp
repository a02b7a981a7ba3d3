#pragma once

// Dataset and result serialization. CSV numbers are written with 17
// significant digits so files round-trip exactly.

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdial/classify.hpp"
#include "qdial/dynamics.hpp"
#include "qdial/fits.hpp"
#include "qdial/network.hpp"
#include "qdial/thermometry.hpp"

namespace qdial::io {

using nlohmann::json;

std::string read_text(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// Splits one CSV line; no quoting support (none of the schemas need it).
std::vector<std::string> split_csv_line(const std::string& line);
double parse_double(const std::string& field, const std::string& context);

// prep,i,q
std::vector<classify::IqShot> parse_shots_csv(const std::string& text);
std::string format_shots_csv(const std::vector<classify::IqShot>& shots);

// prep,time_s,p_g,p_e,p_f,p_h
dynamics::ResetDataset parse_reset_csv(const std::string& text);
std::string format_reset_csv(const dynamics::ResetDataset& data);

struct XyData {
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> sigma;  // empty when absent
};

// x,y[,sigma]
XyData parse_xy_csv(const std::string& text);
std::string format_xy_csv(const XyData& data);

std::string format_sweep_csv(const std::vector<network::SweepRow>& rows);

json model_to_json(const classify::GmmModel& model);
classify::GmmModel model_from_json(const json& j);

json matrix_to_json(const classify::AssignmentMatrix& m);

json ladder_to_json(const thermometry::LevelLadder& ladder);
thermometry::LevelLadder ladder_from_json(const json& j);

json fit_result_to_json(const fits::FitResult& fit);
json decay_fit_to_json(const dynamics::DecayFit& fit);
json rates_to_json(const dynamics::DecayRates& rates);

/// Reads a quantity stored either under its SI key or a unit-suffixed key
/// (e.g. "l_f" in m, or "l_f_mm"). Throws InvalidArgument when both are
/// present or, without a default, when neither is.
double quantity(const json& obj, const std::string& key, const std::optional<double>& fallback);

network::FilterGeometry geometry_from_json(const json& j);
network::SquidArray array_from_json(const json& j);
network::QubitLoad qubit_from_json(const json& j);
dynamics::DecayRates rates_from_json(const json& j);

json parse_json(const std::string& text, const std::string& context);

}  // namespace qdial::io
