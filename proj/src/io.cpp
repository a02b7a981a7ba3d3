#include "qdial/io.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <utility>

#include "qdial/error.hpp"

namespace qdial::io {

namespace {

Error bad(const std::string& what) { return Error(ErrorKind::InvalidArgument, what); }

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Non-empty lines; the first is the header.
std::vector<std::string> data_lines(const std::string& text, const std::string& expected_header,
                                    bool allow_prefix = false) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> out;
  bool header = false;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (!header) {
      const bool ok = allow_prefix ? line.rfind(expected_header, 0) == 0 : line == expected_header;
      if (!ok) throw bad("expected CSV header '" + expected_header + "', got '" + line + "'");
      header = true;
      continue;
    }
    out.push_back(line);
  }
  if (!header) throw bad("empty CSV input");
  if (out.empty()) throw bad("CSV has no data rows");
  return out;
}

std::ostringstream precise_stream() {
  std::ostringstream os;
  os << std::setprecision(17);
  return os;
}

const std::array<std::pair<const char*, double>, 24> unit_suffixes{{
    {"_m", 1.0},        {"_mm", 1e-3},        {"_um", 1e-6},   {"_nm", 1e-9},
    {"_F", 1.0},        {"_pF", 1e-12},       {"_fF", 1e-15},  {"_H", 1.0},
    {"_nH", 1e-9},      {"_pH", 1e-12},       {"_A", 1.0},     {"_uA", 1e-6},
    {"_nA", 1e-9},      {"_Hz", 1.0},         {"_MHz", 1e6},   {"_GHz", 1e9},
    {"_ghz", 1e9},      {"_s", 1.0},          {"_ns", 1e-9},   {"_us", 1e-6},
    {"_ohm", 1.0},      {"_m_per_s", 1.0},    {"_K", 1.0},     {"_mK", 1e-3},
}};

}  // namespace

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw bad("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw bad("cannot write '" + path + "'");
  out << text;
  if (!out) throw bad("write failed for '" + path + "'");
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& field, const std::string& context) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(field, &used);
  } catch (const std::exception&) {
    throw bad("not a number in " + context + ": '" + field + "'");
  }
  if (used != field.size()) throw bad("trailing characters in " + context + ": '" + field + "'");
  return v;
}

std::vector<classify::IqShot> parse_shots_csv(const std::string& text) {
  std::vector<classify::IqShot> shots;
  for (const auto& line : data_lines(text, "prep,i,q")) {
    const auto f = split_csv_line(line);
    if (f.size() != 3) throw bad("shot row needs 3 fields: '" + line + "'");
    classify::IqShot s;
    if (!f[0].empty()) s.prep = classify::level_from_name(f[0]);
    s.i = parse_double(f[1], "shot i");
    s.q = parse_double(f[2], "shot q");
    if (!std::isfinite(s.i) || !std::isfinite(s.q)) throw bad("non-finite shot value");
    shots.push_back(s);
  }
  return shots;
}

std::string format_shots_csv(const std::vector<classify::IqShot>& shots) {
  auto os = precise_stream();
  os << "prep,i,q\n";
  for (const auto& s : shots) {
    if (s.prep) os << classify::level_name(*s.prep);
    os << ',' << s.i << ',' << s.q << '\n';
  }
  return os.str();
}

dynamics::ResetDataset parse_reset_csv(const std::string& text) {
  dynamics::ResetDataset data;
  for (const auto& line : data_lines(text, "prep,time_s,p_g,p_e,p_f,p_h")) {
    const auto f = split_csv_line(line);
    if (f.size() != 6) throw bad("reset row needs 6 fields: '" + line + "'");
    if (f[0].size() != 1) throw bad("reset prep must be e, f or h");
    const dynamics::Prep prep = dynamics::prep_from_label(f[0][0]);
    dynamics::ResetSample s{parse_double(f[1], "time_s"), {}};
    for (int i = 0; i < 4; ++i) s.populations.p[i] = parse_double(f[2 + i], "population");
    data.curves[prep].push_back(s);
  }
  data.validate();
  return data;
}

std::string format_reset_csv(const dynamics::ResetDataset& data) {
  auto os = precise_stream();
  os << "prep,time_s,p_g,p_e,p_f,p_h\n";
  for (const auto& [prep, samples] : data.curves) {
    for (const auto& s : samples) {
      os << dynamics::prep_label(prep) << ',' << s.time;
      for (double p : s.populations.p) os << ',' << p;
      os << '\n';
    }
  }
  return os.str();
}

XyData parse_xy_csv(const std::string& text) {
  std::istringstream in(text);
  std::string header;
  while (std::getline(in, header) && trim(header).empty()) {
  }
  header = trim(header);
  const bool with_sigma = header == "x,y,sigma";
  if (!with_sigma && header != "x,y") throw bad("expected CSV header 'x,y' or 'x,y,sigma'");
  XyData d;
  for (const auto& line : data_lines(text, header)) {
    const auto f = split_csv_line(line);
    if (f.size() != (with_sigma ? 3u : 2u)) throw bad("wrong field count: '" + line + "'");
    d.x.push_back(parse_double(f[0], "x"));
    d.y.push_back(parse_double(f[1], "y"));
    if (with_sigma) d.sigma.push_back(parse_double(f[2], "sigma"));
  }
  return d;
}

std::string format_xy_csv(const XyData& data) {
  auto os = precise_stream();
  const bool with_sigma = !data.sigma.empty();
  os << (with_sigma ? "x,y,sigma\n" : "x,y\n");
  for (std::size_t k = 0; k < data.x.size(); ++k) {
    os << data.x[k] << ',' << data.y[k];
    if (with_sigma) os << ',' << data.sigma[k];
    os << '\n';
  }
  return os.str();
}

std::string format_sweep_csv(const std::vector<network::SweepRow>& rows) {
  auto os = precise_stream();
  os << network::sweep_csv_header << '\n';
  for (const auto& r : rows) {
    const std::string marker = "error:" + r.error.value_or("Unknown");
    auto cell = [&](double v) {
      if (std::isnan(v))
        os << marker;
      else if (std::isinf(v))
        os << (v > 0 ? "inf" : "-inf");
      else
        os << v;
    };
    os << r.flux_ratio;
    for (double v : {r.l_j_arr, r.f_f, r.gamma_qf, r.t1_ext, r.t1_total, r.rabi_rel, r.i_peak, r.margin}) {
      os << ',';
      cell(v);
    }
    os << '\n';
  }
  return os.str();
}

json model_to_json(const classify::GmmModel& model) {
  json j = json::object();
  for (const auto& [label, c] : model.components) {
    j[std::string(classify::level_name(label))] = {
        {"mean", {c.mean[0], c.mean[1]}},
        {"covariance", {{c.cov(0, 0), c.cov(0, 1)}, {c.cov(1, 0), c.cov(1, 1)}}},
        {"weight", c.weight}};
  }
  return j;
}

classify::GmmModel model_from_json(const json& j) {
  if (!j.is_object()) throw bad("model JSON must be an object keyed by label");
  classify::GmmModel m;
  try {
    for (const auto& [key, v] : j.items()) {
      classify::Component c;
      const auto& mean = v.at("mean");
      const auto& cov = v.at("covariance");
      if (mean.size() != 2 || cov.size() != 2 || cov[0].size() != 2 || cov[1].size() != 2)
        throw bad("component '" + key + "' has malformed mean or covariance");
      c.mean = {mean[0].get<double>(), mean[1].get<double>()};
      c.cov << cov[0][0].get<double>(), cov[0][1].get<double>(), cov[1][0].get<double>(),
          cov[1][1].get<double>();
      c.weight = v.at("weight").get<double>();
      m.components[classify::level_from_name(key)] = c;
    }
  } catch (const json::exception& e) {
    throw bad(std::string("model JSON: ") + e.what());
  }
  m.validate();
  return m;
}

json matrix_to_json(const classify::AssignmentMatrix& m) {
  json rows = json::array(), cols = json::array(), entries = json::array();
  for (auto l : m.rows) rows.push_back(std::string(classify::level_name(l)));
  for (auto l : m.cols) cols.push_back(std::string(classify::level_name(l)));
  for (Eigen::Index r = 0; r < m.p.rows(); ++r)
    for (Eigen::Index c = 0; c < m.p.cols(); ++c) entries.push_back(m.p(r, c));
  return {{"rows", rows}, {"cols", cols}, {"entries", entries}};
}

json ladder_to_json(const thermometry::LevelLadder& ladder) {
  return {{"f_ge_ghz", ladder.f_ge_ghz}, {"f_ef_ghz", ladder.f_ef_ghz}, {"f_fh_ghz", ladder.f_fh_ghz}};
}

thermometry::LevelLadder ladder_from_json(const json& j) {
  thermometry::LevelLadder l;
  try {
    l.f_ge_ghz = j.at("f_ge_ghz").get<double>();
    l.f_ef_ghz = j.at("f_ef_ghz").get<double>();
    l.f_fh_ghz = j.at("f_fh_ghz").get<double>();
  } catch (const json::exception& e) {
    throw bad(std::string("ladder JSON: ") + e.what());
  }
  l.validate();
  return l;
}

json fit_result_to_json(const fits::FitResult& fit) {
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
    cov.push_back(row);
  }
  return {{"params", fit.params},       {"sigmas", fit.sigmas},
          {"names", fit.names},         {"covariance", cov},
          {"residual_rms", fit.residual_rms}, {"converged", fit.converged},
          {"rank_deficient", fit.rank_deficient}, {"at_bound", fit.at_bound},
          {"iterations", fit.iterations}};
}

json rates_to_json(const dynamics::DecayRates& r) {
  return {{"gamma_ge", r.gamma_ge}, {"gamma_ef", r.gamma_ef}, {"gamma_fh", r.gamma_fh},
          {"gamma_gf", r.gamma_gf}, {"gamma_gh", r.gamma_gh}, {"gamma_eh", r.gamma_eh}};
}

json decay_fit_to_json(const dynamics::DecayFit& fit) {
  json cov = json::array();
  for (Eigen::Index r = 0; r < fit.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < fit.covariance.cols(); ++c) row.push_back(fit.covariance(r, c));
    cov.push_back(row);
  }
  const char* names[3] = {"ge", "ef", "fh"};
  json rates, sig_rates, t1, sig_t1;
  const std::array<double, 3> g{fit.rates.gamma_ge, fit.rates.gamma_ef, fit.rates.gamma_fh};
  for (int k = 0; k < 3; ++k) {
    rates[names[k]] = g[k];
    sig_rates[names[k]] = fit.rate_sigma[k];
    t1[names[k]] = fit.t1[k] * 1e9;
    sig_t1[names[k]] = fit.t1_sigma[k] * 1e9;
  }
  json out = {{"rates_per_s", rates},   {"sigma_rates_per_s", sig_rates},
              {"t1_ns", t1},            {"sigma_ns", sig_t1},
              {"covariance", cov},      {"residual_rms", fit.residual_rms},
              {"iterations", fit.iterations}};
  out["floor"] = fit.floor ? json(*fit.floor) : json(nullptr);
  out["sigma_floor"] = fit.floor_sigma ? json(*fit.floor_sigma) : json(nullptr);
  return out;
}

double quantity(const json& obj, const std::string& key, const std::optional<double>& fallback) {
  std::optional<double> found;
  std::string found_key;
  auto take = [&](const std::string& k, double scale) {
    if (!obj.contains(k)) return;
    if (found) throw bad("both '" + found_key + "' and '" + k + "' given");
    if (!obj.at(k).is_number()) throw bad("'" + k + "' must be a number");
    found = obj.at(k).get<double>() * scale;
    found_key = k;
  };
  take(key, 1.0);
  for (const auto& [suffix, scale] : unit_suffixes) take(key + suffix, scale);
  if (found) return *found;
  if (fallback) return *fallback;
  throw bad("missing '" + key + "'");
}

network::FilterGeometry geometry_from_json(const json& j) {
  network::FilterGeometry g;
  if (!j.is_object()) throw bad("geometry must be an object");
  g.z0 = quantity(j, "z0", g.z0);
  g.v_p = quantity(j, "v_p", g.v_p);
  g.l_f = quantity(j, "l_f", g.l_f);
  g.x_s = quantity(j, "x_s", g.x_s);
  g.c_g = quantity(j, "c_g", g.c_g);
  g.c_d = quantity(j, "c_d", g.c_d);
  g.z_source = quantity(j, "z_source", g.z_source);
  g.validate();
  return g;
}

network::SquidArray array_from_json(const json& j) {
  network::SquidArray a;
  if (!j.is_object()) throw bad("array must be an object");
  if (j.contains("n_squids")) {
    if (!j.at("n_squids").is_number_integer()) throw bad("n_squids must be an integer");
    a.n_squids = j.at("n_squids").get<int>();
  }
  a.ic_junction = quantity(j, "ic_junction", a.ic_junction);
  a.l_fixed_per_squid = quantity(j, "l_fixed_per_squid", a.l_fixed_per_squid);
  a.clamp_epsilon = quantity(j, "clamp_epsilon", a.clamp_epsilon);
  a.validate();
  return a;
}

network::QubitLoad qubit_from_json(const json& j) {
  network::QubitLoad q;
  if (!j.is_object()) throw bad("qubit must be an object");
  q.c_q = quantity(j, "c_q", q.c_q);
  q.f_q = quantity(j, "f_q", q.f_q);
  const double t1 = quantity(j, "t1_internal", 0.0);
  if (t1 > 0.0) q.t1_internal = t1;
  q.validate();
  return q;
}

dynamics::DecayRates rates_from_json(const json& j) {
  if (!j.is_object()) throw bad("rates must be an object");
  dynamics::DecayRates r;
  // Either lifetimes (t1_ge, ...) or rates (gamma_ge, ... in 1/s).
  const bool lifetimes = j.contains("t1_ge") || j.contains("t1_ge_ns") || j.contains("t1_ge_us");
  if (lifetimes) {
    r = dynamics::DecayRates::from_t1(quantity(j, "t1_ge", std::nullopt),
                                      quantity(j, "t1_ef", std::nullopt),
                                      quantity(j, "t1_fh", std::nullopt));
  } else {
    r.gamma_ge = quantity(j, "gamma_ge", std::nullopt);
    r.gamma_ef = quantity(j, "gamma_ef", std::nullopt);
    r.gamma_fh = quantity(j, "gamma_fh", std::nullopt);
  }
  r.gamma_gf = quantity(j, "gamma_gf", 0.0);
  r.gamma_gh = quantity(j, "gamma_gh", 0.0);
  r.gamma_eh = quantity(j, "gamma_eh", 0.0);
  r.validate();
  return r;
}

json parse_json(const std::string& text, const std::string& context) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw bad(context + ": " + e.what());
  }
}

}  // namespace qdial::io
