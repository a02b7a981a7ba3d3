#include "qdial/cli.hpp"

#include <cmath>
#include <cstdint>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qdial/classify.hpp"
#include "qdial/error.hpp"
#include "qdial/fits.hpp"
#include "qdial/io.hpp"
#include "qdial/network.hpp"
#include "qdial/synth.hpp"
#include "qdial/thermometry.hpp"

namespace qdial::cli {

namespace {

using io::json;

constexpr int exit_ok = 0;
constexpr int exit_input = 1;
constexpr int exit_solver = 2;

struct Common {
  std::string config;
  std::string input;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string format;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::InvalidPopulations:
    case ErrorKind::TooFewWindows:
    case ErrorKind::EmptyRow:
    case ErrorKind::AllOverflow:
    case ErrorKind::OutOfRange:
      return exit_input;
    default:
      return exit_solver;
  }
}

Error input_error(const std::string& what) { return Error(ErrorKind::InvalidArgument, what); }

json load_config(const Common& c, bool required) {
  if (c.config.empty()) {
    if (required) throw input_error("--config is required");
    return json::object();
  }
  json j = io::parse_json(io::read_text(c.config), c.config);
  if (!j.is_object()) throw input_error("config must be a JSON object");
  return j;
}

std::string require_input(const Common& c) {
  if (c.input.empty()) throw input_error("--input is required");
  return io::read_text(c.input);
}

void emit(const Common& c, const std::string& text) {
  if (c.out.empty())
    std::cout << text;
  else
    io::write_text(c.out, text);
}

void emit_json(const Common& c, const json& j) { emit(c, j.dump(2) + "\n"); }

void check_format(const Common& c, std::initializer_list<const char*> allowed) {
  if (c.format.empty()) return;
  for (const char* a : allowed)
    if (c.format == a) return;
  throw input_error("unsupported --format '" + c.format + "' for this command");
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw input_error(std::string("config key '") + key + "' has the wrong type");
  }
}

thermometry::LevelLadder ladder_from_config(const json& cfg, const std::string& preset) {
  if (!preset.empty()) {
    if (preset == "q3") return thermometry::ladder_q3;
    if (preset == "q4") return thermometry::ladder_q4;
    throw input_error("unknown ladder preset '" + preset + "'");
  }
  if (cfg.contains("ladder")) {
    const json& l = cfg.at("ladder");
    if (l.is_string()) return ladder_from_config(json::object(), l.get<std::string>());
    return io::ladder_from_json(l);
  }
  return thermometry::ladder_q3;
}

std::vector<double> time_grid(const json& cfg) {
  if (cfg.contains("times_ns")) {
    std::vector<double> t = get_or<std::vector<double>>(cfg, "times_ns", {});
    for (double& x : t) x *= 1e-9;
    return t;
  }
  const json g = get_or<json>(cfg, "t_grid", json::object());
  const double start = io::quantity(g, "start", 0.0);
  const double stop = io::quantity(g, "stop", 1.2e-6);
  const int points = get_or<int>(g, "points", 61);
  if (points < 2 || !(stop > start)) throw input_error("t_grid needs points >= 2 and stop > start");
  std::vector<double> t(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) t[static_cast<std::size_t>(k)] = start + (stop - start) * k / (points - 1.0);
  return t;
}

// --------------------------------------------------------------------------
// filter-sweep

void cmd_filter_sweep(const Common& c) {
  check_format(c, {"csv", "json"});
  const json cfg = load_config(c, true);
  const auto geom = io::geometry_from_json(get_or<json>(cfg, "geometry", json::object()));
  const auto arr = io::array_from_json(get_or<json>(cfg, "array", json::object()));
  const auto qubit = io::qubit_from_json(get_or<json>(cfg, "qubit", json::object()));
  const json sw = get_or<json>(cfg, "sweep", json::object());

  const double flux_min = get_or<double>(sw, "flux_min", 0.0);
  const double flux_max = get_or<double>(sw, "flux_max", 0.5);
  const int points = get_or<int>(sw, "points", 101);
  if (points < 1) throw input_error("sweep.points must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k)
    grid[static_cast<std::size_t>(k)] =
        points == 1 ? flux_min : flux_min + (flux_max - flux_min) * k / (points - 1.0);

  network::SweepOptions opts;
  const std::string mode = get_or<std::string>(sw, "mode", "clamped");
  if (mode == "strict")
    opts.mode = network::InductanceMode::strict;
  else if (mode != "clamped")
    throw input_error("sweep.mode must be 'strict' or 'clamped'");
  opts.reference_flux = get_or<double>(sw, "reference_flux", 0.0);
  opts.i_node = network::node_current_from_dbm(get_or<double>(sw, "drive_power_dbm", -80.0),
                                               geom.z_source);

  // Drive frequency: explicit, or the filter frequency at a chosen bias.
  double drive = qubit.f_q;
  if (sw.contains("drive_at_flux")) {
    const double l = network::squid_array_inductance(arr, sw.at("drive_at_flux").get<double>(), 0.0,
                                                     opts.mode);
    drive = network::filter_frequency_exact(geom, l);
  } else {
    drive = io::quantity(sw, "drive_freq", qubit.f_q);
  }

  const auto rows = network::flux_sweep(geom, arr, qubit, grid, drive, opts);
  if (c.format == "json") {
    json out = json::array();
    for (const auto& r : rows) {
      json row = {{"flux_ratio", r.flux_ratio}, {"l_j_arr_H", r.l_j_arr},   {"f_f_Hz", r.f_f},
                  {"gamma_qf_per_s", r.gamma_qf}, {"t1_ext_s", r.t1_ext},   {"t1_total_s", r.t1_total},
                  {"rabi_rel", r.rabi_rel},     {"i_peak_A", r.i_peak},     {"margin", r.margin}};
      row["error"] = r.error ? json(*r.error) : json(nullptr);
      out.push_back(row);
    }
    emit_json(c, {{"drive_freq_Hz", drive}, {"rows", out}});
  } else {
    emit(c, io::format_sweep_csv(rows));
  }
}

// --------------------------------------------------------------------------
// fit-reset

void cmd_fit_reset(const Common& c, bool fit_floor) {
  check_format(c, {"json"});
  const auto data = io::parse_reset_csv(require_input(c));
  dynamics::DecayFitOptions opts;
  opts.fit_floor = fit_floor;
  emit_json(c, io::decay_fit_to_json(dynamics::fit_decay_rates(data, opts)));
}

// --------------------------------------------------------------------------
// fit-temp

json estimate_to_json(const thermometry::TemperatureEstimate& e) {
  json ratios = json::object();
  for (const auto& [k, v] : e.ratio_temps) ratios[std::string(1, k)] = v;
  json out = {{"t_eff_K", e.t_eff}, {"chi2", e.chi2_min}, {"at_boundary", e.at_boundary},
              {"ratio_temps_K", ratios}};
  out["r2"] = std::isfinite(e.r_squared) ? json(e.r_squared) : json(nullptr);
  return out;
}

void cmd_fit_temp(const Common& c, const std::string& model_path, const std::string& preset,
                  long window, double t_shot_us, const std::string& populations) {
  check_format(c, {"json"});
  const json cfg = load_config(c, false);
  const auto ladder = ladder_from_config(cfg, preset);

  if (!populations.empty()) {
    std::vector<std::string> parts = io::split_csv_line(populations);
    if (parts.size() != 4) throw input_error("--populations needs four comma-separated values");
    dynamics::PopulationVector p;
    for (int i = 0; i < 4; ++i) p.p[i] = io::parse_double(parts[i], "--populations");
    emit_json(c, estimate_to_json(thermometry::fit_temperature(p, ladder)));
    return;
  }

  const auto shots = io::parse_shots_csv(require_input(c));
  std::vector<classify::Level> assigned;
  if (!model_path.empty()) {
    const auto model = io::model_from_json(io::parse_json(io::read_text(model_path), model_path));
    assigned = classify::classify_all(model, shots);
  } else {
    for (const auto& s : shots) {
      if (!s.prep) throw input_error("shots without labels need --model");
      assigned.push_back(*s.prep);
    }
  }
  const long n = static_cast<long>(assigned.size());
  const long w = window > 0 ? window : n;
  if (n % w != 0) throw input_error("shot count is not a multiple of --window");

  std::vector<std::array<long, 4>> counts;
  for (long start = 0; start < n; start += w) {
    const auto tally = classify::count_levels(std::span(assigned).subspan(
        static_cast<std::size_t>(start), static_cast<std::size_t>(w)));
    classify::exclude_overflow_and_renormalize(tally);  // raises AllOverflow
    counts.push_back({tally.at(classify::Level::g), tally.at(classify::Level::e),
                      tally.at(classify::Level::f), tally.at(classify::Level::h)});
  }
  const double t_shot = t_shot_us * 1e-6;
  if (counts.size() < 2) {
    const auto p = thermometry::populations_from_counts(counts.front());
    json out = estimate_to_json(thermometry::fit_temperature(p, ladder));
    out["n_win"] = 1;
    out["n_shot"] = w;
    emit_json(c, out);
    return;
  }
  const auto a = thermometry::analyze_windows(counts, ladder, t_shot, w);
  json per = json::array();
  for (const auto& e : a.per_window) per.push_back(estimate_to_json(e));
  emit_json(c, {{"mu_T_K", a.stats.mu_t},
                {"sigma_T_K", a.stats.sigma_t},
                {"sigma_mu_K", a.stats.sigma_mu},
                {"net_K_per_sqrtHz", a.net},
                {"n_win", a.stats.n_win},
                {"n_shot", w},
                {"t_shot_s", t_shot},
                {"per_window", per}});
}

// --------------------------------------------------------------------------
// fit-rb, fit-curve

void cmd_fit_rb(const Common& c, double k, const std::string& interleaved) {
  check_format(c, {"json"});
  const auto ref = io::parse_xy_csv(require_input(c));
  const auto fit = fits::rb_fit(ref.x, ref.y, ref.sigma);
  if (!fit.converged) throw Error(ErrorKind::FitDiverged, "reference RB fit did not converge");
  const double p = fit.param("p");
  json out = {{"reference", io::fit_result_to_json(fit)},
              {"k_pulses_per_clifford", k},
              {"clifford_fidelity", fits::clifford_fidelity(p, k)}};
  if (fit.has_sigmas()) out["clifford_fidelity_sigma"] = fit.sigma("p") / (2.0 * k);
  if (!interleaved.empty()) {
    const auto d = io::parse_xy_csv(io::read_text(interleaved));
    const auto ifit = fits::rb_fit(d.x, d.y, d.sigma);
    if (!ifit.converged) throw Error(ErrorKind::FitDiverged, "interleaved RB fit did not converge");
    out["interleaved"] = io::fit_result_to_json(ifit);
    out["gate_fidelity"] = fits::interleaved_fidelity(p, ifit.param("p"));
  }
  emit_json(c, out);
}

void cmd_fit_curve(const Common& c, const std::string& model) {
  check_format(c, {"json"});
  const auto d = io::parse_xy_csv(require_input(c));
  if (model == "quadratic") {
    const auto q = fits::fit_quadratic_minimum(d.x, d.y);
    emit_json(c, {{"model", model},
                  {"x_min", q.x_min},
                  {"y_min", q.y_min},
                  {"curvature", q.curvature},
                  {"coefficients", {q.coefficients[0], q.coefficients[1], q.coefficients[2]}}});
    return;
  }
  fits::FitResult fit;
  if (model == "exponential")
    fit = fits::fit_exponential(d.x, d.y, d.sigma);
  else if (model == "cosine")
    fit = fits::fit_decaying_cosine(d.x, d.y, d.sigma);
  else if (model == "stretched")
    fit = fits::fit_stretched_exponential(d.x, d.y, d.sigma);
  else
    throw input_error("unknown --model '" + model + "'");
  json out = io::fit_result_to_json(fit);
  out["model"] = model;
  emit_json(c, out);
}

// --------------------------------------------------------------------------
// classify

std::vector<classify::Level> parse_labels(const std::string& text) {
  std::vector<classify::Level> out;
  for (const auto& f : io::split_csv_line(text)) out.push_back(classify::level_from_name(f));
  if (out.empty()) throw input_error("--labels is empty");
  return out;
}

void cmd_classify(const Common& c, const std::string& model_path, const std::string& labels,
                  const std::string& init) {
  check_format(c, {"json"});
  const auto shots = io::parse_shots_csv(require_input(c));
  classify::GmmModel model;
  json out = json::object();
  if (!model_path.empty()) {
    model = io::model_from_json(io::parse_json(io::read_text(model_path), model_path));
  } else {
    classify::GmmOptions opts;
    if (init == "random")
      opts.init = classify::GmmInit::random;
    else if (init != "supervised")
      throw input_error("--init must be 'supervised' or 'random'");
    opts.seed = c.seed.value_or(0);
    const auto lv = parse_labels(labels);
    const auto fit = classify::fit_gmm(shots, lv, opts);
    model = fit.model;
    out["log_likelihood"] = fit.log_likelihood;
    out["iterations"] = fit.iterations;
  }
  out["model"] = io::model_to_json(model);

  json sep = json::object();
  const auto names = model.labels();
  for (std::size_t a = 0; a < names.size(); ++a)
    for (std::size_t b = a + 1; b < names.size(); ++b) {
      const double d = classify::pairwise_separation(model, names[a], names[b]);
      sep[std::string(classify::level_name(names[a])) + "-" + std::string(classify::level_name(names[b]))] =
          {{"delta", d}, {"bayes_error", classify::bayes_error(d)}};
    }
  out["separations"] = sep;
  if (names.size() > 1) out["min_separation"] = classify::min_pairwise_separation(model);

  const auto assigned = classify::classify_all(model, shots);
  json counts = json::object();
  for (const auto& [l, n] : classify::count_levels(assigned)) counts[std::string(classify::level_name(l))] = n;
  out["counts"] = counts;

  bool any_prep = false;
  for (const auto& s : shots) any_prep = any_prep || s.prep.has_value();
  if (any_prep) {
    std::vector<classify::Level> rows;
    for (auto l : names) {
      if (l == classify::Level::kplus) continue;
      for (const auto& s : shots)
        if (s.prep == l) {
          rows.push_back(l);
          break;
        }
    }
    out["assignment_matrix"] = io::matrix_to_json(classify::assignment_matrix(model, shots, rows));
  }
  emit_json(c, out);
}

// --------------------------------------------------------------------------
// generate

synth::ShotGenConfig shot_config(const json& cfg, std::uint64_t seed) {
  synth::ShotGenConfig sc;
  sc.ladder = ladder_from_config(cfg, "");
  sc.n_model_levels = get_or<int>(cfg, "n_model_levels", 6);
  sc.cluster_model = cfg.contains("cluster_model") ? io::model_from_json(cfg.at("cluster_model"))
                                                   : synth::default_cluster_model();
  if (cfg.contains("readout_decay")) {
    const json& r = cfg.at("readout_decay");
    synth::ReadoutDecay d;
    d.rates = io::rates_from_json(get_or<json>(r, "rates", json::object()));
    d.t_readout = io::quantity(r, "t_readout", std::nullopt);
    d.sample_instant = io::quantity(r, "sample_instant", std::nullopt);
    sc.readout_decay = d;
  }
  sc.seed = seed;
  sc.validate();
  return sc;
}

void cmd_generate(const Common& c, const std::string& kind) {
  const json cfg = load_config(c, false);
  const std::uint64_t seed = c.seed.value_or(get_or<std::uint64_t>(cfg, "seed", 0));
  check_format(c, {"csv"});

  if (kind == "thermal") {
    const auto sc = shot_config(cfg, seed);
    const double t = io::quantity(cfg, "temperature", 0.181072);
    const long n = get_or<long>(cfg, "n", 5000);
    emit(c, io::format_shots_csv(synth::gen_thermal_shots(sc, t, n)));
  } else if (kind == "windows") {
    const auto sc = shot_config(cfg, seed);
    const double t = io::quantity(cfg, "temperature", 0.181072);
    const long n_win = get_or<long>(cfg, "n_win", 10);
    const long n_shot = get_or<long>(cfg, "n_shot", 5000);
    const auto windows = synth::gen_window_series(sc, [t](long) { return t; }, n_win, n_shot);
    std::vector<classify::IqShot> all;
    for (const auto& w : windows) all.insert(all.end(), w.begin(), w.end());
    emit(c, io::format_shots_csv(all));
  } else if (kind == "reset") {
    const json rates_cfg = get_or<json>(
        cfg, "rates",
        json{{"t1_ge_ns", synth::reference_t1_ge * 1e9}, {"t1_ef_ns", synth::reference_t1_ef * 1e9},
             {"t1_fh_ns", synth::reference_t1_fh * 1e9}});
    const auto rates = io::rates_from_json(rates_cfg);
    std::vector<dynamics::Prep> preps;
    for (const auto& p : get_or<std::vector<std::string>>(cfg, "preps", {"e", "f", "h"})) {
      if (p.size() != 1) throw input_error("preps entries must be e, f or h");
      preps.push_back(dynamics::prep_from_label(p[0]));
    }
    const auto grid = time_grid(cfg);
    const long shots = get_or<long>(cfg, "shots_per_point", 100000);
    std::optional<double> floor;
    if (cfg.contains("floor") && !cfg.at("floor").is_null()) floor = get_or<double>(cfg, "floor", 1.0);
    emit(c, io::format_reset_csv(synth::gen_reset_curves(rates, preps, grid, shots, floor, seed)));
  } else if (kind == "rb") {
    const double p = get_or<double>(cfg, "p", 0.995125);
    const double a = get_or<double>(cfg, "A", 0.5);
    const double b = get_or<double>(cfg, "B", 0.5);
    std::vector<double> m = get_or<std::vector<double>>(cfg, "m", {});
    if (m.empty())
      for (int k = 0; k <= 40; ++k) m.push_back(25.0 * k);
    const long shots = get_or<long>(cfg, "shots_per_point", 10000);
    const auto d = synth::gen_rb_decay(p, a, b, m, shots, seed);
    emit(c, io::format_xy_csv({d.m, d.p_g, {}}));
  } else {
    throw input_error("unknown generator '" + kind + "' (expected thermal, windows, reset or rb)");
  }
}

}  // namespace

int run(int argc, char** argv) {
  CLI::App app{"qdial: tunable drive-line filter modeling and qubit readout analysis"};
  app.require_subcommand(1);

  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "JSON configuration file");
    sub->add_option("--out", common.out, "Output file (default: standard output)");
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--format", common.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
  };

  auto* sweep = app.add_subcommand("filter-sweep", "Flux sweep of filter frequency and qubit coupling");
  add_common(sweep);

  auto* reset = app.add_subcommand("fit-reset", "Fit relaxation rates to reset populations");
  add_common(reset);
  reset->add_option("--input", common.input, "Reset CSV (prep,time_s,p_g,p_e,p_f,p_h)");
  bool fit_floor = false;
  reset->add_flag("--fit-floor", fit_floor, "Fit a shared saturation floor");

  auto* temp = app.add_subcommand("fit-temp", "Boltzmann temperature from shots or populations");
  add_common(temp);
  temp->add_option("--input", common.input, "Shot CSV (prep,i,q)");
  std::string model_path, preset, populations;
  long window = 0;
  double t_shot_us = 34.2;
  temp->add_option("--model", model_path, "GMM model JSON; without it the prep column is used");
  temp->add_option("--ladder", preset, "Ladder preset (q3 or q4)");
  temp->add_option("--window", window, "Shots per window");
  temp->add_option("--t-shot-us", t_shot_us, "Duration of one shot (us)");
  temp->add_option("--populations", populations, "Fit one population vector p_g,p_e,p_f,p_h");

  auto* rb = app.add_subcommand("fit-rb", "Randomized benchmarking decay fit");
  add_common(rb);
  rb->add_option("--input", common.input, "Reference decay CSV (x,y[,sigma]), x = sequence length");
  double k = fits::default_pulses_per_clifford;
  std::string interleaved;
  rb->add_option("--k", k, "Average primitive pulses per Clifford");
  rb->add_option("--interleaved", interleaved, "Interleaved decay CSV");

  auto* curve = app.add_subcommand("fit-curve", "Generic curve fit");
  add_common(curve);
  curve->add_option("--input", common.input, "CSV (x,y[,sigma])");
  std::string curve_model = "exponential";
  curve->add_option("--model", curve_model, "exponential, cosine, stretched or quadratic");

  auto* cls = app.add_subcommand("classify", "Fit or apply a GMM readout model");
  add_common(cls);
  cls->add_option("--input", common.input, "Shot CSV (prep,i,q)");
  std::string cls_model, labels = "g,e,f,h", init = "supervised";
  cls->add_option("--model", cls_model, "Existing model JSON (skips fitting)");
  cls->add_option("--labels", labels, "Components to fit");
  cls->add_option("--init", init, "supervised or random");

  auto* gen = app.add_subcommand("generate", "Synthetic datasets");
  add_common(gen);
  std::string gen_kind;
  gen->add_option("kind", gen_kind, "thermal, windows, reset or rb")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? exit_ok : exit_input;
  }

  try {
    if (sweep->parsed())
      cmd_filter_sweep(common);
    else if (reset->parsed())
      cmd_fit_reset(common, fit_floor);
    else if (temp->parsed())
      cmd_fit_temp(common, model_path, preset, window, t_shot_us, populations);
    else if (rb->parsed())
      cmd_fit_rb(common, k, interleaved);
    else if (curve->parsed())
      cmd_fit_curve(common, curve_model);
    else if (cls->parsed())
      cmd_classify(common, cls_model, labels, init);
    else if (gen->parsed()) {
      try {
        cmd_generate(common, gen_kind);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument) std::cerr << gen->help() << '\n';
        throw;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const io::json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_input;
  }
  return exit_ok;
}

}  // namespace qdial::cli
