#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qdial/cli.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path tmp(const std::string& name) {
  fs::path dir(QDIAL_TEST_TMP);
  fs::create_directories(dir);
  return dir / name;
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "qdial");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return qdial::cli::run(static_cast<int>(args.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void put(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

TEST_CASE("generate is deterministic per seed") {
  const auto a = tmp("reset_a.csv"), b = tmp("reset_b.csv"), c = tmp("reset_c.csv");
  CHECK(run({"generate", "reset", "--seed", "42", "--out", a.string()}) == 0);
  CHECK(run({"generate", "reset", "--seed", "42", "--out", b.string()}) == 0);
  CHECK(run({"generate", "reset", "--seed", "43", "--out", c.string()}) == 0);
  CHECK(slurp(a) == slurp(b));
  CHECK(slurp(a) != slurp(c));
  CHECK(slurp(a).rfind("prep,", 0) == 0);

  const auto t1 = tmp("thermal_1.csv"), t2 = tmp("thermal_2.csv");
  CHECK(run({"generate", "thermal", "--seed", "7", "--out", t1.string()}) == 0);
  CHECK(run({"generate", "thermal", "--seed", "7", "--out", t2.string()}) == 0);
  CHECK(slurp(t1) == slurp(t2));
}

TEST_CASE("generate rejects unknown kinds") {
  CHECK(run({"generate", "bogus", "--out", tmp("x.csv").string()}) == 1);
  CHECK(run({"generate"}) == 1);
  CHECK(run({"no-such-command"}) == 1);
  CHECK(run({"generate", "rb", "--format", "yaml"}) == 1);
}

TEST_CASE("fit-reset round trip") {
  const auto data = tmp("reset_fit.csv"), out = tmp("reset_fit.json");
  REQUIRE(run({"generate", "reset", "--seed", "42", "--out", data.string()}) == 0);
  REQUIRE(run({"fit-reset", "--input", data.string(), "--out", out.string()}) == 0);
  const json j = json::parse(slurp(out));
  CHECK(j.at("t1_ns").size() == 3);
  CHECK(j.at("t1_ns").at("ge").get<double>() == doctest::Approx(238.22).epsilon(0.01));
  CHECK(j.at("t1_ns").at("fh").get<double>() == doctest::Approx(128.84).epsilon(0.02));

  const auto again = tmp("reset_fit2.json");
  REQUIRE(run({"fit-reset", "--input", data.string(), "--out", again.string()}) == 0);
  CHECK(slurp(out) == slurp(again));

  CHECK(run({"fit-reset", "--out", out.string()}) == 1);
  CHECK(run({"fit-reset", "--input", tmp("missing.csv").string()}) == 1);

  // One preparation only: input error.
  const auto one = tmp("reset_one.csv");
  const auto cfg = tmp("reset_one.json");
  put(cfg, R"({"preps": ["e"]})");
  REQUIRE(run({"generate", "reset", "--config", cfg.string(), "--out", one.string()}) == 0);
  CHECK(run({"fit-reset", "--input", one.string(), "--out", out.string()}) == 1);
}

TEST_CASE("fit-temp") {
  const auto out = tmp("temp.json");
  REQUIRE(run({"fit-temp", "--populations", "0.65496410641480601,0.22985463952851136,0.083597172656920309,0.031584081399762321",
               "--ladder", "q3", "--out", out.string()}) == 0);
  const json j = json::parse(slurp(out));
  CHECK(j.at("t_eff_K").get<double>() == doctest::Approx(0.181072).epsilon(1e-8));

  const auto uniform = tmp("temp_u.json");
  REQUIRE(run({"fit-temp", "--populations", "0.25,0.25,0.25,0.25", "--out", uniform.string()}) == 0);
  CHECK(json::parse(slurp(uniform)).at("r2").is_null());

  CHECK(run({"fit-temp", "--populations", "0.5,0.5,0.5,0.5", "--out", out.string()}) == 1);
  CHECK(run({"fit-temp", "--populations", "1,0", "--out", out.string()}) == 1);
  CHECK(run({"fit-temp", "--populations", "1,0,0,0", "--ladder", "q9"}) == 1);

  SUBCASE("windows from shots") {
    const auto shots = tmp("windows.csv"), cfg = tmp("windows_cfg.json"), res = tmp("windows.json");
    put(cfg, R"({"n_win": 4, "n_shot": 2000, "temperature_mK": 181.072})");
    REQUIRE(run({"generate", "windows", "--config", cfg.string(), "--seed", "3", "--out", shots.string()}) == 0);
    REQUIRE(run({"fit-temp", "--input", shots.string(), "--window", "2000", "--out", res.string()}) == 0);
    const json w = json::parse(slurp(res));
    CHECK(w.at("n_win").get<int>() == 4);
    CHECK(w.at("mu_T_K").get<double>() == doctest::Approx(0.181).epsilon(0.05));
    CHECK(w.at("per_window").size() == 4);
    CHECK(run({"fit-temp", "--input", shots.string(), "--window", "3000", "--out", res.string()}) == 1);
  }
}

TEST_CASE("filter-sweep") {
  const auto cfg = tmp("sweep.json"), out = tmp("sweep.csv");
  put(cfg, R"({"sweep": {"flux_min": 0.0, "flux_max": 0.5, "points": 11, "mode": "strict",
               "drive_at_flux": 0.3}})");
  REQUIRE(run({"filter-sweep", "--config", cfg.string(), "--out", out.string()}) == 0);
  std::istringstream lines(slurp(out));
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 12);
  CHECK(rows[0].rfind("flux_ratio,", 0) == 0);
  CHECK(rows.back().find("error:HalfFluxDivergence") != std::string::npos);
  CHECK(rows[1].find("error:") == std::string::npos);

  const auto jout = tmp("sweep_out.json");
  REQUIRE(run({"filter-sweep", "--config", cfg.string(), "--format", "json", "--out", jout.string()}) == 0);
  const json j = json::parse(slurp(jout));
  CHECK(j.at("rows").size() == 11);
  CHECK(j.at("rows")[10].at("error") == "HalfFluxDivergence");

  const auto bad = tmp("sweep_bad.json");
  put(bad, "{ not json");
  CHECK(run({"filter-sweep", "--config", bad.string()}) == 1);
  put(bad, R"({"geometry": {"x_s": 1e-3, "x_s_mm": 1.0}})");
  CHECK(run({"filter-sweep", "--config", bad.string(), "--out", out.string()}) == 1);
  put(bad, R"({"sweep": {"mode": "loose"}})");
  CHECK(run({"filter-sweep", "--config", bad.string(), "--out", out.string()}) == 1);
}

TEST_CASE("classify") {
  const auto shots = tmp("cls.csv"), out = tmp("cls.json"), cfg = tmp("cls_cfg.json");
  put(cfg, R"({"n": 4000, "temperature_mK": 300})");
  REQUIRE(run({"generate", "thermal", "--config", cfg.string(), "--seed", "5", "--out", shots.string()}) == 0);
  REQUIRE(run({"classify", "--input", shots.string(), "--labels", "g,e,f,h,k+", "--out", out.string()}) == 0);
  const json j = json::parse(slurp(out));
  CHECK(j.at("min_separation").get<double>() > 4.0);
  CHECK(j.contains("assignment_matrix"));
  CHECK(j.at("model").is_object());

  // Reuse the fitted model.
  const auto model = tmp("cls_model.json"), out2 = tmp("cls2.json");
  put(model, j.at("model").dump());
  REQUIRE(run({"classify", "--input", shots.string(), "--model", model.string(), "--out", out2.string()}) == 0);
  CHECK(json::parse(slurp(out2)).at("counts") == j.at("counts"));

  CHECK(run({"classify", "--input", shots.string(), "--labels", "g,x", "--out", out.string()}) == 1);
  CHECK(run({"classify", "--input", shots.string(), "--init", "other", "--out", out.string()}) == 1);
}

TEST_CASE("fit-rb and fit-curve") {
  const auto data = tmp("rb.csv"), out = tmp("rb.json");
  REQUIRE(run({"generate", "rb", "--seed", "1", "--out", data.string()}) == 0);
  REQUIRE(run({"fit-rb", "--input", data.string(), "--out", out.string()}) == 0);
  const json j = json::parse(slurp(out));
  CHECK(j.at("clifford_fidelity").get<double>() == doctest::Approx(0.9987).epsilon(2e-4));

  const auto flat = tmp("flat.csv");
  put(flat, "x,y\n0,1\n1,1\n2,1\n3,1\n4,1\n5,1\n6,1\n7,1\n8,1\n");
  CHECK(run({"fit-curve", "--input", flat.string(), "--model", "cosine", "--out", out.string()}) == 2);
  const auto cap = tmp("cap.csv");
  put(cap, "x,y\n-2,-4\n-1,-1\n0,0\n1,-1\n2,-4\n");
  CHECK(run({"fit-curve", "--input", cap.string(), "--model", "quadratic", "--out", out.string()}) == 2);
  CHECK(run({"fit-curve", "--input", cap.string(), "--model", "spline", "--out", out.string()}) == 1);
  const auto bowl = tmp("bowl.csv");
  put(bowl, "x,y\n-2,5\n-1,2\n0,1\n1,2\n2,5\n");
  REQUIRE(run({"fit-curve", "--input", bowl.string(), "--model", "quadratic", "--out", out.string()}) == 0);
  CHECK(json::parse(slurp(out)).at("x_min").get<double>() == doctest::Approx(0.0).scale(1.0));
}
