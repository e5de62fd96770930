// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

#include "fgnls/fgs.hpp"
#include "fgnls/io.hpp"

using namespace fgnls;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "fgnls_io_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

FieldGrid random_grid(FieldUnits units, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  FieldGrid g;
  g.n_t = 16;
  g.dt = 0.0625;
  g.t_start = -0.5;
  g.z_values = {0.0, 37.5, 75.0};
  g.units = units;
  g.samples.resize(static_cast<std::size_t>(g.n_t) * g.z_values.size());
  for (cplx& v : g.samples) v = cplx(gauss(rng), gauss(rng));
  return g;
}

const ThetaParameters& genus1() {
  static ThetaParameters p = [] {
    MainSpectrum s;
    s.points = {cplx(-0.3, 0.8), cplx(0.9, 1.1)};
    return derive_parameters(s);
  }();
  return p;
}

}  // namespace

TEST_CASE("field binary round trip is exact in data and metadata") {
  const fs::path dir = fresh_dir("binary");
  for (FieldUnits units : {FieldUnits::dimensional, FieldUnits::dimensionless}) {
    const FieldGrid g = random_grid(units, units == FieldUnits::dimensional ? 5 : 6);
    const fs::path data = dir / "field.bin", meta = dir / "field.json";
    write_field_binary(g, data, meta);
    const FieldGrid r = read_field_binary(data, meta);
    CHECK(r.n_t == g.n_t);
    CHECK(r.dt == g.dt);
    CHECK(r.t_start == g.t_start);
    CHECK(r.z_values == g.z_values);
    CHECK(r.units == g.units);
    REQUIRE(r.samples.size() == g.samples.size());
    for (std::size_t i = 0; i < g.samples.size(); ++i) CHECK(r.samples[i] == g.samples[i]);
  }

  // Truncated payloads and unknown header keys are rejected.
  const FieldGrid g = random_grid(FieldUnits::dimensional, 7);
  write_field_binary(g, dir / "trunc.bin", dir / "trunc.json");
  fs::resize_file(dir / "trunc.bin", 24);
  CHECK_THROWS_AS(read_field_binary(dir / "trunc.bin", dir / "trunc.json"), Error);
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"n_t": 16, "n_z": 3, "dt_ns": 1, "t_start_ns": 0, "z_km": [0,1,2], )"
        << R"("units": "dimensional", "surprise": 1})";
  }
  CHECK_THROWS_AS(read_field_binary(dir / "trunc.bin", dir / "bad.json"), Error);
}

TEST_CASE("field CSV holds every sample in t,z,re,im columns") {
  const fs::path dir = fresh_dir("csv");
  const FieldGrid g = random_grid(FieldUnits::dimensional, 11);
  write_field_csv(g, dir / "field.csv");

  std::ifstream in(dir / "field.csv");
  std::string line;
  REQUIRE(static_cast<bool>(std::getline(in, line)));
  CHECK(line == "t,z,re,im");
  int rows = 0;
  int exact = 0;
  while (std::getline(in, line)) {
    double t, z, re, im;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf", &t, &z, &re, &im) == 4);
    const int iz = rows / g.n_t, it = rows % g.n_t;
    CHECK(t == doctest::Approx(g.time_at(it)).epsilon(1e-15));
    CHECK(z == g.z_values[static_cast<std::size_t>(iz)]);
    // 17 significant digits give exact double round trips.
    if (re == g.at(iz, it).real() && im == g.at(iz, it).imag()) ++exact;
    ++rows;
  }
  CHECK(rows == g.n_t * g.n_z());
  CHECK(exact == rows);
}

TEST_CASE("spectrum JSON: round trip and input validation") {
  const fs::path dir = fresh_dir("spectrum");
  MainSpectrum s;
  s.points = {cplx(-1.0, 4.5), cplx(0.0, 5.0), cplx(1.0, 4.5)};
  write_spectrum_json(s, dir / "spec.json");
  const MainSpectrum r = read_spectrum_json(dir / "spec.json");
  REQUIRE(r.points.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) CHECK(r.points[i] == s.points[i]);

  auto write_text = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name);
    out << text;
    return dir / name;
  };
  CHECK_THROWS_AS(read_spectrum_json(write_text("a.json", R"({"pts": []})")), Error);
  CHECK_THROWS_AS(read_spectrum_json(write_text("b.json", R"({"points": [[1.0]]})")), Error);
  CHECK_THROWS_AS(read_spectrum_json(write_text("c.json", R"({"points": [["x", 2]]})")), Error);
  CHECK_THROWS_AS(read_spectrum_json(write_text("d.json", "not json")), Error);
  CHECK_THROWS_AS(read_spectrum_json(dir / "missing.json"), Error);
}

TEST_CASE("construction state reloads exactly, without quadrature") {
  const fs::path dir = fresh_dir("construct");
  ConstructSummary s;
  s.params = genus1();
  ScalingParams sp;
  sp.T0 = choose_T0(s.params, 1.0);
  s.scales = dimensional_scales(s.params, sp);
  s.residual = 2.5e-7;
  write_construct_json(s, dir / "theta.json");
  const ConstructSummary r = read_construct_json(dir / "theta.json");

  const ThetaParameters& a = s.params;
  const ThetaParameters& b = r.params;
  CHECK(b.g == a.g);
  CHECK((b.k.array() == a.k.array()).all());
  CHECK((b.omega.array() == a.omega.array()).all());
  CHECK((b.delta_plus.array() == a.delta_plus.array()).all());
  CHECK(b.K == a.K);
  CHECK(b.k0 == a.k0);
  CHECK(b.omega0 == a.omega0);
  CHECK(b.tau.tau() == a.tau.tau());
  CHECK(b.p_tau == a.p_tau);
  CHECK(b.p_zeta == a.p_zeta);
  CHECK(b.max_imag_residue == a.max_imag_residue);
  CHECK(r.scales.T0_ns == s.scales.T0_ns);
  CHECK(r.scales.Z0_km == s.scales.Z0_km);
  CHECK(r.scales.C_sqrt_mW == s.scales.C_sqrt_mW);
  CHECK(r.scales.p_T_ns == s.scales.p_T_ns);
  CHECK(r.scales.p_z_km == s.scales.p_z_km);
  CHECK(r.residual == s.residual);

  // The reloaded parameters drive the evaluator to the same field.
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    const double zeta = u(rng) * 0.1, tau_t = u(rng) * a.p_tau;
    CHECK(std::abs(evaluate_psi(b, zeta, tau_t) - evaluate_psi(a, zeta, tau_t)) < 1e-12);
  }

  // Aperiodic directions survive the null encoding.
  ConstructSummary inf_case = s;
  inf_case.params.p_zeta = std::numeric_limits<double>::infinity();
  inf_case.scales.p_z_km = std::numeric_limits<double>::infinity();
  write_construct_json(inf_case, dir / "inf.json");
  const ConstructSummary rr = read_construct_json(dir / "inf.json");
  CHECK(std::isinf(rr.params.p_zeta));
  CHECK(std::isinf(rr.scales.p_z_km));
}

TEST_CASE("scattering estimate JSON round trip") {
  const fs::path dir = fresh_dir("estimate");
  SpectrumEstimate est;
  SpectrumPoint p;
  p.lambda = cplx(-1.0, 4.5000123);
  p.residual = 3.2e-12;
  p.converged = true;
  p.family = RootFamily::antiperiodic;
  est.points.push_back(p);
  p.lambda = cplx(0.4, 0.1);
  p.residual = 0.02;
  p.converged = false;
  p.family = RootFamily::periodic;
  est.points.push_back(p);

  write_estimate_json(est, dir / "est.json");
  const SpectrumEstimate r = read_estimate_json(dir / "est.json");
  REQUIRE(r.points.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(r.points[i].lambda == est.points[i].lambda);
    CHECK(r.points[i].residual == est.points[i].residual);
    CHECK(r.points[i].converged == est.points[i].converged);
    CHECK(r.points[i].family == est.points[i].family);
  }
  CHECK(r.converged_points().size() == 1);

  std::ofstream bad(dir / "bad.json");
  bad << R"({"points": [{"re": 1, "im": 2, "residual": 0, "converged": true, "family": "odd"}]})";
  bad.close();
  CHECK_THROWS_AS(read_estimate_json(dir / "bad.json"), Error);
}

TEST_CASE("histogram CSV enumerates every bin with its center") {
  const fs::path dir = fresh_dir("histogram");
  SpectrumEstimate est;
  for (cplx lam : {cplx(-1.0, 4.5), cplx(0.0, 5.0), cplx(1.0, 4.5), cplx(0.0, 5.0)}) {
    SpectrumPoint p;
    p.lambda = lam;
    p.converged = true;
    est.points.push_back(p);
  }
  HistogramSpec spec;
  spec.re_min = -2.0;
  spec.re_max = 2.0;
  spec.im_min = 4.0;
  spec.im_max = 5.5;
  spec.n_re = 4;
  spec.n_im = 3;
  const SpectrumHistogram h = spectrum_histogram({est}, spec);
  REQUIRE(h.accepted == 4);
  write_histogram_csv(h, dir / "hist.csv");

  std::ifstream in(dir / "hist.csv");
  std::string line;
  REQUIRE(static_cast<bool>(std::getline(in, line)));
  CHECK(line == "re_center,im_center,count");
  int rows = 0;
  long total = 0;
  while (std::getline(in, line)) {
    double rc, ic;
    long c;
    REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%ld", &rc, &ic, &c) == 3);
    const int i = rows / spec.n_im, jj = rows % spec.n_im;
    CHECK(rc == doctest::Approx(h.re_center(i)).epsilon(1e-15));
    CHECK(ic == doctest::Approx(h.im_center(jj)).epsilon(1e-15));
    total += c;
    ++rows;
  }
  CHECK(rows == spec.n_re * spec.n_im);
  CHECK(total == h.accepted);
}

TEST_CASE("experiment config: defaults, full form, strict validation") {
  const ExperimentConfig minimal = parse_config(R"({"spectrum": {"points": [[0.7, 1.3]]}})");
  CHECK(minimal.spectrum.points.size() == 1);
  CHECK(minimal.target_period_ns == 1.0);
  CHECK(minimal.link.span.beta2 == -21.5);
  CHECK(minimal.link.span.gamma == 1.3);
  CHECK(minimal.link.span.alpha_dB == 0.2);
  CHECK(minimal.link.span.length == 75.0);
  CHECK(minimal.link.n_spans == 0);
  CHECK(!minimal.link.explicit_gain_dB);
  CHECK(!minimal.link.filter);
  CHECK(!minimal.link.ase);
  CHECK(minimal.seed == 1);
  CHECK(minimal.grid.samples_per_period == 256);
  CHECK(minimal.grid.periods == 1);
  CHECK(!minimal.z_offset_km);
  CHECK(minimal.analysis.grid_density == 40);
  CHECK(minimal.out_dir == "runs");

  const std::string full = R"({
    "spectrum": {"points": [[-1, 4.5], [0, 5], [1, 4.5]]},
    "target_period_ns": 1.0,
    "span": {"beta2_ps2_km": -21.5, "gamma_per_w_km": 1.3, "alpha_db_km": 0.2, "length_km": 75.0},
    "link": {"n_spans": 120, "gain_db": null,
             "filter": {"fwhm_ghz": 147.0, "offset_ghz": 5.0},
             "ase": {"noise_figure_db": 5.5}},
    "seed": 42,
    "grid": {"samples_per_period": 128, "periods": 2},
    "construct": {"z_offset_km": -2880.0},
    "analysis": {"box": {"re_min": -2.5, "re_max": 2.5, "im_min": 3.0, "im_max": 6.0},
                 "grid_density": 32, "upsample_factor": 2,
                 "bins": {"re_min": -2.5, "re_max": 2.5, "im_min": 0.0, "im_max": 6.5,
                          "n_re": 48, "n_im": 48, "artifact_floor": 0.5},
                 "distances_km": [0.0, 975.0, 3000.0]},
    "out_dir": "out/pipeline"
  })";
  const ExperimentConfig cfg = parse_config(full);
  CHECK(cfg.link.n_spans == 120);
  REQUIRE(cfg.link.filter);
  CHECK(cfg.link.filter->offset_GHz == 5.0);
  REQUIRE(cfg.link.ase);
  CHECK(cfg.link.ase->noise_figure_dB == 5.5);
  CHECK(cfg.link.ase->seed == 42);  // link noise follows the experiment seed
  CHECK(cfg.seed == 42);
  CHECK(cfg.grid.samples_per_period == 128);
  CHECK(cfg.grid.periods == 2);
  REQUIRE(cfg.z_offset_km);
  CHECK(*cfg.z_offset_km == -2880.0);
  CHECK(cfg.analysis.upsample_factor == 2);
  CHECK(cfg.analysis.bins.n_re == 48);
  CHECK(cfg.analysis.distances_km == std::vector<double>{0.0, 975.0, 3000.0});
  CHECK(cfg.out_dir == "out/pipeline");

  // Typos and invalid values fail loudly, not silently.
  CHECK_THROWS_AS(parse_config(R"({"spectrum": {"points": [[1, 1]]}, "speling": 1})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"spectrum": {"points": []}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"spectrum": {"points": [[1, 1]]}, "seed": -3})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"spectrum": {"points": [[1, 1]]}, "target_period_ns": 0})"),
                  Error);
  CHECK_THROWS_AS(
      parse_config(R"({"spectrum": {"points": [[1, 1]]}, "link": {"filter": {"fwhm_ghz": 0}}})"),
      Error);
  CHECK_THROWS_AS(
      parse_config(R"({"spectrum": {"points": [[1, 1]]}, "grid": {"samples_per_period": 4}})"),
      Error);
  CHECK_THROWS_AS(parse_config(R"({"spectrum": {"points": [[1, 1]]}, "out_dir": ""})"), Error);

  const fs::path dir = fresh_dir("config");
  {
    std::ofstream out(dir / "cfg.json");
    out << full;
  }
  const ExperimentConfig from_file = read_config(dir / "cfg.json");
  CHECK(from_file.link.n_spans == 120);
}

TEST_CASE("config hash is a deterministic 16-hex identity") {
  const std::string a = R"({"spectrum": {"points": [[1, 1]]}})";
  const std::string b = R"({"spectrum": {"points": [[1, 2]]}})";
  CHECK(config_hash(a).size() == 16);
  CHECK(config_hash(a) == config_hash(a));
  CHECK(config_hash(a) != config_hash(b));
  for (char c : config_hash(a)) CHECK(std::isxdigit(static_cast<unsigned char>(c)));
}

TEST_CASE("run directories version up and manifests land atomically") {
  const fs::path dir = fresh_dir("runs");
  const fs::path r0 = make_versioned_dir(dir / "base");
  const fs::path r1 = make_versioned_dir(dir / "base");
  CHECK(r0.filename() == "run-000");
  CHECK(r1.filename() == "run-001");
  CHECK(fs::is_directory(r0));
  CHECK(fs::is_directory(r1));

  RunManifest m;
  m.config_hash = config_hash("{}");
  m.stages.push_back({"construct", {"theta.json", "field.bin"}, 123.4});
  m.stages.push_back({"nft", {"estimate_0.json"}, 56.7});
  write_manifest_atomic(m, r0 / "manifest.json");
  CHECK(fs::exists(r0 / "manifest.json"));
  CHECK(!fs::exists(r0 / "manifest.json.tmp"));

  std::ifstream in(r0 / "manifest.json");
  nlohmann::json j = nlohmann::json::parse(in);
  CHECK(j["config_hash"] == m.config_hash);
  CHECK(j["tool_version"] == std::string(kToolVersion));
  REQUIRE(j["stages"].size() == 2);
  CHECK(j["stages"][0]["name"] == "construct");
  CHECK(j["stages"][0]["files"].size() == 2);
  CHECK(j["stages"][1]["wall_ms"] == 56.7);
}
