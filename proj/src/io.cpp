// SPDX-License-Identifier: Apache-2.0
#include "fgnls/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace fgnls {

namespace {

using njson = nlohmann::ordered_json;

void require_little_endian() {
  if constexpr (std::endian::native != std::endian::little)
    throw Error("binary field format is defined little-endian; unsupported host byte order");
}

std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spew(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + file.string());
  out << text;
  out.flush();
  if (!out) throw Error("write failed for " + file.string());
}

njson parse_text(const std::string& text, const std::string& what) {
  try {
    return njson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(what + ": " + e.what());
  }
}

njson load_json(const std::filesystem::path& file) { return parse_text(slurp(file), file.string()); }

// Strict object validation: every present key must be expected.
void check_keys(const njson& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  if (!j.is_object()) throw Error(ctx + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) throw Error(ctx + ": unknown key '" + it.key() + "'");
  }
}

const njson& member(const njson& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) throw Error(ctx + ": missing key '" + key + "'");
  return *it;
}

double as_number(const njson& j, const std::string& ctx) {
  if (!j.is_number()) throw Error(ctx + ": expected a number");
  return j.get<double>();
}

double number_at(const njson& j, const char* key, const std::string& ctx) {
  return as_number(member(j, key, ctx), ctx + "." + key);
}

int int_at(const njson& j, const char* key, const std::string& ctx) {
  const njson& v = member(j, key, ctx);
  if (!v.is_number_integer()) throw Error(ctx + "." + key + ": expected an integer");
  return v.get<int>();
}

// inf-aware encoding: JSON has no infinity literal, so aperiodic directions
// are stored as null.
njson enc_extended(double x) {
  if (std::isfinite(x)) return njson(x);
  return njson(nullptr);
}
double dec_extended(const njson& j, const std::string& ctx) {
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return as_number(j, ctx);
}

njson enc_cvec(const Eigen::VectorXcd& v) {
  njson a = njson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back({v[i].real(), v[i].imag()});
  return a;
}

cplx dec_pair(const njson& j, const std::string& ctx) {
  if (!j.is_array() || j.size() != 2) throw Error(ctx + ": expected [re, im]");
  return cplx(as_number(j[0], ctx), as_number(j[1], ctx));
}

Eigen::VectorXcd dec_cvec(const njson& j, const std::string& ctx) {
  if (!j.is_array()) throw Error(ctx + ": expected an array");
  Eigen::VectorXcd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = dec_pair(j[i], ctx);
  return v;
}

njson enc_rvec(const Eigen::VectorXd& v) {
  njson a = njson::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd dec_rvec(const njson& j, const std::string& ctx) {
  if (!j.is_array()) throw Error(ctx + ": expected an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = as_number(j[i], ctx);
  return v;
}

njson enc_cmat(const Eigen::MatrixXcd& m) {
  njson rows = njson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    njson row = njson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back({m(r, c).real(), m(r, c).imag()});
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXcd dec_cmat(const njson& j, const std::string& ctx) {
  if (!j.is_array()) throw Error(ctx + ": expected an array of rows");
  const Eigen::Index nr = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXcd m(nr, nr == 0 ? 0 : static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index r = 0; r < nr; ++r) {
    const njson& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw Error(ctx + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m(r, c) = dec_pair(row[static_cast<std::size_t>(c)], ctx);
  }
  return m;
}

njson enc_imat(const Eigen::MatrixXi& m) {
  njson rows = njson::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    njson row = njson::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXi dec_imat(const njson& j, const std::string& ctx) {
  if (!j.is_array()) throw Error(ctx + ": expected an array of rows");
  const Eigen::Index nr = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXi m(nr, nr == 0 ? 0 : static_cast<Eigen::Index>(j[0].size()));
  for (Eigen::Index r = 0; r < nr; ++r) {
    const njson& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw Error(ctx + ": ragged matrix rows");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const njson& cell = row[static_cast<std::size_t>(c)];
      if (!cell.is_number_integer()) throw Error(ctx + ": expected integers");
      m(r, c) = cell.get<int>();
    }
  }
  return m;
}

njson spectrum_to_json(const MainSpectrum& s) {
  njson j;
  njson pts = njson::array();
  for (const cplx& p : s.points) pts.push_back({p.real(), p.imag()});
  j["points"] = std::move(pts);
  return j;
}

MainSpectrum spectrum_from_json(const njson& j, const std::string& ctx) {
  check_keys(j, {"points"}, ctx);
  const njson& pts = member(j, "points", ctx);
  if (!pts.is_array()) throw Error(ctx + ".points: expected an array");
  MainSpectrum s;
  for (std::size_t i = 0; i < pts.size(); ++i)
    s.points.push_back(dec_pair(pts[i], ctx + ".points"));
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// Field grids.
// ---------------------------------------------------------------------------

void write_field_csv(const FieldGrid& grid, const std::filesystem::path& file) {
  std::ostringstream out;
  out << "t,z,re,im\n" << std::setprecision(17);
  for (int iz = 0; iz < grid.n_z(); ++iz)
    for (int it = 0; it < grid.n_t; ++it) {
      const cplx v = grid.at(iz, it);
      out << grid.time_at(it) << ',' << grid.z_values[static_cast<std::size_t>(iz)] << ','
          << v.real() << ',' << v.imag() << '\n';
    }
  spew(file, out.str());
}

void write_field_binary(const FieldGrid& grid, const std::filesystem::path& data_file,
                        const std::filesystem::path& sidecar_file) {
  require_little_endian();
  if (static_cast<std::size_t>(grid.n_t) * static_cast<std::size_t>(grid.n_z()) !=
      grid.samples.size())
    throw Error("write_field_binary: sample count does not match n_t * n_z");
  njson j;
  j["n_t"] = grid.n_t;
  j["n_z"] = grid.n_z();
  j["dt_ns"] = grid.dt;
  j["t_start_ns"] = grid.t_start;
  j["z_km"] = grid.z_values;
  j["units"] = grid.units == FieldUnits::dimensional ? "dimensional" : "dimensionless";
  spew(sidecar_file, j.dump(2) + "\n");

  std::ofstream out(data_file, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot create " + data_file.string());
  // std::complex<double> is layout-compatible with double[2] = (re, im).
  out.write(reinterpret_cast<const char*>(grid.samples.data()),
            static_cast<std::streamsize>(grid.samples.size() * sizeof(cplx)));
  out.flush();
  if (!out) throw Error("write failed for " + data_file.string());
}

FieldGrid read_field_binary(const std::filesystem::path& data_file,
                            const std::filesystem::path& sidecar_file) {
  require_little_endian();
  const njson j = load_json(sidecar_file);
  const std::string ctx = sidecar_file.string();
  check_keys(j, {"n_t", "n_z", "dt_ns", "t_start_ns", "z_km", "units"}, ctx);
  FieldGrid grid;
  grid.n_t = int_at(j, "n_t", ctx);
  const int n_z = int_at(j, "n_z", ctx);
  grid.dt = number_at(j, "dt_ns", ctx);
  grid.t_start = number_at(j, "t_start_ns", ctx);
  const Eigen::VectorXd z = dec_rvec(member(j, "z_km", ctx), ctx + ".z_km");
  grid.z_values.assign(z.data(), z.data() + z.size());
  const njson& units_j = member(j, "units", ctx);
  if (!units_j.is_string()) throw Error(ctx + ".units: expected a string");
  const std::string units = units_j.get<std::string>();
  if (units == "dimensional")
    grid.units = FieldUnits::dimensional;
  else if (units == "dimensionless")
    grid.units = FieldUnits::dimensionless;
  else
    throw Error(ctx + ".units: must be 'dimensional' or 'dimensionless'");
  if (grid.n_t <= 0 || n_z <= 0 || static_cast<int>(grid.z_values.size()) != n_z)
    throw Error(ctx + ": inconsistent grid dimensions");

  const std::string raw = slurp(data_file);
  const std::size_t expect = static_cast<std::size_t>(grid.n_t) * static_cast<std::size_t>(n_z) *
                             sizeof(cplx);
  if (raw.size() != expect)
    throw Error(data_file.string() + ": payload size " + std::to_string(raw.size()) +
                " does not match header (" + std::to_string(expect) + " bytes expected)");
  grid.samples.resize(static_cast<std::size_t>(grid.n_t) * static_cast<std::size_t>(n_z));
  std::memcpy(grid.samples.data(), raw.data(), raw.size());
  grid.check_finite();
  return grid;
}

// ---------------------------------------------------------------------------
// Spectra and construction state.
// ---------------------------------------------------------------------------

MainSpectrum read_spectrum_json(const std::filesystem::path& file) {
  return spectrum_from_json(load_json(file), file.string());
}

void write_spectrum_json(const MainSpectrum& spectrum, const std::filesystem::path& file) {
  spew(file, spectrum_to_json(spectrum).dump(2) + "\n");
}

void write_construct_json(const ConstructSummary& summary, const std::filesystem::path& file) {
  const ThetaParameters& p = summary.params;
  njson j;
  j["spectrum"] = spectrum_to_json(p.spectrum);
  j["g"] = p.g;
  j["k"] = enc_rvec(p.k);
  j["omega"] = enc_rvec(p.omega);
  j["delta_plus"] = enc_cvec(p.delta_plus);
  j["K"] = {p.K.real(), p.K.imag()};
  j["k0"] = p.k0;
  j["omega0"] = p.omega0;
  j["tau"] = enc_cmat(p.tau.tau());
  j["frame"] = enc_imat(p.frame);
  njson cs = njson::array();
  for (Eigen::Index i = 0; i < p.carrier_shift.size(); ++i) cs.push_back(p.carrier_shift[i]);
  j["carrier_shift"] = std::move(cs);
  j["max_imag_residue"] = p.max_imag_residue;
  j["p_tau"] = enc_extended(p.p_tau);
  j["p_zeta"] = enc_extended(p.p_zeta);
  j["scales"] = {{"T0_ns", summary.scales.T0_ns},
                 {"Z0_km", summary.scales.Z0_km},
                 {"C_sqrt_mW", summary.scales.C_sqrt_mW},
                 {"p_T_ns", enc_extended(summary.scales.p_T_ns)},
                 {"p_z_km", enc_extended(summary.scales.p_z_km)}};
  j["residual"] = summary.residual;
  spew(file, j.dump(2) + "\n");
}

ConstructSummary read_construct_json(const std::filesystem::path& file) {
  const njson j = load_json(file);
  const std::string ctx = file.string();
  check_keys(j,
             {"spectrum", "g", "k", "omega", "delta_plus", "K", "k0", "omega0", "tau", "frame",
              "carrier_shift", "max_imag_residue", "p_tau", "p_zeta", "scales", "residual"},
             ctx);
  ConstructSummary s;
  ThetaParameters& p = s.params;
  p.spectrum = spectrum_from_json(member(j, "spectrum", ctx), ctx + ".spectrum");
  p.g = int_at(j, "g", ctx);
  p.k = dec_rvec(member(j, "k", ctx), ctx + ".k");
  p.omega = dec_rvec(member(j, "omega", ctx), ctx + ".omega");
  p.delta_plus = dec_cvec(member(j, "delta_plus", ctx), ctx + ".delta_plus");
  p.K = dec_pair(member(j, "K", ctx), ctx + ".K");
  p.k0 = number_at(j, "k0", ctx);
  p.omega0 = number_at(j, "omega0", ctx);
  const Eigen::MatrixXcd tau = dec_cmat(member(j, "tau", ctx), ctx + ".tau");
  if (tau.rows() > 0) p.tau = RiemannMatrix(tau);
  p.frame = dec_imat(member(j, "frame", ctx), ctx + ".frame");
  {
    const njson& cs = member(j, "carrier_shift", ctx);
    if (!cs.is_array()) throw Error(ctx + ".carrier_shift: expected an array");
    p.carrier_shift.resize(static_cast<Eigen::Index>(cs.size()));
    for (std::size_t i = 0; i < cs.size(); ++i) {
      if (!cs[i].is_number_integer()) throw Error(ctx + ".carrier_shift: expected integers");
      p.carrier_shift[static_cast<Eigen::Index>(i)] = cs[i].get<int>();
    }
  }
  p.max_imag_residue = number_at(j, "max_imag_residue", ctx);
  p.p_tau = dec_extended(member(j, "p_tau", ctx), ctx + ".p_tau");
  p.p_zeta = dec_extended(member(j, "p_zeta", ctx), ctx + ".p_zeta");
  const njson& sc = member(j, "scales", ctx);
  check_keys(sc, {"T0_ns", "Z0_km", "C_sqrt_mW", "p_T_ns", "p_z_km"}, ctx + ".scales");
  s.scales.T0_ns = number_at(sc, "T0_ns", ctx + ".scales");
  s.scales.Z0_km = number_at(sc, "Z0_km", ctx + ".scales");
  s.scales.C_sqrt_mW = number_at(sc, "C_sqrt_mW", ctx + ".scales");
  s.scales.p_T_ns = dec_extended(member(sc, "p_T_ns", ctx), ctx + ".scales.p_T_ns");
  s.scales.p_z_km = dec_extended(member(sc, "p_z_km", ctx), ctx + ".scales.p_z_km");
  s.residual = number_at(j, "residual", ctx);
  if (static_cast<int>(p.k.size()) != p.g || static_cast<int>(p.omega.size()) != p.g ||
      static_cast<int>(p.delta_plus.size()) != p.g || p.tau.genus() != p.g)
    throw Error(ctx + ": inconsistent genus across fields");
  return s;
}

// ---------------------------------------------------------------------------
// Scattering outputs.
// ---------------------------------------------------------------------------

void write_estimate_json(const SpectrumEstimate& estimate, const std::filesystem::path& file) {
  njson pts = njson::array();
  for (const SpectrumPoint& p : estimate.points) {
    njson e;
    e["re"] = p.lambda.real();
    e["im"] = p.lambda.imag();
    e["residual"] = p.residual;
    e["converged"] = p.converged;
    e["family"] = p.family == RootFamily::periodic ? "periodic" : "antiperiodic";
    pts.push_back(std::move(e));
  }
  njson j;
  j["points"] = std::move(pts);
  spew(file, j.dump(2) + "\n");
}

SpectrumEstimate read_estimate_json(const std::filesystem::path& file) {
  const njson j = load_json(file);
  const std::string ctx = file.string();
  check_keys(j, {"points"}, ctx);
  const njson& pts = member(j, "points", ctx);
  if (!pts.is_array()) throw Error(ctx + ".points: expected an array");
  SpectrumEstimate est;
  for (const njson& e : pts) {
    check_keys(e, {"re", "im", "residual", "converged", "family"}, ctx + ".points[]");
    SpectrumPoint p;
    p.lambda = cplx(number_at(e, "re", ctx), number_at(e, "im", ctx));
    p.residual = number_at(e, "residual", ctx);
    const njson& conv = member(e, "converged", ctx);
    if (!conv.is_boolean()) throw Error(ctx + ".converged: expected a boolean");
    p.converged = conv.get<bool>();
    const njson& fam = member(e, "family", ctx);
    if (!fam.is_string()) throw Error(ctx + ".family: expected a string");
    const std::string f = fam.get<std::string>();
    if (f == "periodic")
      p.family = RootFamily::periodic;
    else if (f == "antiperiodic")
      p.family = RootFamily::antiperiodic;
    else
      throw Error(ctx + ".family: must be 'periodic' or 'antiperiodic'");
    est.points.push_back(p);
  }
  return est;
}

void write_histogram_csv(const SpectrumHistogram& histogram, const std::filesystem::path& file) {
  std::ostringstream out;
  out << "re_center,im_center,count\n" << std::setprecision(17);
  for (Eigen::Index i = 0; i < histogram.counts.rows(); ++i)
    for (Eigen::Index jj = 0; jj < histogram.counts.cols(); ++jj)
      out << histogram.re_center(static_cast<int>(i)) << ','
          << histogram.im_center(static_cast<int>(jj)) << ',' << histogram.counts(i, jj) << '\n';
  spew(file, out.str());
}

// ---------------------------------------------------------------------------
// Experiment configuration.
// ---------------------------------------------------------------------------

ExperimentConfig parse_config(const std::string& json_text) {
  const njson j = parse_text(json_text, "config");
  const std::string ctx = "config";
  check_keys(j,
             {"spectrum", "target_period_ns", "span", "link", "seed", "grid", "construct",
              "analysis", "out_dir"},
             ctx);
  ExperimentConfig cfg;
  cfg.spectrum = spectrum_from_json(member(j, "spectrum", ctx), ctx + ".spectrum");
  if (cfg.spectrum.points.empty()) throw Error("config.spectrum: needs at least one point");

  if (j.contains("target_period_ns")) {
    cfg.target_period_ns = number_at(j, "target_period_ns", ctx);
    if (!(cfg.target_period_ns > 0.0)) throw Error("config.target_period_ns: must be positive");
  }
  if (j.contains("span")) {
    const njson& sp = j["span"];
    check_keys(sp, {"beta2_ps2_km", "gamma_per_w_km", "alpha_db_km", "length_km"}, ctx + ".span");
    if (sp.contains("beta2_ps2_km")) cfg.link.span.beta2 = number_at(sp, "beta2_ps2_km", ctx);
    if (sp.contains("gamma_per_w_km")) cfg.link.span.gamma = number_at(sp, "gamma_per_w_km", ctx);
    if (sp.contains("alpha_db_km")) cfg.link.span.alpha_dB = number_at(sp, "alpha_db_km", ctx);
    if (sp.contains("length_km")) cfg.link.span.length = number_at(sp, "length_km", ctx);
    if (!(cfg.link.span.length > 0.0)) throw Error("config.span.length_km: must be positive");
  }
  if (j.contains("link")) {
    const njson& ln = j["link"];
    check_keys(ln, {"n_spans", "gain_db", "filter", "ase"}, ctx + ".link");
    if (ln.contains("n_spans")) {
      cfg.link.n_spans = int_at(ln, "n_spans", ctx + ".link");
      if (cfg.link.n_spans < 0) throw Error("config.link.n_spans: must be >= 0");
    }
    if (ln.contains("gain_db") && !ln["gain_db"].is_null())
      cfg.link.explicit_gain_dB = as_number(ln["gain_db"], ctx + ".link.gain_db");
    if (ln.contains("filter") && !ln["filter"].is_null()) {
      const njson& f = ln["filter"];
      check_keys(f, {"fwhm_ghz", "offset_ghz"}, ctx + ".link.filter");
      FilterSpec fs;
      if (f.contains("fwhm_ghz")) fs.fwhm_GHz = number_at(f, "fwhm_ghz", ctx + ".link.filter");
      if (f.contains("offset_ghz")) fs.offset_GHz = number_at(f, "offset_ghz", ctx + ".link.filter");
      if (!(fs.fwhm_GHz > 0.0)) throw Error("config.link.filter.fwhm_ghz: must be positive");
      cfg.link.filter = fs;
    }
    if (ln.contains("ase") && !ln["ase"].is_null()) {
      const njson& a = ln["ase"];
      check_keys(a, {"noise_figure_db"}, ctx + ".link.ase");
      AseSpec as;
      if (a.contains("noise_figure_db"))
        as.noise_figure_dB = number_at(a, "noise_figure_db", ctx + ".link.ase");
      cfg.link.ase = as;
    }
  }
  if (j.contains("seed")) {
    const njson& s = j["seed"];
    if (!s.is_number_unsigned() && !s.is_number_integer())
      throw Error("config.seed: expected a non-negative integer");
    const std::int64_t v = s.get<std::int64_t>();
    if (v < 0) throw Error("config.seed: expected a non-negative integer");
    cfg.seed = static_cast<std::uint64_t>(v);
  }
  if (j.contains("grid")) {
    const njson& g = j["grid"];
    check_keys(g, {"samples_per_period", "periods"}, ctx + ".grid");
    if (g.contains("samples_per_period"))
      cfg.grid.samples_per_period = int_at(g, "samples_per_period", ctx + ".grid");
    if (g.contains("periods")) cfg.grid.periods = int_at(g, "periods", ctx + ".grid");
    if (cfg.grid.samples_per_period < 8 || cfg.grid.periods < 1)
      throw Error("config.grid: samples_per_period >= 8 and periods >= 1 required");
  }
  if (j.contains("construct")) {
    const njson& c = j["construct"];
    check_keys(c, {"z_offset_km"}, ctx + ".construct");
    if (c.contains("z_offset_km") && !c["z_offset_km"].is_null())
      cfg.z_offset_km = as_number(c["z_offset_km"], ctx + ".construct.z_offset_km");
  }
  if (j.contains("analysis")) {
    const njson& a = j["analysis"];
    check_keys(a, {"box", "grid_density", "upsample_factor", "bins", "distances_km"},
               ctx + ".analysis");
    if (a.contains("box")) {
      const njson& b = a["box"];
      check_keys(b, {"re_min", "re_max", "im_min", "im_max"}, ctx + ".analysis.box");
      cfg.analysis.box.re_min = number_at(b, "re_min", ctx + ".analysis.box");
      cfg.analysis.box.re_max = number_at(b, "re_max", ctx + ".analysis.box");
      cfg.analysis.box.im_min = number_at(b, "im_min", ctx + ".analysis.box");
      cfg.analysis.box.im_max = number_at(b, "im_max", ctx + ".analysis.box");
    }
    if (a.contains("grid_density")) {
      cfg.analysis.grid_density = int_at(a, "grid_density", ctx + ".analysis");
      if (cfg.analysis.grid_density < 2) throw Error("config.analysis.grid_density: must be >= 2");
    }
    if (a.contains("upsample_factor")) {
      cfg.analysis.upsample_factor = int_at(a, "upsample_factor", ctx + ".analysis");
      if (cfg.analysis.upsample_factor < 1)
        throw Error("config.analysis.upsample_factor: must be >= 1");
    }
    if (a.contains("bins")) {
      const njson& b = a["bins"];
      check_keys(b, {"re_min", "re_max", "im_min", "im_max", "n_re", "n_im", "artifact_floor"},
                 ctx + ".analysis.bins");
      if (b.contains("re_min")) cfg.analysis.bins.re_min = number_at(b, "re_min", ctx);
      if (b.contains("re_max")) cfg.analysis.bins.re_max = number_at(b, "re_max", ctx);
      if (b.contains("im_min")) cfg.analysis.bins.im_min = number_at(b, "im_min", ctx);
      if (b.contains("im_max")) cfg.analysis.bins.im_max = number_at(b, "im_max", ctx);
      if (b.contains("n_re")) cfg.analysis.bins.n_re = int_at(b, "n_re", ctx);
      if (b.contains("n_im")) cfg.analysis.bins.n_im = int_at(b, "n_im", ctx);
      if (b.contains("artifact_floor"))
        cfg.analysis.bins.artifact_floor = number_at(b, "artifact_floor", ctx);
      if (cfg.analysis.bins.n_re <= 0 || cfg.analysis.bins.n_im <= 0)
        throw Error("config.analysis.bins: bin counts must be positive");
    }
    if (a.contains("distances_km")) {
      const njson& d = a["distances_km"];
      if (!d.is_array()) throw Error("config.analysis.distances_km: expected an array");
      for (const njson& v : d)
        cfg.analysis.distances_km.push_back(as_number(v, ctx + ".analysis.distances_km"));
    }
  }
  if (j.contains("out_dir")) {
    const njson& o = j["out_dir"];
    if (!o.is_string()) throw Error("config.out_dir: expected a string");
    cfg.out_dir = o.get<std::string>();
    if (cfg.out_dir.empty()) throw Error("config.out_dir: must not be empty");
  }
  if (cfg.link.ase) cfg.link.ase->seed = cfg.seed;
  return cfg;
}

ExperimentConfig read_config(const std::filesystem::path& file) { return parse_config(slurp(file)); }

std::string config_hash(const std::string& json_text) {
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a 64-bit offset basis
  for (unsigned char c : json_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

// ---------------------------------------------------------------------------
// Run plumbing.
// ---------------------------------------------------------------------------

void write_manifest_atomic(const RunManifest& manifest, const std::filesystem::path& file) {
  njson j;
  j["config_hash"] = manifest.config_hash;
  j["tool_version"] = manifest.tool_version;
  njson stages = njson::array();
  for (const StageRecord& s : manifest.stages) {
    njson e;
    e["name"] = s.name;
    e["files"] = s.files;
    e["wall_ms"] = s.wall_ms;
    stages.push_back(std::move(e));
  }
  j["stages"] = std::move(stages);
  std::filesystem::path tmp = file;
  tmp += ".tmp";
  spew(tmp, j.dump(2) + "\n");
  std::filesystem::rename(tmp, file);
}

std::filesystem::path make_versioned_dir(const std::filesystem::path& base) {
  std::filesystem::create_directories(base);
  for (int i = 0; i < 100000; ++i) {
    std::ostringstream name;
    name << "run-" << std::setw(3) << std::setfill('0') << i;
    const std::filesystem::path dir = base / name.str();
    if (std::filesystem::create_directory(dir)) return dir;  // false = already exists
  }
  throw Error("make_versioned_dir: exhausted run indices under " + base.string());
}

}  // namespace fgnls
