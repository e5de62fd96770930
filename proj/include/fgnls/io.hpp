// SPDX-License-Identifier: Apache-2.0
//
// File formats and run plumbing: plot-ready CSV, compact binary field dumps
// with JSON sidecars, JSON round trips for spectra / construction state /
// scattering estimates, experiment configuration parsing with strict
// validation, and versioned, manifest-tracked run directories.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fgnls/fgs.hpp"
#include "fgnls/field.hpp"
#include "fgnls/nft.hpp"
#include "fgnls/nlse.hpp"

namespace fgnls {

inline constexpr const char* kToolVersion = "fgnls 0.1.0";

// ---------------------------------------------------------------------------
// Field grids.
// ---------------------------------------------------------------------------
// CSV columns t, z, re, im; one row per sample, distance-major ordering.
void write_field_csv(const FieldGrid& grid, const std::filesystem::path& file);

// Raw little-endian float64 pairs (re, im), distance-major, plus a JSON
// sidecar {"n_t", "n_z", "dt_ns", "t_start_ns", "z_km": [...], "units"}.
// For dimensionless grids the *_ns / *_km fields carry the soliton-unit
// numbers and "units" says so.
void write_field_binary(const FieldGrid& grid, const std::filesystem::path& data_file,
                        const std::filesystem::path& sidecar_file);
FieldGrid read_field_binary(const std::filesystem::path& data_file,
                            const std::filesystem::path& sidecar_file);

// ---------------------------------------------------------------------------
// Spectra and construction state.
// ---------------------------------------------------------------------------
// {"points": [[re, im], ...]}
MainSpectrum read_spectrum_json(const std::filesystem::path& file);
void write_spectrum_json(const MainSpectrum& spectrum, const std::filesystem::path& file);

// Complete construction output: enough state to rebuild the evaluators
// exactly (no quadrature on reload).
struct ConstructSummary {
  ThetaParameters params;
  DimensionalScales scales;
  double residual = -1.0;  // measured equation defect; -1 when skipped
};
void write_construct_json(const ConstructSummary& summary, const std::filesystem::path& file);
ConstructSummary read_construct_json(const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Scattering outputs.
// ---------------------------------------------------------------------------
void write_estimate_json(const SpectrumEstimate& estimate, const std::filesystem::path& file);
SpectrumEstimate read_estimate_json(const std::filesystem::path& file);

// re_center, im_center, count for every bin (heatmap-ready).
void write_histogram_csv(const SpectrumHistogram& histogram, const std::filesystem::path& file);

// ---------------------------------------------------------------------------
// Experiment configuration (strictly validated JSON; unknown keys rejected;
// field names carry explicit units).
// ---------------------------------------------------------------------------
struct GridConfig {
  int samples_per_period = 256;
  int periods = 1;
};

struct AnalysisConfig {
  SearchBox box{-2.5, 2.5, 3.0, 6.0};
  int grid_density = 40;
  int upsample_factor = 4;
  HistogramSpec bins;
  std::vector<double> distances_km;  // NFT checkpoints; empty = input + final
};

struct ExperimentConfig {
  MainSpectrum spectrum;
  double target_period_ns = 1.0;
  LinkModel link;  // span parameters, span count, gain, filter, ASE
  std::uint64_t seed = 1;
  GridConfig grid;
  std::optional<double> z_offset_km;  // construction window start; default: quarter
                                      // evolution period before compression
  AnalysisConfig analysis;
  std::string out_dir = "runs";
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig read_config(const std::filesystem::path& file);

// FNV-1a (64-bit, hex) of the raw config text: cheap, deterministic identity.
std::string config_hash(const std::string& json_text);

// ---------------------------------------------------------------------------
// Run plumbing.
// ---------------------------------------------------------------------------
struct StageRecord {
  std::string name;
  std::vector<std::string> files;  // outputs, relative to the run directory
  double wall_ms = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::vector<StageRecord> stages;
};

// Written to a temporary then renamed, so readers never see a torn file.
void write_manifest_atomic(const RunManifest& manifest, const std::filesystem::path& file);

// Creates base/run-NNN with the first unused index: reruns never overwrite.
std::filesystem::path make_versioned_dir(const std::filesystem::path& base);

}  // namespace fgnls
