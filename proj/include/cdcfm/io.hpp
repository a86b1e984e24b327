// Copyright 2026 The cdcfm Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cdcfm/analysis.hpp"
#include "cdcfm/error.hpp"
#include "cdcfm/rten.hpp"
#include "cdcfm/shapes.hpp"
#include "cdcfm/train.hpp"

namespace cdcfm {

inline constexpr const char* kManifestName = "manifest.csv";

struct ManifestRow {
  std::string path;  // relative to the manifest's directory
  Condition label;   // empty field: unlabeled
};

inline void write_manifest(const std::filesystem::path& path, std::span<const ManifestRow> rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "path,label\n";
  for (const ManifestRow& r : rows) {
    out << r.path << ',';
    if (r.label) out << *r.label;
    out << '\n';
  }
}

inline std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || (line != "path,label" && line != "path,label\r")) {
    throw FormatError(path.string() + ": expected header 'path,label'");
  }
  std::vector<ManifestRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": expected path,label");
    }
    ManifestRow row{line.substr(0, comma), std::nullopt};
    const std::string label = line.substr(comma + 1);
    if (!label.empty()) {
      try {
        std::size_t used = 0;
        row.label = std::stoi(label, &used);
        if (used != label.size()) throw std::invalid_argument(label);
      } catch (const std::exception&) {
        throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": bad label '" + label + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Writes the shapes dataset as one RTEN file per image plus the manifest.
/// `stages` is the cascade depth the size must support.
inline std::vector<ManifestRow> synth(const std::filesystem::path& dir, const ShapesSpec& spec, int stages) {
  if (stages < 1) throw ConfigError("stages must be >= 1");
  const int block = 1 << (stages - 1);
  if (spec.size < 4 || spec.size % block != 0) {
    throw ConfigError("image size " + std::to_string(spec.size) + " is not a multiple of " + std::to_string(block));
  }
  if (spec.num_classes < 1 || spec.per_class < 0 || spec.channels < 1) throw ConfigError("bad synth arguments");
  std::filesystem::create_directories(dir);
  std::vector<ManifestRow> rows;
  ShapesSpec s = spec;
  s.level = stages;
  const std::vector<LabeledImage> data = generate_shapes(s);
  for (std::size_t i = 0; i < data.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "img_%05zu.rten", i);
    write_image(dir / name, data[i].image);
    rows.push_back({name, data[i].label});
  }
  write_manifest(dir / kManifestName, rows);
  return rows;
}

/// Loads every manifest entry of `dir` as an image tagged with `level`.
inline std::vector<LabeledImage> load_dataset(const std::filesystem::path& dir, int level) {
  std::vector<LabeledImage> out;
  for (const ManifestRow& row : read_manifest(dir / kManifestName)) {
    out.push_back({read_image(dir / row.path, level), row.label});
  }
  return out;
}

inline std::vector<Image> images_of(std::span<const LabeledImage> data) {
  std::vector<Image> out;
  out.reserve(data.size());
  for (const LabeledImage& d : data) out.push_back(d.image);
  return out;
}

// ---------------------------------------------------------------------------
// CSV reports. Column sets are part of the public contract.

namespace detail {

inline std::ofstream open_csv(const std::filesystem::path& path, const char* header) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << header << '\n';
  return out;
}

}  // namespace detail

/// step,loss
inline void write_loss_csv(const std::filesystem::path& path, std::span<const double> losses) {
  auto out = detail::open_csv(path, "step,loss");
  for (std::size_t i = 0; i < losses.size(); ++i) out << (i + 1) << ',' << losses[i] << '\n';
}

/// metric,stage,value,standard_error. Stage 0 marks whole-model rows.
inline void write_costs_csv(const std::filesystem::path& path, const CostReport& r, const CostComparison& check) {
  auto out = detail::open_csv(path, "metric,stage,value,standard_error");
  auto row = [&](const char* metric, int stage, double value, double se) {
    out << metric << ',' << stage << ',' << value << ',' << se << '\n';
  };
  row("L_A", 0, r.L_A_hat, r.L_A_se);
  row("L_B", 0, r.L_B_hat, r.L_B_se);
  row("margin", 0, check.margin, check.combined_se);
  row("closed_form_gap", 0, check.closed_form_gap, 0.0);
  row("load_A", 0, r.load_A_hat, r.L_A_se * static_cast<double>(r.dims.back()));
  row("load_B", 0, r.load_B_hat, 0.0);
  row("noise_load_closed_A", 0, r.noise_load_closed_A, 0.0);
  row("noise_load_closed_B", 0, r.noise_load_closed_B, 0.0);
  row("noise_load_mc_A", 0, r.noise_load_mc_A, r.noise_load_mc_A_se);
  row("noise_load_mc_B", 0, r.noise_load_mc_B, r.noise_load_mc_B_se);
  row("noise_load_true_A", 0, r.noise_load_true_A, 0.0);
  row("noise_load_true_B", 0, r.noise_load_true_B, 0.0);
  for (int k = 1; k <= r.stages; ++k) {
    const auto i = static_cast<std::size_t>(k - 1);
    row("L_k", k, r.L_k_hat[i], r.L_k_se[i]);
    row("L_k_decomposed", k, r.decomposed_L_k[i], 0.0);
    row("residual_energy", k, r.residual_energy[i], 0.0);
    row("signal_energy", k, r.signal_energy[i], r.signal_energy_se[i]);
    row("dim", k, static_cast<double>(r.dims[i]), 0.0);
    row("dim_beta", k, static_cast<double>(r.dims_beta[i]), 0.0);
    row("sigma", k, r.sigmas[i], 0.0);
  }
}

/// mode,stage,resolution,nfe,seconds. Cascade rows per stage plus a total
/// row (stage 0); the single-stage baseline is one row.
inline void write_timing_csv(const std::filesystem::path& path, const TimingReport& t) {
  auto out = detail::open_csv(path, "mode,stage,resolution,nfe,seconds");
  int total_nfe = 0;
  for (std::size_t k = 0; k < t.per_stage_seconds.size(); ++k) {
    out << "cascade," << (k + 1) << ',' << t.resolutions[k] << ',' << t.nfe[k] << ',' << t.per_stage_seconds[k]
        << '\n';
    total_nfe += t.nfe[k];
  }
  out << "cascade_total,0," << t.resolutions.back() << ',' << total_nfe << ',' << t.total_seconds << '\n';
  out << "single_stage,0," << t.resolutions.back() << ',' << t.single_stage_nfe << ',' << t.single_stage_seconds
      << '\n';
}

/// stage,resolution,sliced_wasserstein
inline void write_marginals_csv(const std::filesystem::path& path, std::span<const double> distances,
                                std::span<const int> resolutions) {
  auto out = detail::open_csv(path, "stage,resolution,sliced_wasserstein");
  for (std::size_t k = 0; k < distances.size(); ++k) {
    out << (k + 1) << ',' << resolutions[k] << ',' << distances[k] << '\n';
  }
}

/// gamma,sliced_wasserstein,inference_seconds
inline void write_gamma_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
  auto out = detail::open_csv(path, "gamma,sliced_wasserstein,inference_seconds");
  for (const SweepRow& r : rows) out << r.gamma << ',' << r.sliced_wasserstein << ',' << r.inference_seconds << '\n';
}

}  // namespace cdcfm
