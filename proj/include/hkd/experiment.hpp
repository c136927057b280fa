#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hkd/data.hpp"
#include "hkd/distill.hpp"

namespace hkd::experiment {

inline constexpr const char* kToolVersion = "0.1.0";

// Full experiment description: distillation config plus dataset spec. The
// hash covers every field that affects results; two manifests with equal
// hashes produce identical metrics logs.
struct ExperimentManifest {
  distill::DistillConfig config;
  data::DatasetSpec dataset;
  std::string teacher_checkpoint;

  static ExperimentManifest from_json(const nlohmann::json& j);
  static ExperimentManifest from_file(const std::string& path);
  nlohmann::json to_json() const;  // fully resolved, defaults filled in
  uint64_t hash() const;
  std::string hash_hex() const;

  // Dotted-path override ("distill.beta", "dataset.num_classes", ...) with a
  // JSON-encoded value. Flags go through here, taking precedence over files.
  void override_field(const std::string& dotted_key, const std::string& value);
};

struct RunPaths {
  std::string dir;
  std::string manifest;     // dir/manifest.json
  std::string metrics;      // dir/metrics.jsonl
  std::string checkpoints;  // dir/checkpoints
  std::string tables;       // dir/tables
};

// Creates <out_root>/<command>-<timestamp>[-n]/ with the standard layout.
RunPaths prepare_run_dir(const std::string& out_root,
                         const std::string& command);

void write_manifest_file(const ExperimentManifest& manifest,
                         const std::string& command, const std::string& path);

// Each command writes manifest, metrics, checkpoints and tables into its run
// directory and returns a machine-readable summary.
nlohmann::json run_pretrain_teacher(const ExperimentManifest& manifest,
                                    const RunPaths& paths, bool verbose);
nlohmann::json run_distill(const ExperimentManifest& manifest,
                           const RunPaths& paths, bool verbose);

// Re-evaluates a finished run from only its directory contents.
nlohmann::json run_evaluate(const std::string& run_dir,
                            const std::string& checkpoint_override);

nlohmann::json run_transfer(const std::string& backbone_checkpoint,
                            const data::DatasetSpec& target_spec,
                            uint64_t seed, const RunPaths& paths);

nlohmann::json run_heatmap(const std::string& backbone_checkpoint,
                           const ExperimentManifest& manifest,
                           const RunPaths& paths);

// The ablation grid over graph construction, encoder and training strategy.
nlohmann::json run_ablate(const ExperimentManifest& manifest,
                          const std::string& axis, const RunPaths& paths,
                          bool verbose);

nlohmann::json run_sweep(const ExperimentManifest& manifest,
                         const std::string& param,
                         const std::vector<std::string>& values,
                         const RunPaths& paths, bool verbose);

// Reproduces the paper-style ARI column from an accuracy table
// (rows = methods, columns = teacher/student pairs).
struct AriRow {
  std::string method;
  double ari_percent;
};

std::vector<AriRow> ari_from_table(const std::string& csv_path,
                                   const std::string& hkd_row = "HKD+KD",
                                   const std::string& student_row = "Student");

std::string ari_rows_to_csv(const std::vector<AriRow>& rows);

nlohmann::json list_archs_json();

// Minimal line chart used by sweep summaries.
void write_svg_line_chart(const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::string& path);

}  // namespace hkd::experiment
