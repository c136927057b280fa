// Experiment front-end. Talks to the library exclusively through the C API
// in hkd/hkd.h; config parsing and flag handling live here.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hkd/hkd.h"

using json = nlohmann::json;

namespace {

// Exit codes: 0 success, 1 config error, 2 data error, 3 numerical failure.
int exit_code_for(hkd_status s) {
  switch (s) {
    case HKD_OK: return 0;
    case HKD_ERR_INVALID_ARGUMENT:
    case HKD_ERR_CONFIG: return 1;
    case HKD_ERR_DATA: return 2;
    case HKD_ERR_NUMERICAL: return 3;
    default: return 1;
  }
}

int fail(hkd_status s) {
  std::cerr << "error: " << hkd_last_error() << "\n";
  return exit_code_for(s);
}

struct ManifestHandle {
  hkd_manifest* m = nullptr;
  ~ManifestHandle() {
    if (m) hkd_manifest_destroy(m);
  }
};

struct COutString {
  char* s = nullptr;
  ~COutString() {
    if (s) hkd_string_free(s);
  }
};

// Flag overrides, applied on top of the config file; the flag always wins and
// the replacement is logged.
struct Override {
  std::string key;
  std::string value;
};

struct CommonOpts {
  std::string config_path;
  std::string out_root;
  std::vector<Override> overrides;
  bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--out", o.out_root,
                  "output root (defaults to $HKD_OUTPUT_ROOT or ./runs)");
  cmd->add_flag("--verbose,-v", o.verbose, "per-epoch progress on stderr");
}

void add_override_flag(CLI::App* cmd, CommonOpts& o, const std::string& flag,
                       const std::string& key) {
  cmd->add_option_function<std::string>(
      flag,
      [&o, key](const std::string& v) { o.overrides.push_back({key, v}); },
      "override " + key);
}

std::string resolve_out_root(const CommonOpts& o) {
  if (!o.out_root.empty()) return o.out_root;
  if (const char* env = std::getenv("HKD_OUTPUT_ROOT")) return env;
  return "runs";
}

int load_manifest(const CommonOpts& o, ManifestHandle& h) {
  hkd_status s = o.config_path.empty()
                     ? hkd_manifest_create("{}", &h.m)
                     : hkd_manifest_load_file(o.config_path.c_str(), &h.m);
  if (s != HKD_OK) return fail(s);
  for (const Override& ov : o.overrides) {
    if (!o.config_path.empty())
      std::cerr << "[hkd] flag override: " << ov.key << " = " << ov.value
                << "\n";
    s = hkd_manifest_override(h.m, ov.key.c_str(), ov.value.c_str());
    if (s != HKD_OK) return fail(s);
  }
  return 0;
}

int print_summary(const char* summary) {
  json j = json::parse(summary);
  std::cout << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"holistic knowledge distillation toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(hkd_version()));

  CommonOpts pretrain_o, distill_o, transfer_o, heatmap_o, ablate_o, sweep_o;

  auto* pretrain = app.add_subcommand("pretrain-teacher",
                                      "train a teacher with plain CE");
  add_common(pretrain, pretrain_o);
  add_override_flag(pretrain, pretrain_o, "--arch", "distill.teacher_arch");
  add_override_flag(pretrain, pretrain_o, "--epochs", "distill.schedule.epochs");
  add_override_flag(pretrain, pretrain_o, "--lr", "distill.schedule.base_lr");
  add_override_flag(pretrain, pretrain_o, "--seed", "seed");
  add_override_flag(pretrain, pretrain_o, "--dataset", "dataset.name");

  auto* dist = app.add_subcommand("distill", "distill a student from a teacher");
  add_common(dist, distill_o);
  add_override_flag(dist, distill_o, "--teacher", "teacher_checkpoint");
  add_override_flag(dist, distill_o, "--teacher-arch", "distill.teacher_arch");
  add_override_flag(dist, distill_o, "--student-arch", "distill.student_arch");
  add_override_flag(dist, distill_o, "--beta", "distill.beta");
  add_override_flag(dist, distill_o, "--lambda", "distill.lambda");
  add_override_flag(dist, distill_o, "--k", "distill.k");
  add_override_flag(dist, distill_o, "--hops", "distill.hops");
  add_override_flag(dist, distill_o, "--epochs", "distill.schedule.epochs");
  add_override_flag(dist, distill_o, "--lr", "distill.schedule.base_lr");
  add_override_flag(dist, distill_o, "--batch-size", "distill.batch_size");
  add_override_flag(dist, distill_o, "--graph-mode", "distill.graph_mode");
  add_override_flag(dist, distill_o, "--encoder-mode", "distill.encoder_mode");
  add_override_flag(dist, distill_o, "--objective", "distill.objective");
  add_override_flag(dist, distill_o, "--tau-c", "distill.tau_c");
  add_override_flag(dist, distill_o, "--tau-kd", "distill.tau_kd");
  add_override_flag(dist, distill_o, "--n-negatives", "distill.n_negatives");
  add_override_flag(dist, distill_o, "--embed-dim", "distill.embed_dim");
  add_override_flag(dist, distill_o, "--seed", "seed");

  std::string eval_run_dir, eval_checkpoint;
  auto* evaluate = app.add_subcommand(
      "evaluate", "re-evaluate a finished run from its directory");
  evaluate->add_option("--run-dir", eval_run_dir, "run directory")->required();
  evaluate->add_option("--checkpoint", eval_checkpoint,
                       "backbone checkpoint (defaults to the run's final one)");

  std::string transfer_ckpt;
  auto* transfer = app.add_subcommand(
      "transfer", "linear-probe a frozen backbone on a target dataset");
  add_common(transfer, transfer_o);
  transfer->add_option("--checkpoint", transfer_ckpt, "backbone checkpoint")
      ->required();
  add_override_flag(transfer, transfer_o, "--target-dataset", "dataset.name");
  add_override_flag(transfer, transfer_o, "--seed", "seed");

  std::string heatmap_ckpt;
  auto* heatmap = app.add_subcommand(
      "heatmap", "prediction-similarity heatmap over a 32-instance batch");
  add_common(heatmap, heatmap_o);
  heatmap->add_option("--checkpoint", heatmap_ckpt, "backbone checkpoint")
      ->required();

  std::string ari_table_path, ari_hkd_row = "HKD+KD", ari_student_row = "Student";
  auto* ari = app.add_subcommand(
      "ari", "average relative improvement column from an accuracy table");
  ari->add_option("--table", ari_table_path, "accuracy csv")->required();
  ari->add_option("--hkd-row", ari_hkd_row, "row treated as the HKD method");
  ari->add_option("--student-row", ari_student_row, "plain student row");

  std::string ablate_axis = "all";
  auto* ablate =
      app.add_subcommand("ablate", "graph/encoder/objective ablation grid");
  add_common(ablate, ablate_o);
  ablate->add_option("--axis", ablate_axis, "graph | encoder | objective | all");
  add_override_flag(ablate, ablate_o, "--teacher", "teacher_checkpoint");
  add_override_flag(ablate, ablate_o, "--epochs", "distill.schedule.epochs");
  add_override_flag(ablate, ablate_o, "--seed", "seed");

  std::string sweep_param, sweep_values;
  auto* sweep = app.add_subcommand("sweep", "sweep one distill parameter");
  add_common(sweep, sweep_o);
  sweep->add_option("--param", sweep_param, "config field under distill.*")
      ->required();
  sweep->add_option("--values", sweep_values, "comma-separated values")
      ->required();
  add_override_flag(sweep, sweep_o, "--teacher", "teacher_checkpoint");
  add_override_flag(sweep, sweep_o, "--seed", "seed");

  auto* list_archs =
      app.add_subcommand("list-archs", "print the architecture registry");

  CLI11_PARSE(app, argc, argv);

  if (pretrain->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(pretrain_o, h)) return rc;
    COutString out;
    hkd_status s = hkd_run_pretrain_teacher(
        h.m, resolve_out_root(pretrain_o).c_str(), pretrain_o.verbose, &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (dist->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(distill_o, h)) return rc;
    COutString out;
    hkd_status s = hkd_run_distill(h.m, resolve_out_root(distill_o).c_str(),
                                   distill_o.verbose, &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (evaluate->parsed()) {
    COutString out;
    hkd_status s = hkd_run_evaluate(
        eval_run_dir.c_str(),
        eval_checkpoint.empty() ? nullptr : eval_checkpoint.c_str(), &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (transfer->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(transfer_o, h)) return rc;
    COutString out;
    hkd_status s =
        hkd_run_transfer(h.m, transfer_ckpt.c_str(),
                         resolve_out_root(transfer_o).c_str(), &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (heatmap->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(heatmap_o, h)) return rc;
    COutString out;
    hkd_status s = hkd_run_heatmap(h.m, heatmap_ckpt.c_str(),
                                   resolve_out_root(heatmap_o).c_str(), &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (ari->parsed()) {
    COutString out;
    hkd_status s = hkd_ari_table(ari_table_path.c_str(), ari_hkd_row.c_str(),
                                 ari_student_row.c_str(), &out.s);
    if (s != HKD_OK) return fail(s);
    std::cout << out.s;
    return 0;
  }
  if (ablate->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(ablate_o, h)) return rc;
    COutString out;
    hkd_status s =
        hkd_run_ablate(h.m, ablate_axis.c_str(),
                       resolve_out_root(ablate_o).c_str(), ablate_o.verbose,
                       &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (sweep->parsed()) {
    ManifestHandle h;
    if (int rc = load_manifest(sweep_o, h)) return rc;
    COutString out;
    hkd_status s = hkd_run_sweep(h.m, sweep_param.c_str(), sweep_values.c_str(),
                                 resolve_out_root(sweep_o).c_str(),
                                 sweep_o.verbose, &out.s);
    if (s != HKD_OK) return fail(s);
    return print_summary(out.s);
  }
  if (list_archs->parsed()) {
    COutString out;
    hkd_status s = hkd_list_archs(&out.s);
    if (s != HKD_OK) return fail(s);
    std::cout << out.s << "\n";
    return 0;
  }
  return 1;
}
