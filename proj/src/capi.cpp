#include "hkd/hkd.h"

#include <cstring>
#include <sstream>
#include <string>

#include "hkd/experiment.hpp"

using hkd::experiment::ExperimentManifest;

struct hkd_manifest {
  ExperimentManifest m;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Exceptions never cross the C boundary; they become status codes here.
template <typename Fn>
hkd_status guarded(Fn&& fn) {
  try {
    fn();
    return HKD_OK;
  } catch (const hkd::InvalidArgument& e) {
    g_last_error = e.what();
    return HKD_ERR_INVALID_ARGUMENT;
  } catch (const hkd::ConfigError& e) {
    g_last_error = e.what();
    return HKD_ERR_CONFIG;
  } catch (const hkd::DataError& e) {
    g_last_error = e.what();
    return HKD_ERR_DATA;
  } catch (const hkd::NumericalError& e) {
    g_last_error = e.what();
    return HKD_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return HKD_ERR_UNKNOWN;
  } catch (...) {
    g_last_error = "unknown error";
    return HKD_ERR_UNKNOWN;
  }
}

hkd_status require_arg(bool ok, const char* msg) {
  if (ok) return HKD_OK;
  g_last_error = msg;
  return HKD_ERR_INVALID_ARGUMENT;
}

}  // namespace

extern "C" {

const char* hkd_version(void) { return hkd::experiment::kToolVersion; }

const char* hkd_last_error(void) { return g_last_error.c_str(); }

void hkd_string_free(char* s) { delete[] s; }

hkd_status hkd_manifest_create(const char* json_text, hkd_manifest** out) {
  if (auto s = require_arg(json_text && out, "null argument")) return s;
  return guarded([&] {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
      throw hkd::ConfigError(std::string("manifest JSON parse error: ") +
                             e.what());
    }
    *out = new hkd_manifest{ExperimentManifest::from_json(j)};
  });
}

hkd_status hkd_manifest_load_file(const char* path, hkd_manifest** out) {
  if (auto s = require_arg(path && out, "null argument")) return s;
  return guarded([&] {
    *out = new hkd_manifest{ExperimentManifest::from_file(path)};
  });
}

hkd_status hkd_manifest_override(hkd_manifest* m, const char* dotted_key,
                                 const char* json_value) {
  if (auto s = require_arg(m && dotted_key && json_value, "null argument"))
    return s;
  return guarded([&] { m->m.override_field(dotted_key, json_value); });
}

hkd_status hkd_manifest_hash(const hkd_manifest* m, char buf[17]) {
  if (auto s = require_arg(m && buf, "null argument")) return s;
  return guarded([&] {
    std::string hex = m->m.hash_hex();
    std::memcpy(buf, hex.c_str(), 17);
  });
}

hkd_status hkd_manifest_dump(const hkd_manifest* m, char** json_out) {
  if (auto s = require_arg(m && json_out, "null argument")) return s;
  return guarded([&] { *json_out = dup_string(m->m.to_json().dump(2)); });
}

void hkd_manifest_destroy(hkd_manifest* m) { delete m; }

hkd_status hkd_run_pretrain_teacher(const hkd_manifest* m, const char* out_root,
                                    int verbose, char** summary_json) {
  if (auto s = require_arg(m && out_root && summary_json, "null argument"))
    return s;
  return guarded([&] {
    auto paths = hkd::experiment::prepare_run_dir(out_root, "pretrain-teacher");
    auto summary =
        hkd::experiment::run_pretrain_teacher(m->m, paths, verbose != 0);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_distill(const hkd_manifest* m, const char* out_root,
                           int verbose, char** summary_json) {
  if (auto s = require_arg(m && out_root && summary_json, "null argument"))
    return s;
  return guarded([&] {
    auto paths = hkd::experiment::prepare_run_dir(out_root, "distill");
    auto summary = hkd::experiment::run_distill(m->m, paths, verbose != 0);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_evaluate(const char* run_dir, const char* checkpoint,
                            char** summary_json) {
  if (auto s = require_arg(run_dir && summary_json, "null argument")) return s;
  return guarded([&] {
    auto summary = hkd::experiment::run_evaluate(
        run_dir, checkpoint ? checkpoint : "");
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_transfer(const hkd_manifest* m, const char* checkpoint,
                            const char* out_root, char** summary_json) {
  if (auto s =
          require_arg(m && checkpoint && out_root && summary_json, "null argument"))
    return s;
  return guarded([&] {
    auto paths = hkd::experiment::prepare_run_dir(out_root, "transfer");
    hkd::experiment::write_manifest_file(m->m, "transfer", paths.manifest);
    auto summary = hkd::experiment::run_transfer(checkpoint, m->m.dataset,
                                                 m->m.config.seed, paths);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_heatmap(const hkd_manifest* m, const char* checkpoint,
                           const char* out_root, char** summary_json) {
  if (auto s =
          require_arg(m && checkpoint && out_root && summary_json, "null argument"))
    return s;
  return guarded([&] {
    auto paths = hkd::experiment::prepare_run_dir(out_root, "heatmap");
    hkd::experiment::write_manifest_file(m->m, "heatmap", paths.manifest);
    auto summary = hkd::experiment::run_heatmap(checkpoint, m->m, paths);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_ablate(const hkd_manifest* m, const char* axis,
                          const char* out_root, int verbose,
                          char** summary_json) {
  if (auto s = require_arg(m && axis && out_root && summary_json, "null argument"))
    return s;
  return guarded([&] {
    auto paths = hkd::experiment::prepare_run_dir(out_root, "ablate");
    auto summary = hkd::experiment::run_ablate(m->m, axis, paths, verbose != 0);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_run_sweep(const hkd_manifest* m, const char* param,
                         const char* values_csv, const char* out_root,
                         int verbose, char** summary_json) {
  if (auto s = require_arg(m && param && values_csv && out_root && summary_json,
                           "null argument"))
    return s;
  return guarded([&] {
    std::vector<std::string> values;
    std::stringstream ss(values_csv);
    std::string v;
    while (std::getline(ss, v, ',')) {
      if (!v.empty()) values.push_back(v);
    }
    auto paths = hkd::experiment::prepare_run_dir(out_root, "sweep");
    auto summary =
        hkd::experiment::run_sweep(m->m, param, values, paths, verbose != 0);
    *summary_json = dup_string(summary.dump(2));
  });
}

hkd_status hkd_ari_table(const char* csv_path, const char* hkd_row,
                         const char* student_row, char** csv_out) {
  if (auto s = require_arg(csv_path && csv_out, "null argument")) return s;
  return guarded([&] {
    auto rows = hkd::experiment::ari_from_table(
        csv_path, hkd_row ? hkd_row : "HKD+KD",
        student_row ? student_row : "Student");
    *csv_out = dup_string(hkd::experiment::ari_rows_to_csv(rows));
  });
}

hkd_status hkd_list_archs(char** json_out) {
  if (auto s = require_arg(json_out != nullptr, "null argument")) return s;
  return guarded([&] {
    *json_out = dup_string(hkd::experiment::list_archs_json().dump(2));
  });
}

}  // extern "C"
