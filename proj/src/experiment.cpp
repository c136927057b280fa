#include "hkd/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "hkd/eval.hpp"
#include "hkd/graph.hpp"
#include "hkd/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hkd::experiment {

// ---------------------------------------------------------------------------
// Manifest parsing
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& j, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw ConfigError("config: '" + where + "' must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("config: unknown field '" + where + "." + key + "'");
  }
}

template <typename T>
T field(const json& j, const std::string& where, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: field '" + where + "." + key +
                      "' has the wrong type");
  }
}

data::DatasetSpec dataset_from_json(const json& j) {
  check_keys(j, "dataset",
             {"name", "num_classes", "image_size", "channels",
              "train_per_class", "test_per_class", "noise_sigma",
              "pattern_delta", "nuisance_dims", "nuisance_amp", "source_dir",
              "source_format", "normalize", "channel_mean", "channel_stddev"});
  data::DatasetSpec s;
  s.name = field<std::string>(j, "dataset", "name", s.name);
  s.num_classes = field<int>(j, "dataset", "num_classes", s.num_classes);
  s.image_size = field<int>(j, "dataset", "image_size", s.image_size);
  s.channels = field<int>(j, "dataset", "channels", s.channels);
  s.train_per_class = field<int>(j, "dataset", "train_per_class", s.train_per_class);
  s.test_per_class = field<int>(j, "dataset", "test_per_class", s.test_per_class);
  s.noise_sigma = field<double>(j, "dataset", "noise_sigma", s.noise_sigma);
  s.pattern_delta = field<double>(j, "dataset", "pattern_delta", s.pattern_delta);
  s.nuisance_dims = field<int>(j, "dataset", "nuisance_dims", s.nuisance_dims);
  s.nuisance_amp = field<double>(j, "dataset", "nuisance_amp", s.nuisance_amp);
  s.source_dir = field<std::string>(j, "dataset", "source_dir", s.source_dir);
  s.source_format = field<std::string>(j, "dataset", "source_format", s.source_format);
  s.normalize = field<bool>(j, "dataset", "normalize", s.normalize);
  if (j.contains("channel_mean"))
    s.channel_mean = j.at("channel_mean").get<std::vector<double>>();
  if (j.contains("channel_stddev"))
    s.channel_stddev = j.at("channel_stddev").get<std::vector<double>>();
  return s;
}

json dataset_to_json(const data::DatasetSpec& s) {
  json j = {{"name", s.name},
            {"num_classes", s.num_classes},
            {"image_size", s.image_size},
            {"channels", s.channels},
            {"train_per_class", s.train_per_class},
            {"test_per_class", s.test_per_class},
            {"noise_sigma", s.noise_sigma},
            {"pattern_delta", s.pattern_delta},
            {"nuisance_dims", s.nuisance_dims},
            {"nuisance_amp", s.nuisance_amp},
            {"source_dir", s.source_dir},
            {"source_format", s.source_format},
            {"normalize", s.normalize}};
  if (s.channel_mean) j["channel_mean"] = *s.channel_mean;
  if (s.channel_stddev) j["channel_stddev"] = *s.channel_stddev;
  return j;
}

distill::OptimizerSchedule schedule_from_json(const json& j) {
  check_keys(j, "distill.schedule",
             {"base_lr", "momentum", "weight_decay", "epochs", "decay_epochs",
              "decay_factor"});
  distill::OptimizerSchedule s;
  s.base_lr = field<double>(j, "distill.schedule", "base_lr", s.base_lr);
  s.momentum = field<double>(j, "distill.schedule", "momentum", s.momentum);
  s.weight_decay = field<double>(j, "distill.schedule", "weight_decay", s.weight_decay);
  s.epochs = field<int>(j, "distill.schedule", "epochs", s.epochs);
  s.decay_factor = field<double>(j, "distill.schedule", "decay_factor", s.decay_factor);
  if (j.contains("decay_epochs"))
    s.decay_epochs = j.at("decay_epochs").get<std::vector<int>>();
  return s;
}

json schedule_to_json(const distill::OptimizerSchedule& s) {
  return {{"base_lr", s.base_lr},
          {"momentum", s.momentum},
          {"weight_decay", s.weight_decay},
          {"epochs", s.epochs},
          {"decay_epochs", s.decay_epochs},
          {"decay_factor", s.decay_factor}};
}

distill::DistillConfig config_from_json(const json& j, uint64_t seed) {
  check_keys(j, "distill",
             {"teacher_arch", "student_arch", "k", "hops", "embed_dim", "beta",
              "lambda", "tau_kd", "tau_c", "bank_momentum", "n_negatives",
              "batch_size", "graph_mode", "encoder_mode", "objective",
              "schedule"});
  distill::DistillConfig c;
  c.teacher_arch = field<std::string>(j, "distill", "teacher_arch", c.teacher_arch);
  c.student_arch = field<std::string>(j, "distill", "student_arch", c.student_arch);
  c.k = field<int>(j, "distill", "k", c.k);
  c.hops = field<int>(j, "distill", "hops", c.hops);
  c.embed_dim = field<int>(j, "distill", "embed_dim", c.embed_dim);
  c.beta = field<double>(j, "distill", "beta", c.beta);
  c.lambda = field<double>(j, "distill", "lambda", c.lambda);
  c.tau_kd = field<double>(j, "distill", "tau_kd", c.tau_kd);
  c.tau_c = field<double>(j, "distill", "tau_c", c.tau_c);
  c.bank_momentum = field<double>(j, "distill", "bank_momentum", c.bank_momentum);
  c.n_negatives = field<int>(j, "distill", "n_negatives", c.n_negatives);
  c.batch_size = field<int>(j, "distill", "batch_size", c.batch_size);
  c.graph_mode = graph::parse_graph_mode(
      field<std::string>(j, "distill", "graph_mode", "knn"));
  c.encoder_mode = distill::parse_encoder_mode(
      field<std::string>(j, "distill", "encoder_mode", "gnn"));
  c.objective = distill::parse_objective(
      field<std::string>(j, "distill", "objective", "infonce_bank"));
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  c.seed = seed;
  return c;
}

json config_to_json(const distill::DistillConfig& c) {
  return {{"teacher_arch", c.teacher_arch},
          {"student_arch", c.student_arch},
          {"k", c.k},
          {"hops", c.hops},
          {"embed_dim", c.embed_dim},
          {"beta", c.beta},
          {"lambda", c.lambda},
          {"tau_kd", c.tau_kd},
          {"tau_c", c.tau_c},
          {"bank_momentum", c.bank_momentum},
          {"n_negatives", c.n_negatives},
          {"batch_size", c.batch_size},
          {"graph_mode", graph::to_string(c.graph_mode)},
          {"encoder_mode", distill::to_string(c.encoder_mode)},
          {"objective", distill::to_string(c.objective)},
          {"schedule", schedule_to_json(c.schedule)}};
}

}  // namespace

ExperimentManifest ExperimentManifest::from_json(const json& j) {
  check_keys(j, "manifest", {"seed", "dataset", "distill", "teacher_checkpoint"});
  ExperimentManifest m;
  uint64_t seed = field<uint64_t>(j, "manifest", "seed", 0);
  if (j.contains("dataset")) m.dataset = dataset_from_json(j.at("dataset"));
  m.config = j.contains("distill") ? config_from_json(j.at("distill"), seed)
                                   : distill::DistillConfig{};
  m.config.seed = seed;
  m.teacher_checkpoint =
      field<std::string>(j, "manifest", "teacher_checkpoint", "");
  return m;
}

ExperimentManifest ExperimentManifest::from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

json ExperimentManifest::to_json() const {
  return {{"seed", config.seed},
          {"dataset", dataset_to_json(dataset)},
          {"distill", config_to_json(config)},
          {"teacher_checkpoint", teacher_checkpoint}};
}

uint64_t ExperimentManifest::hash() const {
  // nlohmann objects serialize with sorted keys: the dump is canonical.
  return fnv1a64(to_json().dump());
}

std::string ExperimentManifest::hash_hex() const {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << hash();
  return os.str();
}

void ExperimentManifest::override_field(const std::string& dotted_key,
                                        const std::string& value) {
  json j = to_json();
  json* node = &j;
  std::string rest = dotted_key;
  size_t dot;
  while ((dot = rest.find('.')) != std::string::npos) {
    std::string head = rest.substr(0, dot);
    if (!node->contains(head))
      throw ConfigError("config: unknown field '" + dotted_key + "'");
    node = &(*node)[head];
    rest = rest.substr(dot + 1);
  }
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::exception&) {
    parsed = value;  // bare strings are taken literally
  }
  (*node)[rest] = parsed;
  *this = from_json(j);
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

RunPaths prepare_run_dir(const std::string& out_root,
                         const std::string& command) {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  localtime_r(&t, &tm);
  std::ostringstream stamp;
  stamp << std::put_time(&tm, "%Y%m%d-%H%M%S");

  fs::path root(out_root.empty() ? "." : out_root);
  fs::create_directories(root);
  fs::path dir = root / (command + "-" + stamp.str());
  for (int suffix = 2; fs::exists(dir); ++suffix)
    dir = root / (command + "-" + stamp.str() + "-" + std::to_string(suffix));
  fs::create_directories(dir);

  RunPaths p;
  p.dir = dir.string();
  p.manifest = (dir / "manifest.json").string();
  p.metrics = (dir / "metrics.jsonl").string();
  p.checkpoints = (dir / "checkpoints").string();
  p.tables = (dir / "tables").string();
  fs::create_directories(p.checkpoints);
  fs::create_directories(p.tables);
  return p;
}

void write_manifest_file(const ExperimentManifest& manifest,
                         const std::string& command, const std::string& path) {
  json j = {{"command", command},
            {"tool_version", kToolVersion},
            {"config_hash", manifest.hash_hex()},
            {"manifest", manifest.to_json()}};
  std::ofstream f(path);
  if (!f) throw DataError("cannot write manifest: " + path);
  f << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

json run_pretrain_teacher(const ExperimentManifest& manifest,
                          const RunPaths& paths, bool verbose) {
  write_manifest_file(manifest, "pretrain-teacher", paths.manifest);
  auto dataset = data::load_dataset(manifest.dataset, manifest.config.seed);

  RngStream init(substream_seed(manifest.config.seed, "init.teacher"));
  models::Backbone teacher(manifest.config.teacher_arch, dataset.train.shape,
                           dataset.train.num_classes, init.next_u64());

  distill::TrainOptions opts;
  opts.metrics_path = paths.metrics;
  opts.verbose = verbose;
  auto result = distill::pretrain_backbone(
      teacher, dataset, manifest.config.schedule,
      substream_seed(manifest.config.seed, "teacher-pretrain"), opts,
      manifest.config.batch_size);

  std::string ckpt = paths.dir + "/teacher.bin";
  distill::save_backbone_checkpoint(teacher, ckpt);

  json summary = {{"command", "pretrain-teacher"},
                  {"teacher_checkpoint", ckpt},
                  {"final_test_acc", result.final_test_acc},
                  {"epochs", result.epochs.size()},
                  {"config_hash", manifest.hash_hex()},
                  {"run_dir", paths.dir}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

json run_distill(const ExperimentManifest& manifest, const RunPaths& paths,
                 bool verbose) {
  if (manifest.teacher_checkpoint.empty())
    throw ConfigError("distill: teacher_checkpoint is required "
                      "(run pretrain-teacher first)");
  write_manifest_file(manifest, "distill", paths.manifest);
  auto dataset = data::load_dataset(manifest.dataset, manifest.config.seed);
  auto teacher = distill::load_backbone_checkpoint(manifest.teacher_checkpoint);

  auto state = distill::TrainState::create(manifest.config, std::move(teacher),
                                           dataset);
  distill::TrainOptions opts;
  opts.metrics_path = paths.metrics;
  opts.checkpoint_dir = paths.checkpoints;
  opts.verbose = verbose;
  auto result = distill::train(state, dataset, opts);

  std::string student_ckpt = paths.dir + "/student-final.bin";
  distill::save_backbone_checkpoint(*state.student, student_ckpt);

  json summary = {{"command", "distill"},
                  {"student_checkpoint", student_ckpt},
                  {"final_test_acc", result.final_test_acc},
                  {"epochs", result.epochs.size()},
                  {"config_hash", manifest.hash_hex()},
                  {"run_dir", paths.dir}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

json run_evaluate(const std::string& run_dir,
                  const std::string& checkpoint_override) {
  std::ifstream mf(run_dir + "/manifest.json");
  if (!mf) throw DataError("evaluate: no manifest.json under " + run_dir);
  json mj;
  mf >> mj;
  auto manifest = ExperimentManifest::from_json(mj.at("manifest"));
  auto dataset = data::load_dataset(manifest.dataset, manifest.config.seed);

  std::string ckpt = checkpoint_override;
  if (ckpt.empty()) {
    for (const char* cand : {"student-final.bin", "teacher.bin"}) {
      if (fs::exists(fs::path(run_dir) / cand)) {
        ckpt = (fs::path(run_dir) / cand).string();
        break;
      }
    }
  }
  if (ckpt.empty())
    throw DataError("evaluate: no backbone checkpoint found under " + run_dir);

  auto net = distill::load_backbone_checkpoint(ckpt);
  double train_acc = distill::evaluate_accuracy(*net, dataset.train);
  double test_acc = distill::evaluate_accuracy(*net, dataset.test);
  return {{"command", "evaluate"},
          {"checkpoint", ckpt},
          {"train_acc", train_acc},
          {"test_acc", test_acc}};
}

json run_transfer(const std::string& backbone_checkpoint,
                  const data::DatasetSpec& target_spec, uint64_t seed,
                  const RunPaths& paths) {
  auto net = distill::load_backbone_checkpoint(backbone_checkpoint);
  auto split = data::make_transfer_split(*net, target_spec, seed);
  double acc = eval::linear_probe(split.train, split.test,
                                  split.train.num_classes,
                                  substream_seed(seed, "linear-probe"));
  json summary = {{"command", "transfer"},
                  {"checkpoint", backbone_checkpoint},
                  {"target_dataset", target_spec.name},
                  {"feature_dim", net->feature_dim()},
                  {"probe_test_acc", acc}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

json run_heatmap(const std::string& backbone_checkpoint,
                 const ExperimentManifest& manifest, const RunPaths& paths) {
  auto net = distill::load_backbone_checkpoint(backbone_checkpoint);
  auto dataset = data::load_dataset(manifest.dataset, manifest.config.seed);

  int want = 32;
  int have = std::min(want, dataset.test.size());
  if (have < want)
    std::cerr << "[hkd] warning: batch smaller than requested, using " << have
              << " instances\n";
  Mat batch = dataset.test.images.topRows(have);
  auto out = net->forward(batch, false);
  Mat preds = graph::softmax_with_temperature(out.logits, 1.0);
  Mat sim = eval::prediction_similarity(preds);

  std::string csv = paths.tables + "/similarity.csv";
  std::string img = paths.dir + "/heatmap.ppm";
  eval::write_matrix_csv(sim, csv);
  eval::write_heatmap_ppm(sim, img);

  json summary = {{"command", "heatmap"},
                  {"checkpoint", backbone_checkpoint},
                  {"instances", have},
                  {"matrix_csv", csv},
                  {"image", img}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// Ablation and sweeps
// ---------------------------------------------------------------------------

namespace {

json run_variant(const ExperimentManifest& base, const std::string& label,
                 const RunPaths& parent, bool verbose,
                 const std::function<void(distill::DistillConfig&)>& tweak) {
  ExperimentManifest m = base;
  tweak(m.config);
  RunPaths sub;
  sub.dir = parent.dir + "/" + label;
  fs::create_directories(sub.dir);
  sub.manifest = sub.dir + "/manifest.json";
  sub.metrics = sub.dir + "/metrics.jsonl";
  sub.checkpoints = sub.dir + "/checkpoints";
  sub.tables = sub.dir + "/tables";
  fs::create_directories(sub.checkpoints);
  fs::create_directories(sub.tables);
  json r = run_distill(m, sub, verbose);
  r["variant"] = label;
  return r;
}

}  // namespace

json run_ablate(const ExperimentManifest& manifest, const std::string& axis,
                const RunPaths& paths, bool verbose) {
  write_manifest_file(manifest, "ablate", paths.manifest);
  using distill::DistillConfig;
  std::vector<std::pair<std::string, std::function<void(DistillConfig&)>>> grid;
  grid.emplace_back("baseline", [](DistillConfig&) {});
  if (axis == "graph" || axis == "all") {
    grid.emplace_back("graph-random", [](DistillConfig& c) {
      c.graph_mode = graph::GraphMode::Random;
    });
    grid.emplace_back("graph-fc", [](DistillConfig& c) {
      c.graph_mode = graph::GraphMode::FullyConnected;
    });
  }
  if (axis == "encoder" || axis == "all") {
    grid.emplace_back("encoder-sum", [](DistillConfig& c) {
      c.encoder_mode = distill::EncoderMode::Sum;
    });
    grid.emplace_back("encoder-mean", [](DistillConfig& c) {
      c.encoder_mode = distill::EncoderMode::Mean;
    });
  }
  if (axis == "objective" || axis == "all") {
    grid.emplace_back("objective-mse", [](DistillConfig& c) {
      c.objective = distill::Objective::Mse;
    });
    grid.emplace_back("objective-jsd", [](DistillConfig& c) {
      c.objective = distill::Objective::Jsd;
    });
    grid.emplace_back("objective-graph-bank", [](DistillConfig& c) {
      c.objective = distill::Objective::GraphBank;
    });
    grid.emplace_back("objective-infonce-batch", [](DistillConfig& c) {
      c.objective = distill::Objective::InfonceBatch;
    });
  }
  if (grid.size() == 1)
    throw ConfigError("ablate: axis must be graph, encoder, objective or all");

  json variants = json::array();
  std::ofstream table(paths.tables + "/ablation.csv");
  table << "variant,test_acc\n";
  for (auto& [label, tweak] : grid) {
    json r = run_variant(manifest, label, paths, verbose, tweak);
    table << label << "," << r["final_test_acc"].get<double>() << "\n";
    variants.push_back(r);
  }
  json summary = {{"command", "ablate"},
                  {"axis", axis},
                  {"table", paths.tables + "/ablation.csv"},
                  {"variants", variants}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

json run_sweep(const ExperimentManifest& manifest, const std::string& param,
               const std::vector<std::string>& values, const RunPaths& paths,
               bool verbose) {
  if (values.empty()) throw ConfigError("sweep: no values given");
  write_manifest_file(manifest, "sweep", paths.manifest);

  json runs = json::array();
  std::vector<double> xs, ys;
  std::ofstream table(paths.tables + "/sweep.csv");
  table << param << ",test_acc\n";
  for (const std::string& v : values) {
    ExperimentManifest m = manifest;
    m.override_field("distill." + param, v);
    json r = run_variant(m, param + "-" + v, paths, verbose,
                         [](distill::DistillConfig&) {});
    double acc = r["final_test_acc"].get<double>();
    table << v << "," << acc << "\n";
    try {
      xs.push_back(std::stod(v));
      ys.push_back(acc);
    } catch (const std::exception&) {
      // non-numeric sweep values get a table but no chart
    }
    runs.push_back(r);
  }
  std::string plot = paths.tables + "/sweep.svg";
  if (xs.size() == values.size() && xs.size() >= 2)
    write_svg_line_chart(xs, ys, param, "test accuracy (%)", plot);

  json summary = {{"command", "sweep"},
                  {"param", param},
                  {"table", paths.tables + "/sweep.csv"},
                  {"plot", plot},
                  {"runs", runs}};
  std::ofstream(paths.dir + "/summary.json") << summary.dump(2) << "\n";
  return summary;
}

// ---------------------------------------------------------------------------
// ARI tables
// ---------------------------------------------------------------------------

namespace {

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open csv: " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      // trim surrounding whitespace
      size_t a = cell.find_first_not_of(" \t\r");
      size_t b = cell.find_last_not_of(" \t\r");
      cells.push_back(a == std::string::npos ? "" : cell.substr(a, b - a + 1));
    }
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

std::vector<AriRow> ari_from_table(const std::string& csv_path,
                                   const std::string& hkd_row,
                                   const std::string& student_row) {
  auto rows = read_csv(csv_path);
  if (rows.size() < 3)
    throw DataError("ari: table needs a header plus at least two rows");
  const size_t cols = rows[0].size();
  if (cols < 2) throw DataError("ari: table needs at least one pair column");

  auto find_row = [&](const std::string& name) -> const std::vector<std::string>* {
    for (size_t i = 1; i < rows.size(); ++i)
      if (rows[i].at(0) == name) return &rows[i];
    return nullptr;
  };
  const auto* hkd = find_row(hkd_row);
  const auto* stu = find_row(student_row);
  if (!hkd) throw DataError("ari: no '" + hkd_row + "' row in the table");
  if (!stu) throw DataError("ari: no '" + student_row + "' row in the table");

  auto parse_row = [&](const std::vector<std::string>& r) {
    std::vector<double> v;
    for (size_t c = 1; c < cols; ++c) {
      try {
        v.push_back(std::stod(r.at(c)));
      } catch (const std::exception&) {
        throw DataError("ari: non-numeric cell in row '" + r.at(0) + "'");
      }
    }
    return v;
  };
  auto hkd_acc = parse_row(*hkd);
  auto stu_acc = parse_row(*stu);

  std::vector<AriRow> out;
  for (size_t i = 1; i < rows.size(); ++i) {
    const std::string& method = rows[i].at(0);
    if (method == hkd_row || method == student_row || method == "Teacher")
      continue;
    auto bkd_acc = parse_row(rows[i]);
    std::vector<eval::AriInput> inputs;
    for (size_t c = 0; c < bkd_acc.size(); ++c)
      inputs.push_back({hkd_acc[c], bkd_acc[c], stu_acc[c]});
    out.push_back({method, eval::ari(inputs)});
  }
  return out;
}

std::string ari_rows_to_csv(const std::vector<AriRow>& rows) {
  std::ostringstream os;
  os.precision(10);
  os << "method,ari_percent\n";
  for (const auto& r : rows) os << r.method << "," << r.ari_percent << "\n";
  return os.str();
}

json list_archs_json() {
  json archs = json::array();
  for (const auto& a : models::list_architectures())
    archs.push_back({{"name", a.name},
                     {"feature_dim", a.feature_dim},
                     {"stands_in_for", a.maps_to}});
  return {{"architectures", archs}};
}

// ---------------------------------------------------------------------------
// SVG chart
// ---------------------------------------------------------------------------

void write_svg_line_chart(const std::vector<double>& xs,
                          const std::vector<double>& ys,
                          const std::string& x_label,
                          const std::string& y_label,
                          const std::string& path) {
  require(xs.size() == ys.size() && xs.size() >= 2,
          "chart: need at least two points");
  const double w = 480, h = 320, ml = 56, mr = 16, mt = 16, mb = 40;
  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax == xmin) xmax = xmin + 1;
  if (ymax == ymin) ymax = ymin + 1;
  double ypad = 0.05 * (ymax - ymin);
  ymin -= ypad;
  ymax += ypad;

  auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
  auto py = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

  std::ofstream f(path);
  if (!f) throw DataError("cannot write chart: " + path);
  f << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
    << "\" height=\"" << h << "\">\n";
  f << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
    << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  f << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\""
    << h - mb << "\" stroke=\"black\"/>\n";
  f << "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (size_t i = 0; i < xs.size(); ++i) f << px(xs[i]) << "," << py(ys[i]) << " ";
  f << "\"/>\n";
  for (size_t i = 0; i < xs.size(); ++i) {
    f << "<circle cx=\"" << px(xs[i]) << "\" cy=\"" << py(ys[i])
      << "\" r=\"3\" fill=\"#1f77b4\"/>\n";
    f << "<text x=\"" << px(xs[i]) << "\" y=\"" << h - mb + 16
      << "\" font-size=\"11\" text-anchor=\"middle\">" << xs[i] << "</text>\n";
  }
  std::ostringstream lo, hi;
  lo.precision(4);
  hi.precision(4);
  lo << ymin + ypad;
  hi << ymax - ypad;
  f << "<text x=\"" << ml - 6 << "\" y=\"" << py(ymin + ypad)
    << "\" font-size=\"11\" text-anchor=\"end\">" << lo.str() << "</text>\n";
  f << "<text x=\"" << ml - 6 << "\" y=\"" << py(ymax - ypad)
    << "\" font-size=\"11\" text-anchor=\"end\">" << hi.str() << "</text>\n";
  f << "<text x=\"" << (w + ml - mr) / 2 << "\" y=\"" << h - 8
    << "\" font-size=\"12\" text-anchor=\"middle\">" << x_label << "</text>\n";
  f << "<text x=\"14\" y=\"" << (h - mb + mt) / 2
    << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
    << (h - mb + mt) / 2 << ")\">" << y_label << "</text>\n";
  f << "</svg>\n";
}

}  // namespace hkd::experiment
