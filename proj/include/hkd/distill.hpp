#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/contrastive.hpp"
#include "hkd/data.hpp"
#include "hkd/encoder.hpp"
#include "hkd/graph.hpp"
#include "hkd/models.hpp"

namespace hkd::distill {

enum class EncoderMode { Gnn, Sum, Mean };
enum class Objective { InfonceBank, InfonceBatch, Mse, Jsd, GraphBank };

EncoderMode parse_encoder_mode(const std::string& s);
Objective parse_objective(const std::string& s);
std::string to_string(EncoderMode m);
std::string to_string(Objective o);

struct OptimizerSchedule {
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 10;
  std::vector<int> decay_epochs;  // lr *= decay_factor at the start of each
  double decay_factor = 0.1;

  double lr_at(int epoch) const;
};

struct DistillConfig {
  std::string teacher_arch = "small-convnet-T";
  std::string student_arch = "small-convnet-S";
  int k = 8;           // KNN neighbors
  int hops = 1;        // L
  int embed_dim = 128; // g, shared by both encoders
  double beta = 1.0;   // holistic weight
  double lambda = 1.0; // KD weight
  double tau_kd = 4.0;
  double tau_c = 0.1;
  double bank_momentum = 0.5;
  int n_negatives = 4096;  // clamped to N-1 at runtime
  int batch_size = 64;
  graph::GraphMode graph_mode = graph::GraphMode::Knn;
  EncoderMode encoder_mode = EncoderMode::Gnn;
  Objective objective = Objective::InfonceBank;
  OptimizerSchedule schedule;
  uint64_t seed = 0;

  void validate() const;
};

// Encoder weights plus their gradient buffers.
struct EncoderState {
  encoder::EncoderWeights weights;
  std::vector<Mat> grads;

  static EncoderState create(int hops, int input_dim, int output_dim,
                             RngStream& rng);
  void zero_grads();
};

// SGD with momentum over (value, grad) pairs registered by name.
class SgdOptimizer {
 public:
  void add(const std::string& name, Mat* value, Mat* grad);
  void add_backbone(models::Backbone& net);
  void add_encoder(const std::string& prefix, EncoderState& enc);
  void step(double lr, double momentum, double weight_decay);
  double grad_norm() const;

  size_t size() const { return refs_.size(); }
  const std::string& name_of(size_t i) const { return refs_[i].name; }
  Mat& velocity(size_t i) { return velocity_[i]; }

 private:
  struct Ref {
    std::string name;
    Mat* value;
    Mat* grad;
  };
  std::vector<Ref> refs_;
  std::vector<Mat> velocity_;
};

struct StepMetrics {
  int epoch = 0;
  int64_t step = 0;
  double ce = 0, kd = 0, hol = 0, total = 0;
  double lr = 0;
  double grad_norm = 0;
};

struct EpochMetrics {
  int epoch = 0;
  double ce = 0, kd = 0, hol = 0, total = 0;  // means over the epoch's steps
  double lr = 0;
  double train_acc = 0, test_acc = 0;
};

// Everything Algorithm 1 mutates. All randomness is derived from
// (config.seed, epoch, step) counters, so a restored checkpoint replays the
// continuation bit-identically.
struct TrainState {
  DistillConfig config;
  std::unique_ptr<models::Backbone> teacher;  // frozen
  std::unique_ptr<models::Backbone> student;
  EncoderState theta_t, theta_s;
  contrastive::MemoryBank bank_t, bank_s;
  SgdOptimizer optimizer;  // owns W^s, Theta^t, Theta^s updates
  int epoch = 0;
  int64_t step = 0;

  static TrainState create(const DistillConfig& config,
                           std::unique_ptr<models::Backbone> teacher,
                           const data::SplitPair& dataset);
};

// Mean KL(p_s || p_t) over the batch, scaled by tau_kd^2 so gradient
// magnitudes stay temperature-invariant. Both batches must share the
// temperature. Optionally returns the gradient w.r.t. student logits.
double vanilla_kd_loss(const graph::PredictionBatch& student_pred,
                       const graph::PredictionBatch& teacher_pred,
                       Mat* d_student_logits = nullptr);

// ce + lambda * kd + beta * hol.
double total_loss(double ce, double kd, double hol, double lambda, double beta);

// Relational special case: the b x b cosine-similarity matrices of the two
// feature sets, aligned by MSE.
double relational_reduction_loss(const Mat& teacher_features,
                                 const Mat& student_features);

struct HolisticGrads {
  Mat d_student_features;
  std::vector<Mat> d_theta_t;
  std::vector<Mat> d_theta_s;
};

struct HolisticOutcome {
  double loss = 0;
  Vec positive_similarities;
  Vec per_anchor_bounds;
  Mat teacher_embedding;  // H^t rows, used by graph-bank updates
  Mat student_embedding;  // H^s rows
};

// The full holistic pipeline for one batch: graph construction from the
// temperature-1 predictions, encoder forward, objective evaluation, and (on
// request) gradients into the student features and both encoders' weights.
// Banks may be null for the in-batch objectives.
HolisticOutcome holistic_loss(
    const DistillConfig& config, const Mat& teacher_soft_tau1,
    const Mat& student_soft_tau1, const Mat& teacher_features,
    const Mat& student_features, const encoder::EncoderWeights& theta_t,
    const encoder::EncoderWeights& theta_s,
    const contrastive::MemoryBank* bank_t,
    const contrastive::MemoryBank* bank_s,
    const std::vector<int>& batch_indices, uint64_t step_seed,
    HolisticGrads* grads = nullptr);

// One Algorithm 1 iteration: forward both networks, graphs, holistic loss,
// backprop into W^s / Theta^t / Theta^s, bank updates.
StepMetrics train_step(TrainState& state, const Mat& images,
                       const std::vector<int>& labels,
                       const std::vector<int>& dataset_indices);

using MetricsCallback = std::function<void(const StepMetrics&)>;
using EpochCallback = std::function<void(const EpochMetrics&)>;

struct TrainOptions {
  std::string metrics_path;    // JSONL records; empty disables
  std::string checkpoint_dir;  // per-epoch checkpoints; empty disables
  bool verbose = false;
  MetricsCallback on_step;
  EpochCallback on_epoch;
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  double final_test_acc = 0;
};

// Epoch loop from state.epoch to config.schedule.epochs. Epoch order is a
// seeded shuffle; the trailing partial batch is dropped.
TrainResult train(TrainState& state, const data::SplitPair& dataset,
                  const TrainOptions& opts);

// Plain CE training of one backbone (used for teachers and CE baselines).
struct PretrainResult {
  std::vector<EpochMetrics> epochs;
  double final_test_acc = 0;
};

PretrainResult pretrain_backbone(models::Backbone& net,
                                 const data::SplitPair& dataset,
                                 const OptimizerSchedule& schedule,
                                 uint64_t seed, const TrainOptions& opts,
                                 int batch_size = 64);

double evaluate_accuracy(models::Backbone& net, const data::Dataset& ds,
                         int batch_size = 128);

// Structural hash over every config field that affects results.
uint64_t config_fingerprint(const DistillConfig& config);

// Versioned binary checkpoints; load restores bit-identical continuation.
void save_checkpoint(const TrainState& state, const std::string& path,
                     uint64_t config_hash);
void load_checkpoint(TrainState& state, const std::string& path,
                     std::optional<uint64_t> expect_config_hash);

void save_backbone_checkpoint(const models::Backbone& net,
                              const std::string& path);
// Rebuilds from the stored arch/shape/classes and loads the weights.
std::unique_ptr<models::Backbone> load_backbone_checkpoint(
    const std::string& path);

}  // namespace hkd::distill
