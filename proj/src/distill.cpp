#include "hkd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hkd/eval.hpp"
#include "hkd/nn.hpp"
#include "hkd/rng.hpp"
#include "hkd/serialize.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace hkd::distill {

// ---------------------------------------------------------------------------
// Config plumbing
// ---------------------------------------------------------------------------

EncoderMode parse_encoder_mode(const std::string& s) {
  if (s == "gnn") return EncoderMode::Gnn;
  if (s == "sum") return EncoderMode::Sum;
  if (s == "mean") return EncoderMode::Mean;
  throw ConfigError("unknown encoder mode: " + s);
}

Objective parse_objective(const std::string& s) {
  if (s == "infonce_bank") return Objective::InfonceBank;
  if (s == "infonce_batch") return Objective::InfonceBatch;
  if (s == "mse") return Objective::Mse;
  if (s == "jsd") return Objective::Jsd;
  if (s == "graph_bank") return Objective::GraphBank;
  throw ConfigError("unknown objective: " + s);
}

std::string to_string(EncoderMode m) {
  switch (m) {
    case EncoderMode::Gnn: return "gnn";
    case EncoderMode::Sum: return "sum";
    case EncoderMode::Mean: return "mean";
  }
  return "?";
}

std::string to_string(Objective o) {
  switch (o) {
    case Objective::InfonceBank: return "infonce_bank";
    case Objective::InfonceBatch: return "infonce_batch";
    case Objective::Mse: return "mse";
    case Objective::Jsd: return "jsd";
    case Objective::GraphBank: return "graph_bank";
  }
  return "?";
}

double OptimizerSchedule::lr_at(int epoch) const {
  double lr = base_lr;
  for (int de : decay_epochs)
    if (epoch >= de) lr *= decay_factor;
  return lr;
}

void DistillConfig::validate() const {
  if (k < 1 || k >= batch_size)
    throw ConfigError("config: need 1 <= k < batch_size (k=" +
                      std::to_string(k) + ", b=" + std::to_string(batch_size) +
                      ")");
  if (hops < 0 || hops > 2)
    throw ConfigError("config: hops must be 0, 1 or 2");
  if (embed_dim < 1) throw ConfigError("config: embed_dim must be positive");
  if (beta < 0 || lambda < 0)
    throw ConfigError("config: beta and lambda must be non-negative");
  if (tau_kd <= 0 || tau_c <= 0)
    throw ConfigError("config: temperatures must be positive");
  if (bank_momentum < 0 || bank_momentum > 1)
    throw ConfigError("config: bank momentum must lie in [0, 1]");
  if (n_negatives < 0) throw ConfigError("config: n_negatives must be >= 0");
  if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (schedule.epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (schedule.base_lr <= 0) throw ConfigError("config: base_lr must be positive");
  models::feature_dim_of(teacher_arch);
  models::feature_dim_of(student_arch);
}

// ---------------------------------------------------------------------------
// Encoder state and optimizer
// ---------------------------------------------------------------------------

EncoderState EncoderState::create(int hops, int input_dim, int output_dim,
                                  RngStream& rng) {
  EncoderState s;
  s.weights = encoder::EncoderWeights::random(hops, input_dim, output_dim, rng);
  for (const Mat& t : s.weights.hop_weights)
    s.grads.push_back(Mat::Zero(t.rows(), t.cols()));
  return s;
}

void EncoderState::zero_grads() {
  for (Mat& g : grads) g.setZero();
}

void SgdOptimizer::add(const std::string& name, Mat* value, Mat* grad) {
  refs_.push_back({name, value, grad});
  velocity_.push_back(Mat::Zero(value->rows(), value->cols()));
}

void SgdOptimizer::add_backbone(models::Backbone& net) {
  for (nn::Param* p : net.params()) add(p->name, &p->value, &p->grad);
}

void SgdOptimizer::add_encoder(const std::string& prefix, EncoderState& enc) {
  for (size_t l = 0; l < enc.weights.hop_weights.size(); ++l)
    add(prefix + "." + std::to_string(l), &enc.weights.hop_weights[l],
        &enc.grads[l]);
}

void SgdOptimizer::step(double lr, double momentum, double weight_decay) {
  for (size_t i = 0; i < refs_.size(); ++i) {
    Mat g = *refs_[i].grad;
    if (weight_decay > 0) g += weight_decay * *refs_[i].value;
    velocity_[i] = momentum * velocity_[i] + g;
    *refs_[i].value -= lr * velocity_[i];
  }
}

double SgdOptimizer::grad_norm() const {
  double sq = 0;
  for (const Ref& r : refs_) sq += r.grad->squaredNorm();
  return std::sqrt(sq);
}

// ---------------------------------------------------------------------------
// Loss terms
// ---------------------------------------------------------------------------

double vanilla_kd_loss(const graph::PredictionBatch& student_pred,
                       const graph::PredictionBatch& teacher_pred,
                       Mat* d_student_logits) {
  const Mat& ps = student_pred.soft_targets;
  const Mat& pt = teacher_pred.soft_targets;
  require(ps.rows() == pt.rows() && ps.cols() == pt.cols(),
          "kd loss: prediction shape mismatch");
  require(student_pred.temperature == teacher_pred.temperature,
          "kd loss: both batches must use the same temperature");
  const double tau = student_pred.temperature;
  const Eigen::Index b = ps.rows();

  double total = 0;
  Vec row_kl(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    double kl = 0;
    for (Eigen::Index j = 0; j < ps.cols(); ++j)
      if (ps(i, j) > 0) kl += ps(i, j) * (std::log(ps(i, j)) - std::log(pt(i, j)));
    row_kl(i) = kl;
    total += kl;
  }
  double loss = tau * tau * total / static_cast<double>(b);

  if (d_student_logits) {
    // d/dz_k of tau^2 * mean KL = (tau/b) * p_k [(log p_k - log t_k) - KL_i]
    Mat& d = *d_student_logits;
    d = Mat(b, ps.cols());
    for (Eigen::Index i = 0; i < b; ++i)
      for (Eigen::Index j = 0; j < ps.cols(); ++j)
        d(i, j) = tau / static_cast<double>(b) * ps(i, j) *
                  ((std::log(ps(i, j)) - std::log(pt(i, j))) - row_kl(i));
  }
  return loss;
}

double total_loss(double ce, double kd, double hol, double lambda, double beta) {
  require(lambda >= 0 && beta >= 0, "total loss: weights must be non-negative");
  return ce + lambda * kd + beta * hol;
}

double relational_reduction_loss(const Mat& teacher_features,
                                 const Mat& student_features) {
  require(teacher_features.rows() == student_features.rows(),
          "relational loss: batch size mismatch");
  auto sim = [](const Mat& f) {
    Mat unit = normalize_rows(f);
    Mat s = unit * unit.transpose();
    for (Eigen::Index i = 0; i < f.rows(); ++i)
      if (f.row(i).norm() >= 1e-12) s(i, i) = 1.0;
    return s;
  };
  Mat ht = sim(teacher_features);
  Mat hs = sim(student_features);
  return (ht - hs).squaredNorm() / static_cast<double>(ht.size());
}

// ---------------------------------------------------------------------------
// Holistic pipeline
// ---------------------------------------------------------------------------

namespace {

struct EncoderForward {
  // exactly one of the two context pairs is populated
  encoder::TagcnContext tagcn;
  encoder::PoolingContext pool;
  encoder::ProjectContext proj;
  Mat norm_adj;  // gnn path only
  encoder::HolisticEmbedding out;
};

EncoderForward encode(const DistillConfig& cfg, const Mat& adjacency,
                      const Mat& features,
                      const encoder::EncoderWeights& theta) {
  EncoderForward f;
  if (cfg.encoder_mode == EncoderMode::Gnn) {
    f.norm_adj = graph::normalize_adjacency(adjacency);
    f.tagcn = encoder::tagcn_forward_cached(f.norm_adj, features, theta, cfg.hops);
    f.out = f.tagcn.out;
  } else {
    auto mode = cfg.encoder_mode == EncoderMode::Sum ? encoder::PoolMode::Sum
                                                     : encoder::PoolMode::Mean;
    f.pool = encoder::pooling_forward_cached(adjacency, features, mode);
    // Pooled widths differ across architectures; Theta_0 maps both networks
    // into the shared space.
    f.proj = encoder::project_forward_cached(f.pool.out.vectors, theta);
    f.out = f.proj.out;
  }
  return f;
}

// Backward through one encoder path; returns d_features, accumulates theta
// gradients.
Mat encode_backward(const DistillConfig& cfg, const EncoderForward& f,
                    const Mat& adjacency, const encoder::EncoderWeights& theta,
                    const Mat& d_out, std::vector<Mat>& d_theta) {
  if (cfg.encoder_mode == EncoderMode::Gnn) {
    auto g = encoder::tagcn_backward(f.tagcn, f.norm_adj, theta, d_out);
    for (size_t l = 0; l < d_theta.size(); ++l) d_theta[l] += g.d_theta[l];
    return g.d_features;
  }
  auto mode = cfg.encoder_mode == EncoderMode::Sum ? encoder::PoolMode::Sum
                                                   : encoder::PoolMode::Mean;
  auto pg = encoder::project_backward(f.proj, theta, d_out);
  d_theta[0] += pg.d_theta0;
  return encoder::pooling_backward(f.pool, adjacency, mode, pg.d_features);
}

std::vector<Mat> zero_like(const encoder::EncoderWeights& w) {
  std::vector<Mat> z;
  for (const Mat& t : w.hop_weights) z.push_back(Mat::Zero(t.rows(), t.cols()));
  return z;
}

}  // namespace

HolisticOutcome holistic_loss(
    const DistillConfig& cfg, const Mat& teacher_soft_tau1,
    const Mat& student_soft_tau1, const Mat& teacher_features,
    const Mat& student_features, const encoder::EncoderWeights& theta_t,
    const encoder::EncoderWeights& theta_s,
    const contrastive::MemoryBank* bank_t, const contrastive::MemoryBank* bank_s,
    const std::vector<int>& batch_indices, uint64_t step_seed,
    HolisticGrads* grads) {
  const int b = static_cast<int>(teacher_features.rows());

  Mat adj_t, adj_s;
  switch (cfg.graph_mode) {
    case graph::GraphMode::Knn:
      adj_t = graph::build_knn_adjacency(teacher_soft_tau1, cfg.k);
      adj_s = graph::build_knn_adjacency(student_soft_tau1, cfg.k);
      break;
    case graph::GraphMode::Random:
      adj_t = graph::build_ablation_adjacency(
          b, graph::GraphMode::Random, cfg.k,
          substream_seed(step_seed, "graph.random.t"));
      adj_s = graph::build_ablation_adjacency(
          b, graph::GraphMode::Random, cfg.k,
          substream_seed(step_seed, "graph.random.s"));
      break;
    case graph::GraphMode::FullyConnected:
      adj_t = graph::build_ablation_adjacency(b, graph::GraphMode::FullyConnected,
                                              cfg.k, 0);
      adj_s = adj_t;
      break;
  }

  EncoderForward enc_t = encode(cfg, adj_t, teacher_features, theta_t);
  EncoderForward enc_s = encode(cfg, adj_s, student_features, theta_s);

  HolisticOutcome out;
  Mat d_ht, d_hs;
  std::vector<Mat> d_theta_t_extra, d_theta_s_extra;  // bank projection path

  switch (cfg.objective) {
    case Objective::InfonceBatch: {
      contrastive::InBatchGrads g;
      auto r = contrastive::infonce_in_batch(enc_t.out, enc_s.out, cfg.tau_c,
                                             grads ? &g : nullptr);
      out.loss = r.loss;
      out.positive_similarities = r.positive_similarities;
      out.per_anchor_bounds = r.per_anchor_bounds;
      if (grads) {
        d_ht = g.d_teacher;
        d_hs = g.d_student;
      }
      break;
    }
    case Objective::InfonceBank:
    case Objective::GraphBank: {
      require(bank_t && bank_s, "holistic loss: bank objectives need banks");
      int n_neg = std::min(cfg.n_negatives, bank_t->size() - 1);
      contrastive::SymmetricBankGrads g;
      auto r = contrastive::holistic_bank_loss(
          enc_t.out, enc_s.out, *bank_t, *bank_s, theta_t, theta_s,
          batch_indices, n_neg, cfg.tau_c, step_seed, grads ? &g : nullptr,
          cfg.objective == Objective::GraphBank);
      out.loss = r.loss;
      out.positive_similarities = r.positive_similarities;
      out.per_anchor_bounds = r.per_anchor_bounds;
      if (grads) {
        d_ht = g.d_teacher;
        d_hs = g.d_student;
        if (cfg.objective == Objective::InfonceBank) {
          d_theta_t_extra = zero_like(theta_t);
          d_theta_s_extra = zero_like(theta_s);
          d_theta_t_extra[0] = g.d_theta_t0;
          d_theta_s_extra[0] = g.d_theta_s0;
        }
      }
      break;
    }
    case Objective::Mse: {
      contrastive::PairGrads g;
      out.loss = contrastive::mse_alignment_loss(enc_t.out.vectors,
                                                 enc_s.out.vectors,
                                                 grads ? &g : nullptr);
      if (grads) {
        d_ht = g.d_teacher;
        d_hs = g.d_student;
      }
      break;
    }
    case Objective::Jsd: {
      contrastive::PairGrads g;
      out.loss = contrastive::jsd_in_batch_loss(enc_t.out, enc_s.out, cfg.tau_c,
                                                grads ? &g : nullptr);
      if (grads) {
        d_ht = g.d_teacher;
        d_hs = g.d_student;
      }
      break;
    }
  }

  out.teacher_embedding = enc_t.out.vectors;
  out.student_embedding = enc_s.out.vectors;

  if (grads) {
    grads->d_theta_t = zero_like(theta_t);
    grads->d_theta_s = zero_like(theta_s);
    encode_backward(cfg, enc_t, adj_t, theta_t, d_ht, grads->d_theta_t);
    grads->d_student_features =
        encode_backward(cfg, enc_s, adj_s, theta_s, d_hs, grads->d_theta_s);
    if (!d_theta_t_extra.empty())
      for (size_t l = 0; l < grads->d_theta_t.size(); ++l) {
        grads->d_theta_t[l] += d_theta_t_extra[l];
        grads->d_theta_s[l] += d_theta_s_extra[l];
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Train state
// ---------------------------------------------------------------------------

TrainState TrainState::create(const DistillConfig& config,
                              std::unique_ptr<models::Backbone> teacher,
                              const data::SplitPair& dataset) {
  config.validate();
  require(teacher != nullptr, "train state: missing teacher");
  require(teacher->arch() == config.teacher_arch,
          "train state: teacher checkpoint architecture '" + teacher->arch() +
              "' does not match config '" + config.teacher_arch + "'");

  TrainState st;
  st.config = config;
  st.teacher = std::move(teacher);

  RngStream init_s(substream_seed(config.seed, "init.student"));
  st.student = std::make_unique<models::Backbone>(
      config.student_arch, dataset.train.shape, dataset.train.num_classes,
      init_s.next_u64());

  const int d_t = st.teacher->feature_dim();
  const int d_s = st.student->feature_dim();
  RngStream theta_rng_t(substream_seed(config.seed, "init.theta_t"));
  RngStream theta_rng_s(substream_seed(config.seed, "init.theta_s"));
  st.theta_t = EncoderState::create(config.hops, d_t, config.embed_dim,
                                    theta_rng_t);
  st.theta_s = EncoderState::create(config.hops, d_s, config.embed_dim,
                                    theta_rng_s);

  const int n = dataset.train.size();
  const bool store_embeddings = config.objective == Objective::GraphBank;
  RngStream bank_rng_t(substream_seed(config.seed, "bank.teacher"));
  RngStream bank_rng_s(substream_seed(config.seed, "bank.student"));
  st.bank_t = contrastive::MemoryBank::random_init(
      n, store_embeddings ? config.embed_dim : d_t, config.bank_momentum,
      contrastive::MemoryBank::Owner::Teacher, bank_rng_t);
  st.bank_s = contrastive::MemoryBank::random_init(
      n, store_embeddings ? config.embed_dim : d_s, config.bank_momentum,
      contrastive::MemoryBank::Owner::Student, bank_rng_s);

  st.optimizer.add_backbone(*st.student);
  st.optimizer.add_encoder("theta_t", st.theta_t);
  st.optimizer.add_encoder("theta_s", st.theta_s);
  return st;
}

// ---------------------------------------------------------------------------
// Steps and epochs
// ---------------------------------------------------------------------------

StepMetrics train_step(TrainState& state, const Mat& images,
                       const std::vector<int>& labels,
                       const std::vector<int>& dataset_indices) {
  const DistillConfig& cfg = state.config;
  require(images.rows() == cfg.batch_size,
          "train step: batch size mismatch (partial batches are dropped)");

  state.student->zero_grads();
  state.theta_t.zero_grads();
  state.theta_s.zero_grads();

  auto t_out = state.teacher->forward(images, false);
  auto s_out = state.student->forward(images, true);
  if (!all_finite(s_out.logits) || !all_finite(s_out.features)) {
    std::ostringstream os;
    os << "train step " << state.step
       << ": student forward diverged (non-finite outputs); batch indices:";
    for (int i : dataset_indices) os << " " << i;
    throw NumericalError(os.str());
  }

  auto ce = nn::softmax_cross_entropy(s_out.logits, labels);
  Mat d_logits = ce.d_logits;

  double kd = 0;
  if (cfg.lambda > 0) {
    auto pt = graph::PredictionBatch::from_logits(t_out.logits, cfg.tau_kd);
    auto ps = graph::PredictionBatch::from_logits(s_out.logits, cfg.tau_kd);
    Mat d_kd;
    kd = vanilla_kd_loss(ps, pt, &d_kd);
    d_logits += cfg.lambda * d_kd;
  }

  double hol = 0;
  Mat d_features;
  Mat h_t, h_s;  // embeddings for graph-bank updates
  if (cfg.beta > 0) {
    Mat t_soft = graph::softmax_with_temperature(t_out.logits, 1.0);
    Mat s_soft = graph::softmax_with_temperature(s_out.logits, 1.0);
    uint64_t step_seed = splitmix64(substream_seed(cfg.seed, "step-noise") ^
                                    static_cast<uint64_t>(state.step));
    HolisticGrads hg;
    auto r = holistic_loss(cfg, t_soft, s_soft, t_out.features, s_out.features,
                           state.theta_t.weights, state.theta_s.weights,
                           &state.bank_t, &state.bank_s, dataset_indices,
                           step_seed, &hg);
    hol = r.loss;
    h_t = r.teacher_embedding;
    h_s = r.student_embedding;
    d_features = cfg.beta * hg.d_student_features;
    for (size_t l = 0; l < state.theta_t.grads.size(); ++l) {
      state.theta_t.grads[l] += cfg.beta * hg.d_theta_t[l];
      state.theta_s.grads[l] += cfg.beta * hg.d_theta_s[l];
    }
  }

  double total = total_loss(ce.loss, kd, hol, cfg.lambda, cfg.beta);
  if (!std::isfinite(total)) {
    std::ostringstream os;
    os << "train step " << state.step << ": non-finite loss (ce=" << ce.loss
       << " kd=" << kd << " hol=" << hol << "); batch indices:";
    for (int i : dataset_indices) os << " " << i;
    throw NumericalError(os.str());
  }

  state.student->backward(d_features, d_logits);

  StepMetrics m;
  m.epoch = state.epoch;
  m.step = state.step;
  m.ce = ce.loss;
  m.kd = kd;
  m.hol = hol;
  m.total = total;
  m.lr = cfg.schedule.lr_at(state.epoch);
  m.grad_norm = state.optimizer.grad_norm();

  state.optimizer.step(m.lr, cfg.schedule.momentum, cfg.schedule.weight_decay);

  if (cfg.objective == Objective::GraphBank) {
    if (cfg.beta > 0) {
      contrastive::bank_update(state.bank_t, dataset_indices, h_t);
      contrastive::bank_update(state.bank_s, dataset_indices, h_s);
    }
  } else {
    contrastive::bank_update(state.bank_t, dataset_indices, t_out.features);
    contrastive::bank_update(state.bank_s, dataset_indices, s_out.features);
  }

  ++state.step;
  return m;
}

double evaluate_accuracy(models::Backbone& net, const data::Dataset& ds,
                         int batch_size) {
  Mat logits(ds.size(), net.num_classes());
  for (int start = 0; start < ds.size(); start += batch_size) {
    int n = std::min(batch_size, ds.size() - start);
    logits.middleRows(start, n) =
        net.forward(ds.images.middleRows(start, n), false).logits;
  }
  return eval::accuracy(logits, ds.labels);
}

namespace {

void write_step_record(std::ofstream& f, const StepMetrics& m) {
  if (!f.is_open()) return;
  json rec = {{"epoch", m.epoch}, {"step", m.step},   {"ce", m.ce},
              {"kd", m.kd},       {"hol", m.hol},     {"total", m.total},
              {"lr", m.lr},       {"train_acc", nullptr},
              {"test_acc", nullptr}};
  f << rec.dump() << "\n";
}

void write_epoch_record(std::ofstream& f, const EpochMetrics& m) {
  if (!f.is_open()) return;
  json rec = {{"epoch", m.epoch}, {"step", -1},       {"ce", m.ce},
              {"kd", m.kd},       {"hol", m.hol},     {"total", m.total},
              {"lr", m.lr},       {"train_acc", m.train_acc},
              {"test_acc", m.test_acc}};
  f << rec.dump() << "\n";
  f.flush();
}

std::vector<int> epoch_order(uint64_t seed, int epoch, int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream rng(splitmix64(substream_seed(seed, "epoch-order") ^
                           static_cast<uint64_t>(epoch)));
  rng.shuffle(order);
  return order;
}

void gather_batch(const data::Dataset& ds, const std::vector<int>& order,
                  int start, int b, Mat& images, std::vector<int>& labels,
                  std::vector<int>& indices) {
  images.resize(b, ds.images.cols());
  labels.resize(b);
  indices.resize(b);
  for (int i = 0; i < b; ++i) {
    int idx = order[start + i];
    images.row(i) = ds.images.row(idx);
    labels[i] = ds.labels[idx];
    indices[i] = idx;
  }
}

}  // namespace

uint64_t config_fingerprint(const DistillConfig& c) {
  std::ostringstream os;
  os.precision(17);
  os << c.teacher_arch << "|" << c.student_arch << "|" << c.k << "|" << c.hops
     << "|" << c.embed_dim << "|" << c.beta << "|" << c.lambda << "|"
     << c.tau_kd << "|" << c.tau_c << "|" << c.bank_momentum << "|"
     << c.n_negatives << "|" << c.batch_size << "|"
     << graph::to_string(c.graph_mode) << "|" << to_string(c.encoder_mode)
     << "|" << to_string(c.objective) << "|" << c.schedule.base_lr << "|"
     << c.schedule.momentum << "|" << c.schedule.weight_decay << "|"
     << c.schedule.epochs << "|" << c.schedule.decay_factor << "|" << c.seed;
  for (int e : c.schedule.decay_epochs) os << "," << e;
  return fnv1a64(os.str());
}

TrainResult train(TrainState& state, const data::SplitPair& dataset,
                  const TrainOptions& opts) {
  const DistillConfig& cfg = state.config;
  cfg.validate();
  const int n = dataset.train.size();
  const int b = cfg.batch_size;
  const int steps_per_epoch = n / b;
  require(steps_per_epoch >= 1, "train: dataset smaller than one batch");

  std::ofstream metrics;
  if (!opts.metrics_path.empty()) {
    metrics.open(opts.metrics_path, std::ios::app);
    if (!metrics) throw DataError("cannot open metrics log: " + opts.metrics_path);
  }
  if (!opts.checkpoint_dir.empty()) fs::create_directories(opts.checkpoint_dir);

  TrainResult result;
  Mat images;
  std::vector<int> labels, indices;
  for (int e = state.epoch; e < cfg.schedule.epochs; ++e) {
    state.epoch = e;
    auto order = epoch_order(cfg.seed, e, n);
    double ce = 0, kd = 0, hol = 0, total = 0;
    for (int s = 0; s < steps_per_epoch; ++s) {
      gather_batch(dataset.train, order, s * b, b, images, labels, indices);
      StepMetrics m = train_step(state, images, labels, indices);
      ce += m.ce;
      kd += m.kd;
      hol += m.hol;
      total += m.total;
      write_step_record(metrics, m);
      if (opts.on_step) opts.on_step(m);
    }

    EpochMetrics em;
    em.epoch = e;
    em.ce = ce / steps_per_epoch;
    em.kd = kd / steps_per_epoch;
    em.hol = hol / steps_per_epoch;
    em.total = total / steps_per_epoch;
    em.lr = cfg.schedule.lr_at(e);
    em.train_acc = evaluate_accuracy(*state.student, dataset.train);
    em.test_acc = evaluate_accuracy(*state.student, dataset.test);
    write_epoch_record(metrics, em);
    if (opts.on_epoch) opts.on_epoch(em);
    if (opts.verbose)
      std::cerr << "[hkd] epoch " << e << " total " << em.total << " train "
                << em.train_acc << "% test " << em.test_acc << "%\n";
    result.epochs.push_back(em);
    result.final_test_acc = em.test_acc;

    state.epoch = e + 1;
    if (!opts.checkpoint_dir.empty()) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt-epoch-%04d.bin", e);
      save_checkpoint(state, opts.checkpoint_dir + "/" + name,
                      config_fingerprint(cfg));
      save_checkpoint(state, opts.checkpoint_dir + "/last.bin",
                      config_fingerprint(cfg));
    }
  }
  return result;
}

PretrainResult pretrain_backbone(models::Backbone& net,
                                 const data::SplitPair& dataset,
                                 const OptimizerSchedule& schedule,
                                 uint64_t seed, const TrainOptions& opts,
                                 int batch_size) {
  const int n = dataset.train.size();
  const int b = std::min(batch_size, n);
  const int steps_per_epoch = n / b;
  require(steps_per_epoch >= 1, "pretrain: dataset smaller than one batch");

  std::ofstream metrics;
  if (!opts.metrics_path.empty()) {
    metrics.open(opts.metrics_path, std::ios::app);
    if (!metrics) throw DataError("cannot open metrics log: " + opts.metrics_path);
  }

  SgdOptimizer opt;
  opt.add_backbone(net);

  PretrainResult result;
  Mat images;
  std::vector<int> labels, indices;
  int64_t step = 0;
  for (int e = 0; e < schedule.epochs; ++e) {
    auto order = epoch_order(seed, e, n);
    double ce_sum = 0;
    double lr = schedule.lr_at(e);
    for (int s = 0; s < steps_per_epoch; ++s) {
      gather_batch(dataset.train, order, s * b, b, images, labels, indices);
      for (nn::Param* p : net.params()) p->zero_grad();
      auto out = net.forward(images, true);
      auto ce = nn::softmax_cross_entropy(out.logits, labels);
      if (!std::isfinite(ce.loss))
        throw NumericalError("pretrain: non-finite loss at step " +
                             std::to_string(step));
      net.backward(Mat(), ce.d_logits);
      opt.step(lr, schedule.momentum, schedule.weight_decay);
      ce_sum += ce.loss;
      StepMetrics m;
      m.epoch = e;
      m.step = step++;
      m.ce = ce.loss;
      m.total = ce.loss;
      m.lr = lr;
      write_step_record(metrics, m);
      if (opts.on_step) opts.on_step(m);
    }
    EpochMetrics em;
    em.epoch = e;
    em.ce = ce_sum / steps_per_epoch;
    em.total = em.ce;
    em.lr = lr;
    em.train_acc = evaluate_accuracy(net, dataset.train);
    em.test_acc = evaluate_accuracy(net, dataset.test);
    write_epoch_record(metrics, em);
    if (opts.on_epoch) opts.on_epoch(em);
    if (opts.verbose)
      std::cerr << "[hkd] pretrain epoch " << e << " ce " << em.ce << " test "
                << em.test_acc << "%\n";
    result.epochs.push_back(em);
    result.final_test_acc = em.test_acc;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

namespace {
constexpr char kCkptMagic[] = "HKDCKPT1";
constexpr char kBackboneMagic[] = "HKDBBONE";
constexpr uint64_t kCkptVersion = 1;

void write_bank(std::ostream& os, const contrastive::MemoryBank& bank) {
  io::write_f64(os, bank.momentum);
  io::write_u64(os, bank.owner == contrastive::MemoryBank::Owner::Teacher ? 0 : 1);
  io::write_mat(os, bank.entries);
}

void read_bank(std::istream& is, contrastive::MemoryBank& bank) {
  bank.momentum = io::read_f64(is);
  bank.owner = io::read_u64(is) == 0 ? contrastive::MemoryBank::Owner::Teacher
                                     : contrastive::MemoryBank::Owner::Student;
  Mat m = io::read_mat(is);
  require(m.rows() == bank.entries.rows() && m.cols() == bank.entries.cols(),
          "checkpoint: bank shape mismatch");
  bank.entries = m;
}

void write_encoder(std::ostream& os, const EncoderState& enc) {
  io::write_u64(os, enc.weights.hop_weights.size());
  for (const Mat& t : enc.weights.hop_weights) io::write_mat(os, t);
}

void read_encoder(std::istream& is, EncoderState& enc) {
  uint64_t n = io::read_u64(is);
  require(n == enc.weights.hop_weights.size(),
          "checkpoint: encoder hop count mismatch");
  for (Mat& t : enc.weights.hop_weights) {
    Mat m = io::read_mat(is);
    require(m.rows() == t.rows() && m.cols() == t.cols(),
            "checkpoint: encoder weight shape mismatch");
    t = m;
  }
}

}  // namespace

void save_checkpoint(const TrainState& state, const std::string& path,
                     uint64_t config_hash) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  io::write_string(os, kCkptMagic);
  io::write_u64(os, kCkptVersion);
  io::write_u64(os, config_hash);
  io::write_i64(os, state.epoch);
  io::write_i64(os, state.step);
  state.teacher->save(os);
  state.student->save(os);
  write_encoder(os, state.theta_t);
  write_encoder(os, state.theta_s);
  write_bank(os, state.bank_t);
  write_bank(os, state.bank_s);
  auto& opt = const_cast<SgdOptimizer&>(state.optimizer);
  io::write_u64(os, opt.size());
  for (size_t i = 0; i < opt.size(); ++i) {
    io::write_string(os, opt.name_of(i));
    io::write_mat(os, opt.velocity(i));
  }
  if (!os) throw DataError("short write on checkpoint: " + path);
}

void load_checkpoint(TrainState& state, const std::string& path,
                     std::optional<uint64_t> expect_config_hash) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  std::string magic = io::read_string(is);
  require(magic == kCkptMagic, "checkpoint: bad magic in " + path);
  uint64_t version = io::read_u64(is);
  require(version == kCkptVersion, "checkpoint: unsupported version");
  uint64_t hash = io::read_u64(is);
  if (expect_config_hash && hash != *expect_config_hash)
    throw ConfigError("checkpoint: config hash mismatch; the checkpoint was "
                      "produced by a different configuration");
  state.epoch = static_cast<int>(io::read_i64(is));
  state.step = io::read_i64(is);
  state.teacher->load(is);
  state.student->load(is);
  read_encoder(is, state.theta_t);
  read_encoder(is, state.theta_s);
  read_bank(is, state.bank_t);
  read_bank(is, state.bank_s);
  uint64_t n = io::read_u64(is);
  require(n == state.optimizer.size(), "checkpoint: optimizer entry mismatch");
  for (size_t i = 0; i < n; ++i) {
    std::string name = io::read_string(is);
    require(name == state.optimizer.name_of(i),
            "checkpoint: optimizer entry '" + name + "' does not match '" +
                state.optimizer.name_of(i) + "'");
    Mat v = io::read_mat(is);
    require(v.rows() == state.optimizer.velocity(i).rows() &&
                v.cols() == state.optimizer.velocity(i).cols(),
            "checkpoint: velocity shape mismatch for " + name);
    state.optimizer.velocity(i) = v;
  }
}

void save_backbone_checkpoint(const models::Backbone& net,
                              const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot write checkpoint: " + path);
  io::write_string(os, kBackboneMagic);
  io::write_u64(os, kCkptVersion);
  net.save(os);
  if (!os) throw DataError("short write on checkpoint: " + path);
}

std::unique_ptr<models::Backbone> load_backbone_checkpoint(
    const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open checkpoint: " + path);
  std::string magic = io::read_string(is);
  require(magic == kBackboneMagic, "checkpoint: bad magic in " + path);
  uint64_t version = io::read_u64(is);
  require(version == kCkptVersion, "checkpoint: unsupported version");

  auto pos = is.tellg();
  std::string arch = io::read_string(is);
  nn::Shape shape{static_cast<int>(io::read_i64(is)),
                  static_cast<int>(io::read_i64(is)),
                  static_cast<int>(io::read_i64(is))};
  int num_classes = static_cast<int>(io::read_i64(is));
  is.seekg(pos);

  auto net = std::make_unique<models::Backbone>(arch, shape, num_classes, 0);
  net->load(is);
  return net;
}

}  // namespace hkd::distill
