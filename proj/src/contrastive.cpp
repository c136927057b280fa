#include "hkd/contrastive.hpp"

#include <algorithm>
#include <cmath>

namespace hkd::contrastive {

namespace {

constexpr double kNormTol = 1e-3;

void check_normalized(const HolisticEmbedding& e, const char* who) {
  require(e.vectors.rows() >= 1, std::string(who) + ": empty batch");
  require(all_finite(e.vectors), std::string(who) + ": non-finite entries");
  for (Eigen::Index i = 0; i < e.vectors.rows(); ++i) {
    double n = e.vectors.row(i).norm();
    require(std::abs(n - 1.0) <= kNormTol,
            std::string(who) + ": row " + std::to_string(i) +
                " is not unit-normalized (norm " + std::to_string(n) + ")");
  }
}

double logsumexp(const Vec& v) {
  double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  return x > 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

MemoryBank MemoryBank::random_init(int n, int d, double momentum, Owner owner,
                                   RngStream& rng) {
  require(n >= 1 && d >= 1, "memory bank: need positive size and width");
  require(momentum >= 0.0 && momentum <= 1.0,
          "memory bank: momentum must lie in [0, 1]");
  MemoryBank bank;
  bank.momentum = momentum;
  bank.owner = owner;
  bank.entries = Mat(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) bank.entries(i, j) = rng.normal();
  bank.entries = normalize_rows(bank.entries);
  return bank;
}

ContrastiveBatchResult infonce_in_batch(const HolisticEmbedding& teacher_emb,
                                        const HolisticEmbedding& student_emb,
                                        double contrast_temperature,
                                        InBatchGrads* grads) {
  require(contrast_temperature > 0.0, "infonce: temperature must be positive");
  check_normalized(teacher_emb, "infonce teacher embedding");
  check_normalized(student_emb, "infonce student embedding");
  require(teacher_emb.vectors.rows() == student_emb.vectors.rows() &&
              teacher_emb.vectors.cols() == student_emb.vectors.cols(),
          "infonce: embeddings must share shape");

  const Eigen::Index b = teacher_emb.vectors.rows();
  const double tau = contrast_temperature;
  Mat scores = (teacher_emb.vectors * student_emb.vectors.transpose()) / tau;

  ContrastiveBatchResult r;
  r.positive_similarities = Vec(b);
  r.per_anchor_bounds = Vec(b);
  Mat softmax_rows(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    double lse = logsumexp(scores.row(i));
    // log[(1/b) sum_j e^{s_ij/tau}] = lse - log b
    r.per_anchor_bounds(i) =
        scores(i, i) - (lse - std::log(static_cast<double>(b)));
    r.positive_similarities(i) = scores(i, i) * tau;
    softmax_rows.row(i) = (scores.row(i).array() - lse).exp();
  }
  r.mi_lower_bound_estimate = r.per_anchor_bounds.mean();
  r.loss = -r.mi_lower_bound_estimate;
  require(std::isfinite(r.loss), "infonce: loss is not finite");

  if (grads) {
    // dL/ds_ij = -(1/b)(delta_ij - q_ij) / tau
    Mat g = softmax_rows;
    g.diagonal().array() -= 1.0;
    g /= static_cast<double>(b) * tau;
    grads->d_teacher = g * student_emb.vectors;
    grads->d_student = g.transpose() * teacher_emb.vectors;
  }
  return r;
}

namespace {

// Shared core for the two bank variants. `negatives` holds the contrast rows
// already mapped into the embedding space; d_negatives (same shape as the
// bank-projection matrix it came from) receives accumulated gradients.
ContrastiveBatchResult bank_side_loss(const HolisticEmbedding& anchor_emb,
                                      const HolisticEmbedding& positive_emb,
                                      const Mat& contrast_rows,
                                      const std::vector<std::vector<int>>& negs,
                                      double tau, Mat* d_contrast,
                                      BankSideGrads* grads) {
  const Eigen::Index b = anchor_emb.vectors.rows();
  ContrastiveBatchResult r;
  r.positive_similarities = Vec(b);
  r.per_anchor_bounds = Vec(b);

  if (grads) {
    grads->d_anchor = Mat::Zero(b, anchor_emb.vectors.cols());
    grads->d_positive = Mat::Zero(b, positive_emb.vectors.cols());
  }

  double total = 0.0;
  double bound_total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& ni = negs[static_cast<size_t>(i)];
    const int m = static_cast<int>(ni.size());
    double pos = anchor_emb.vectors.row(i).dot(positive_emb.vectors.row(i));
    r.positive_similarities(i) = pos;

    Vec terms(m + 1);
    terms(0) = pos / tau;
    for (int j = 0; j < m; ++j)
      terms(j + 1) = anchor_emb.vectors.row(i).dot(contrast_rows.row(ni[j])) / tau;
    double lse = logsumexp(terms);
    double term = terms(0) - lse;  // log[e^pos / (e^pos + sum e^neg)]
    total += term;
    r.per_anchor_bounds(i) = term + std::log(static_cast<double>(m + 1));
    bound_total += r.per_anchor_bounds(i);

    if (grads) {
      Vec p = (terms.array() - lse).exp();  // softmax over pos + negatives
      double d_pos = -(1.0 - p(0)) / (static_cast<double>(b) * tau);
      grads->d_anchor.row(i) += d_pos * positive_emb.vectors.row(i);
      grads->d_positive.row(i) += d_pos * anchor_emb.vectors.row(i);
      for (int j = 0; j < m; ++j) {
        double d_neg = p(j + 1) / (static_cast<double>(b) * tau);
        grads->d_anchor.row(i) += d_neg * contrast_rows.row(ni[j]);
        if (d_contrast)
          d_contrast->row(ni[j]) += d_neg * anchor_emb.vectors.row(i);
      }
    }
  }
  r.loss = -total / static_cast<double>(b);
  r.mi_lower_bound_estimate = bound_total / static_cast<double>(b);
  require(std::isfinite(r.loss), "bank infonce: loss is not finite");
  return r;
}

std::vector<std::vector<int>> draw_negatives(const MemoryBank& bank,
                                             const std::vector<int>& batch_indices,
                                             int n_negatives, uint64_t seed) {
  const int n = bank.size();
  require(n_negatives >= 0, "bank infonce: n_negatives must be non-negative");
  require(n_negatives < n, "bank infonce: n_negatives must be smaller than the bank");
  for (int idx : batch_indices)
    require(idx >= 0 && idx < n, "bank infonce: batch index " +
                                     std::to_string(idx) + " out of range");

  std::vector<std::vector<int>> negs(batch_indices.size());
  RngStream rng(seed);
  for (size_t i = 0; i < batch_indices.size(); ++i) {
    if (n_negatives == n - 1) {
      negs[i].reserve(n - 1);
      for (int j = 0; j < n; ++j)
        if (j != batch_indices[i]) negs[i].push_back(j);
    } else {
      negs[i] = rng.sample_without_replacement(n, n_negatives, batch_indices[i]);
    }
  }
  return negs;
}

void check_bank_inputs(const HolisticEmbedding& anchor_emb,
                       const HolisticEmbedding& positive_emb,
                       const std::vector<int>& batch_indices, double tau) {
  require(tau > 0.0, "bank infonce: temperature must be positive");
  check_normalized(anchor_emb, "bank infonce anchor");
  check_normalized(positive_emb, "bank infonce positive");
  require(anchor_emb.vectors.rows() == positive_emb.vectors.rows() &&
              anchor_emb.vectors.cols() == positive_emb.vectors.cols(),
          "bank infonce: anchor and positive must share shape");
  require(static_cast<Eigen::Index>(batch_indices.size()) ==
              anchor_emb.vectors.rows(),
          "bank infonce: batch_indices must match the batch size");
}

}  // namespace

ContrastiveBatchResult infonce_with_bank(
    const HolisticEmbedding& anchor_emb, const HolisticEmbedding& positive_emb,
    const MemoryBank& bank, const EncoderWeights& projector,
    const std::vector<int>& batch_indices, int n_negatives,
    double contrast_temperature, uint64_t seed, BankSideGrads* grads) {
  check_bank_inputs(anchor_emb, positive_emb, batch_indices,
                    contrast_temperature);
  require(bank.dim() == projector.input_dim(),
          "bank infonce: projector input width must match the bank");
  require(projector.output_dim() == anchor_emb.vectors.cols(),
          "bank infonce: projector output width must match the embeddings");

  auto negs = draw_negatives(bank, batch_indices, n_negatives, seed);
  encoder::ProjectContext proj_ctx =
      encoder::project_forward_cached(bank.entries, projector);

  Mat d_proj;
  if (grads) d_proj = Mat::Zero(bank.size(), projector.output_dim());
  ContrastiveBatchResult r =
      bank_side_loss(anchor_emb, positive_emb, proj_ctx.out.vectors, negs,
                     contrast_temperature, grads ? &d_proj : nullptr, grads);
  if (grads) {
    encoder::ProjectGrads pg =
        encoder::project_backward(proj_ctx, projector, d_proj);
    grads->d_theta0 = pg.d_theta0;
  }
  return r;
}

ContrastiveBatchResult graph_bank_variant(
    const HolisticEmbedding& anchor_emb, const HolisticEmbedding& positive_emb,
    const MemoryBank& bank, const std::vector<int>& batch_indices,
    int n_negatives, double contrast_temperature, uint64_t seed,
    BankSideGrads* grads) {
  check_bank_inputs(anchor_emb, positive_emb, batch_indices,
                    contrast_temperature);
  require(bank.dim() == anchor_emb.vectors.cols(),
          "graph bank: bank width must equal the embedding width");

  auto negs = draw_negatives(bank, batch_indices, n_negatives, seed);
  ContrastiveBatchResult r =
      bank_side_loss(anchor_emb, positive_emb, bank.entries, negs,
                     contrast_temperature, nullptr, grads);
  if (grads)
    grads->d_theta0 = Mat();  // stored embeddings are constants, no projector
  return r;
}

ContrastiveBatchResult holistic_bank_loss(
    const HolisticEmbedding& teacher_emb, const HolisticEmbedding& student_emb,
    const MemoryBank& teacher_bank, const MemoryBank& student_bank,
    const EncoderWeights& teacher_projector,
    const EncoderWeights& student_projector,
    const std::vector<int>& batch_indices, int n_negatives,
    double contrast_temperature, uint64_t seed, SymmetricBankGrads* grads,
    bool banks_store_embeddings) {
  BankSideGrads g_t, g_s;
  BankSideGrads* pg_t = grads ? &g_t : nullptr;
  BankSideGrads* pg_s = grads ? &g_s : nullptr;
  uint64_t seed_t = substream_seed(seed, "bank.t_anchor");
  uint64_t seed_s = substream_seed(seed, "bank.s_anchor");

  ContrastiveBatchResult t_side, s_side;
  if (banks_store_embeddings) {
    t_side = graph_bank_variant(teacher_emb, student_emb, student_bank,
                                batch_indices, n_negatives,
                                contrast_temperature, seed_t, pg_t);
    s_side = graph_bank_variant(student_emb, teacher_emb, teacher_bank,
                                batch_indices, n_negatives,
                                contrast_temperature, seed_s, pg_s);
  } else {
    t_side = infonce_with_bank(teacher_emb, student_emb, student_bank,
                               student_projector, batch_indices, n_negatives,
                               contrast_temperature, seed_t, pg_t);
    s_side = infonce_with_bank(student_emb, teacher_emb, teacher_bank,
                               teacher_projector, batch_indices, n_negatives,
                               contrast_temperature, seed_s, pg_s);
  }

  ContrastiveBatchResult r;
  r.loss = t_side.loss + s_side.loss;
  r.positive_similarities = t_side.positive_similarities;
  r.per_anchor_bounds = Vec(t_side.per_anchor_bounds.size() +
                            s_side.per_anchor_bounds.size());
  r.per_anchor_bounds << t_side.per_anchor_bounds, s_side.per_anchor_bounds;
  r.mi_lower_bound_estimate =
      0.5 * (t_side.mi_lower_bound_estimate + s_side.mi_lower_bound_estimate);

  if (grads) {
    grads->d_teacher = g_t.d_anchor + g_s.d_positive;
    grads->d_student = g_t.d_positive + g_s.d_anchor;
    grads->d_theta_s0 = g_t.d_theta0;
    grads->d_theta_t0 = g_s.d_theta0;
  }
  return r;
}

void bank_update(MemoryBank& bank, const std::vector<int>& batch_indices,
                 const Mat& new_features) {
  require(static_cast<Eigen::Index>(batch_indices.size()) == new_features.rows(),
          "bank update: index count must match the feature rows");
  require(new_features.cols() == bank.dim(),
          "bank update: feature width must match the bank");
  require(all_finite(new_features), "bank update: features must be finite");

  const double m = bank.momentum;
  if (m == 1.0) return;  // frozen bank, entries stay bit-identical

  for (size_t p = 0; p < batch_indices.size(); ++p) {
    int i = batch_indices[p];
    require(i >= 0 && i < bank.size(),
            "bank update: index " + std::to_string(i) + " out of range");
    double fn = new_features.row(p).norm();
    if (fn < 1e-12) continue;  // dead-ReLU instance, keep the old entry
    Eigen::RowVectorXd unit = new_features.row(p) / fn;
    if (m == 0.0) {
      bank.entries.row(i) = unit;
      continue;
    }
    Eigen::RowVectorXd blend = m * bank.entries.row(i) + (1.0 - m) * unit;
    double bn = blend.norm();
    if (bn < 1e-12) continue;  // degenerate cancellation, keep the old entry
    bank.entries.row(i) = blend / bn;
  }
}

double mse_alignment_loss(const Mat& teacher_emb, const Mat& student_emb,
                          PairGrads* grads) {
  require(teacher_emb.rows() == student_emb.rows() &&
              teacher_emb.cols() == student_emb.cols(),
          "mse alignment: shape mismatch");
  require(teacher_emb.size() > 0, "mse alignment: empty input");
  Mat diff = teacher_emb - student_emb;
  double loss = diff.squaredNorm() / static_cast<double>(diff.size());
  if (grads) {
    grads->d_teacher = 2.0 * diff / static_cast<double>(diff.size());
    grads->d_student = -grads->d_teacher;
  }
  return loss;
}

double jsd_in_batch_loss(const HolisticEmbedding& teacher_emb,
                         const HolisticEmbedding& student_emb,
                         double contrast_temperature, PairGrads* grads) {
  require(contrast_temperature > 0.0, "jsd: temperature must be positive");
  check_normalized(teacher_emb, "jsd teacher embedding");
  check_normalized(student_emb, "jsd student embedding");
  require(teacher_emb.vectors.rows() == student_emb.vectors.rows() &&
              teacher_emb.vectors.cols() == student_emb.vectors.cols(),
          "jsd: embeddings must share shape");
  const Eigen::Index b = teacher_emb.vectors.rows();
  require(b >= 2, "jsd: need at least 2 instances for in-batch negatives");

  const double tau = contrast_temperature;
  Mat s = teacher_emb.vectors * student_emb.vectors.transpose();
  double pos = 0.0, neg = 0.0;
  Mat g = Mat::Zero(b, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    pos += softplus(-s(i, i) / tau);
    if (grads) g(i, i) = -sigmoid(-s(i, i) / tau) / (static_cast<double>(b) * tau);
    for (Eigen::Index j = 0; j < b; ++j) {
      if (j == i) continue;
      neg += softplus(s(i, j) / tau);
      if (grads)
        g(i, j) = sigmoid(s(i, j) / tau) /
                  (static_cast<double>(b * (b - 1)) * tau);
    }
  }
  double loss = pos / static_cast<double>(b) +
                neg / static_cast<double>(b * (b - 1));
  if (grads) {
    grads->d_teacher = g * student_emb.vectors;
    grads->d_student = g.transpose() * teacher_emb.vectors;
  }
  return loss;
}

}  // namespace hkd::contrastive
