#pragma once

#include <cstdint>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/encoder.hpp"
#include "hkd/rng.hpp"

namespace hkd::contrastive {

using encoder::EncoderWeights;
using encoder::HolisticEmbedding;

// Per-network store of one unit-normalized raw feature vector per training
// instance. Row i always corresponds to dataset instance i. Single writer:
// the trainer updates it after each loss evaluation.
struct MemoryBank {
  enum class Owner { Teacher, Student };

  Mat entries;  // N x d, unit rows
  double momentum = 0.5;
  Owner owner = Owner::Teacher;

  int size() const { return static_cast<int>(entries.rows()); }
  int dim() const { return static_cast<int>(entries.cols()); }

  static MemoryBank random_init(int n, int d, double momentum, Owner owner,
                                RngStream& rng);
};

struct ContrastiveBatchResult {
  double loss = 0.0;
  Vec positive_similarities;      // one per anchor
  Vec per_anchor_bounds;          // InfoNCE bound terms, each <= log(#contrast)
  double mi_lower_bound_estimate = 0.0;
};

struct InBatchGrads {
  Mat d_teacher;
  Mat d_student;
};

// Exact in-batch InfoNCE over b positives and b-1 in-batch negatives per
// anchor, teacher rows anchoring student rows:
//   loss = -(1/b) sum_i log[ e^{s_ii/tau} / ((1/b) sum_j e^{s_ij/tau}) ]
// Minimizing the loss maximizes the MI lower bound. tau = 1 recovers the
// unscaled estimator.
ContrastiveBatchResult infonce_in_batch(const HolisticEmbedding& teacher_emb,
                                        const HolisticEmbedding& student_emb,
                                        double contrast_temperature,
                                        InBatchGrads* grads = nullptr);

struct BankSideGrads {
  Mat d_anchor;
  Mat d_positive;
  Mat d_theta0;  // projector gradient via the projected negatives
};

// One direction of the memory-bank loss: each anchor row i is contrasted
// against its positive row and n_negatives bank rows j != batch_indices[i],
// projected into the embedding space via `projector` (Theta_0). Negatives are
// sampled without replacement from RngStream(seed), anchors in batch order;
// n_negatives == N-1 uses every other bank row in ascending index order.
ContrastiveBatchResult infonce_with_bank(
    const HolisticEmbedding& anchor_emb, const HolisticEmbedding& positive_emb,
    const MemoryBank& bank, const EncoderWeights& projector,
    const std::vector<int>& batch_indices, int n_negatives,
    double contrast_temperature, uint64_t seed, BankSideGrads* grads = nullptr);

// Ablation variant whose bank stores graph-based embedding rows directly;
// negatives are bank rows used as-is, no projection.
ContrastiveBatchResult graph_bank_variant(
    const HolisticEmbedding& anchor_emb, const HolisticEmbedding& positive_emb,
    const MemoryBank& bank, const std::vector<int>& batch_indices,
    int n_negatives, double contrast_temperature, uint64_t seed,
    BankSideGrads* grads = nullptr);

struct SymmetricBankGrads {
  Mat d_teacher;
  Mat d_student;
  Mat d_theta_t0;
  Mat d_theta_s0;
};

// Both symmetric terms of the approximate holistic loss: teacher-anchored
// against the student bank plus student-anchored against the teacher bank.
// Negative draws use substreams "bank.t_anchor" and "bank.s_anchor" of
// `seed`. per_anchor_bounds holds both sides' bounds (2b entries).
ContrastiveBatchResult holistic_bank_loss(
    const HolisticEmbedding& teacher_emb, const HolisticEmbedding& student_emb,
    const MemoryBank& teacher_bank, const MemoryBank& student_bank,
    const EncoderWeights& teacher_projector,
    const EncoderWeights& student_projector,
    const std::vector<int>& batch_indices, int n_negatives,
    double contrast_temperature, uint64_t seed,
    SymmetricBankGrads* grads = nullptr, bool banks_store_embeddings = false);

// entry_i <- normalize(m * entry_i + (1-m) * normalize(new_feature_i)) for
// each touched index; all other rows stay bit-identical.
void bank_update(MemoryBank& bank, const std::vector<int>& batch_indices,
                 const Mat& new_features);

struct PairGrads {
  Mat d_teacher;
  Mat d_student;
};

// Mean of squared elementwise differences.
double mse_alignment_loss(const Mat& teacher_emb, const Mat& student_emb,
                          PairGrads* grads = nullptr);

// Jensen-Shannon-style contrastive objective over in-batch pairs with a
// softplus discriminator on cosine similarities:
//   (1/b) sum_i softplus(-s_ii/tau) + (1/(b(b-1))) sum_{i!=j} softplus(s_ij/tau)
double jsd_in_batch_loss(const HolisticEmbedding& teacher_emb,
                         const HolisticEmbedding& student_emb,
                         double contrast_temperature,
                         PairGrads* grads = nullptr);

}  // namespace hkd::contrastive
