#include <doctest.h>

#include "hkd/contrastive.hpp"
#include "hkd/rng.hpp"
#include "oracles.hpp"

using namespace hkd;
using contrastive::MemoryBank;
using encoder::EncoderWeights;
using encoder::HolisticEmbedding;

namespace {

HolisticEmbedding unit_embedding(int b, int g, uint64_t seed) {
  RngStream rng(seed);
  HolisticEmbedding e;
  e.vectors = oracle::unit_rows(oracle::random_matrix(b, g, rng));
  e.normalized = true;
  return e;
}

EncoderWeights identityish_projector(int d, int g, uint64_t seed) {
  RngStream rng(seed);
  return EncoderWeights::random(0, d, g, rng);
}

MemoryBank seeded_bank(int n, int d, double momentum, uint64_t seed) {
  RngStream rng(seed);
  return MemoryBank::random_init(n, d, momentum,
                                 MemoryBank::Owner::Student, rng);
}

}  // namespace

TEST_CASE("infonce in batch: degenerate single-instance batch has zero loss") {
  auto t = unit_embedding(1, 4, 1);
  auto s = unit_embedding(1, 4, 2);
  auto r = contrastive::infonce_in_batch(t, s, 1.0);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("infonce in batch: 2x2 orthonormal case vs closed-form oracle") {
  HolisticEmbedding t, s;
  t.vectors = Mat::Identity(2, 2);
  s.vectors = Mat::Identity(2, 2);
  t.normalized = s.normalized = true;
  auto r = contrastive::infonce_in_batch(t, s, 1.0);
  // per anchor: log[ e^1 / ((e^1 + e^0)/2) ], by hand
  double term = std::log(std::exp(1.0) / ((std::exp(1.0) + 1.0) / 2.0));
  CHECK(r.loss == doctest::Approx(-term).epsilon(1e-12));
  CHECK(r.mi_lower_bound_estimate == doctest::Approx(term).epsilon(1e-12));
  CHECK(r.positive_similarities(0) == doctest::Approx(1.0));
}

TEST_CASE("infonce in batch: matches the enumeration oracle on random batches") {
  RngStream rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    int b = 2 + static_cast<int>(rng.bounded(7));
    int g = 2 + static_cast<int>(rng.bounded(6));
    auto t = unit_embedding(b, g, rng.next_u64());
    auto s = unit_embedding(b, g, rng.next_u64());
    double tau = trial % 2 ? 1.0 : 0.37;
    auto r = contrastive::infonce_in_batch(t, s, tau);
    double expect = oracle::infonce_in_batch(t.vectors, s.vectors, tau);
    CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("infonce in batch: joint permutation invariance") {
  RngStream rng(4);
  const int b = 6;
  auto t = unit_embedding(b, 5, 41);
  auto s = unit_embedding(b, 5, 42);
  double base = contrastive::infonce_in_batch(t, s, 0.5).loss;

  std::vector<int> perm(b);
  for (int i = 0; i < b; ++i) perm[i] = i;
  rng.shuffle(perm);
  HolisticEmbedding tp = t, sp = s;
  for (int i = 0; i < b; ++i) {
    tp.vectors.row(i) = t.vectors.row(perm[i]);
    sp.vectors.row(i) = s.vectors.row(perm[i]);
  }
  CHECK(contrastive::infonce_in_batch(tp, sp, 0.5).loss ==
        doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("infonce in batch: bound terms never exceed log b") {
  RngStream rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    int b = 2 + static_cast<int>(rng.bounded(8));
    auto t = unit_embedding(b, 4, rng.next_u64());
    auto s = unit_embedding(b, 4, rng.next_u64());
    auto r = contrastive::infonce_in_batch(t, s, 0.2);
    for (int i = 0; i < b; ++i)
      CHECK(r.per_anchor_bounds(i) <= std::log(static_cast<double>(b)) + 1e-12);
  }
}

TEST_CASE("infonce in batch: errors") {
  auto t = unit_embedding(3, 4, 6);
  auto s = unit_embedding(3, 4, 7);
  HolisticEmbedding bad = t;
  bad.vectors *= 1.5;
  CHECK_THROWS_AS(contrastive::infonce_in_batch(bad, s, 1.0), InvalidArgument);
  CHECK_THROWS_AS(contrastive::infonce_in_batch(t, s, 0.0), InvalidArgument);
  HolisticEmbedding empty;
  empty.vectors = Mat(0, 4);
  CHECK_THROWS_AS(contrastive::infonce_in_batch(empty, empty, 1.0),
                  InvalidArgument);
}

TEST_CASE("infonce in batch: gradients match finite differences") {
  auto t = unit_embedding(4, 3, 8);
  auto s = unit_embedding(4, 3, 9);
  contrastive::InBatchGrads g;
  contrastive::infonce_in_batch(t, s, 0.5, &g);
  for (Mat* m : {&t.vectors, &s.vectors}) {
    Mat& grad = (m == &t.vectors) ? g.d_teacher : g.d_student;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) {
        double fd = oracle::fd_gradient(
            [&] { return contrastive::infonce_in_batch(t, s, 0.5).loss; },
            (*m)(i, j));
        CHECK(oracle::rel_err(grad(i, j), fd) < 1e-4);
      }
  }
}

TEST_CASE("infonce in batch: aligned student minimizes the loss empirically") {
  // gradient descent over the student from random starts approaches the
  // aligned configuration's loss
  auto t = unit_embedding(3, 4, 10);
  HolisticEmbedding aligned = t;
  double aligned_loss = contrastive::infonce_in_batch(t, aligned, 1.0).loss;

  RngStream rng(11);
  for (int start = 0; start < 3; ++start) {
    HolisticEmbedding s = unit_embedding(3, 4, rng.next_u64());
    for (int it = 0; it < 4000; ++it) {
      contrastive::InBatchGrads g;
      contrastive::infonce_in_batch(t, s, 1.0, &g);
      s.vectors -= 0.5 * g.d_student;
      s.vectors = normalize_rows(s.vectors);
    }
    double final_loss = contrastive::infonce_in_batch(t, s, 1.0).loss;
    CHECK(final_loss <= aligned_loss + 1e-3);
  }
}

TEST_CASE("infonce with bank: zero negatives means zero loss") {
  auto anchor = unit_embedding(3, 4, 12);
  auto positive = unit_embedding(3, 4, 13);
  auto bank = seeded_bank(6, 5, 0.5, 14);
  auto proj = identityish_projector(5, 4, 15);
  auto r = contrastive::infonce_with_bank(anchor, positive, bank, proj,
                                          {0, 2, 4}, 0, 1.0, 7);
  CHECK(r.loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("infonce with bank: all-negatives case matches the enumeration oracle") {
  auto anchor = unit_embedding(2, 4, 16);
  auto positive = unit_embedding(2, 4, 17);
  auto bank = seeded_bank(4, 5, 0.5, 18);
  auto proj = identityish_projector(5, 4, 19);
  std::vector<int> idx = {1, 3};

  auto r = contrastive::infonce_with_bank(anchor, positive, bank, proj, idx, 3,
                                          1.0, 7);

  // oracle: project the bank by scalar loops, then enumerate every term
  Mat projected(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int o = 0; o < 4; ++o) {
      double v = 0;
      for (int c = 0; c < 5; ++c) v += bank.entries(i, c) * proj.hop_weights[0](c, o);
      projected(i, o) = v;
    }
  }
  projected = oracle::unit_rows(projected);
  double expect = oracle::bank_side(anchor.vectors, positive.vectors, projected,
                                    oracle::all_negatives(idx, 4), 1.0);
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("infonce with bank: uniform similarities make the loss tau-invariant") {
  HolisticEmbedding anchor, positive;
  anchor.vectors = Mat::Zero(2, 3);
  anchor.vectors.col(0).setOnes();
  positive = anchor;
  anchor.normalized = positive.normalized = true;
  MemoryBank bank;
  bank.momentum = 0.5;
  bank.entries = Mat::Zero(5, 3);
  bank.entries.col(0).setOnes();  // every similarity is 1 after projection
  EncoderWeights proj;
  proj.hop_weights = {Mat::Identity(3, 3)};

  double l1 = contrastive::infonce_with_bank(anchor, positive, bank, proj,
                                             {0, 1}, 3, 1.0, 5)
                  .loss;
  double l2 = contrastive::infonce_with_bank(anchor, positive, bank, proj,
                                             {0, 1}, 3, 2.0, 5)
                  .loss;
  CHECK(l1 == doctest::Approx(std::log(4.0)).epsilon(1e-12));
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
}

TEST_CASE("infonce with bank: errors") {
  auto anchor = unit_embedding(2, 4, 20);
  auto positive = unit_embedding(2, 4, 21);
  auto bank = seeded_bank(4, 5, 0.5, 22);
  auto proj = identityish_projector(5, 4, 23);
  CHECK_THROWS_AS(contrastive::infonce_with_bank(anchor, positive, bank, proj,
                                                 {0, 9}, 2, 1.0, 7),
                  InvalidArgument);
  CHECK_THROWS_AS(contrastive::infonce_with_bank(anchor, positive, bank, proj,
                                                 {0, 1}, 4, 1.0, 7),
                  InvalidArgument);
}

TEST_CASE("infonce with bank: gradients (incl. projector) match finite differences") {
  auto anchor = unit_embedding(3, 4, 24);
  auto positive = unit_embedding(3, 4, 25);
  auto bank = seeded_bank(6, 5, 0.5, 26);
  auto proj = identityish_projector(5, 4, 27);
  std::vector<int> idx = {0, 2, 5};

  contrastive::BankSideGrads g;
  contrastive::infonce_with_bank(anchor, positive, bank, proj, idx, 3, 0.7,
                                 99, &g);
  auto scalar = [&] {
    return contrastive::infonce_with_bank(anchor, positive, bank, proj, idx, 3,
                                          0.7, 99)
        .loss;
  };
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j) {
      CHECK(oracle::rel_err(g.d_anchor(i, j),
                            oracle::fd_gradient(scalar, anchor.vectors(i, j))) <
            1e-4);
      CHECK(oracle::rel_err(g.d_positive(i, j),
                            oracle::fd_gradient(scalar, positive.vectors(i, j))) <
            1e-4);
    }
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) {
      double fd = oracle::fd_gradient(scalar, proj.hop_weights[0](i, j));
      CHECK(oracle::rel_err(g.d_theta0(i, j), fd) < 1e-4);
    }
}

TEST_CASE("graph bank variant: bank frozen to the batch equals in-batch up to log b") {
  auto t = unit_embedding(4, 5, 28);
  auto s = unit_embedding(4, 5, 29);
  MemoryBank bank;
  bank.momentum = 1.0;
  bank.entries = s.vectors;  // the student's own graph embeddings
  std::vector<int> idx = {0, 1, 2, 3};

  auto bank_r = contrastive::graph_bank_variant(t, s, bank, idx, 3, 1.0, 7);
  auto batch_r = contrastive::infonce_in_batch(t, s, 1.0);
  CHECK(bank_r.loss ==
        doctest::Approx(batch_r.loss + std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("graph bank variant: zero negatives and enumeration oracle") {
  auto t = unit_embedding(3, 4, 30);
  auto s = unit_embedding(3, 4, 31);
  MemoryBank bank = seeded_bank(5, 4, 0.5, 32);
  std::vector<int> idx = {0, 2, 4};
  CHECK(contrastive::graph_bank_variant(t, s, bank, idx, 0, 1.0, 7).loss ==
        doctest::Approx(0.0));

  auto r = contrastive::graph_bank_variant(t, s, bank, idx, 4, 1.0, 7);
  double expect = oracle::bank_side(t.vectors, s.vectors, bank.entries,
                                    oracle::all_negatives(idx, 5), 1.0);
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("holistic bank loss sums both symmetric directions") {
  auto t = unit_embedding(3, 4, 33);
  auto s = unit_embedding(3, 4, 34);
  auto bank_t = seeded_bank(6, 5, 0.5, 35);
  auto bank_s = seeded_bank(6, 5, 0.5, 36);
  auto proj_t = identityish_projector(5, 4, 37);
  auto proj_s = identityish_projector(5, 4, 38);
  std::vector<int> idx = {1, 3, 5};

  auto both = contrastive::holistic_bank_loss(t, s, bank_t, bank_s, proj_t,
                                              proj_s, idx, 5, 1.0, 777);

  // oracle: both Eq-style terms with scalar-loop projections, all negatives
  auto project = [](const MemoryBank& bank, const EncoderWeights& w) {
    Mat out(bank.entries.rows(), w.hop_weights[0].cols());
    for (int i = 0; i < out.rows(); ++i)
      for (int o = 0; o < out.cols(); ++o) {
        double v = 0;
        for (int c = 0; c < bank.entries.cols(); ++c)
          v += bank.entries(i, c) * w.hop_weights[0](c, o);
        out(i, o) = v;
      }
    return oracle::unit_rows(out);
  };
  double expect =
      oracle::bank_side(t.vectors, s.vectors, project(bank_s, proj_s),
                        oracle::all_negatives(idx, 6), 1.0) +
      oracle::bank_side(s.vectors, t.vectors, project(bank_t, proj_t),
                        oracle::all_negatives(idx, 6), 1.0);
  CHECK(both.loss == doctest::Approx(expect).epsilon(1e-12));
  CHECK(both.per_anchor_bounds.size() == 6);
}

TEST_CASE("bank update: momentum endpoints and the hand-computed midpoint") {
  MemoryBank bank = seeded_bank(4, 2, 0.0, 40);
  Mat f(1, 2);
  f << 0, 2;

  SUBCASE("momentum zero replaces the entry with the normalized feature") {
    bank.momentum = 0.0;
    contrastive::bank_update(bank, {2}, f);
    CHECK(bank.entries(2, 0) == doctest::Approx(0.0));
    CHECK(bank.entries(2, 1) == doctest::Approx(1.0));
  }
  SUBCASE("momentum one freezes the bank bit-identically") {
    bank.momentum = 1.0;
    Mat before = bank.entries;
    contrastive::bank_update(bank, {2}, f);
    CHECK((bank.entries - before).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("momentum half blends and renormalizes") {
    bank.momentum = 0.5;
    bank.entries.row(2) << 1, 0;
    contrastive::bank_update(bank, {2}, f);
    CHECK(bank.entries(2, 0) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
    CHECK(bank.entries(2, 1) == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));
  }
}

TEST_CASE("bank update: preserves unit norms, leaves other rows bit-identical") {
  RngStream rng(41);
  MemoryBank bank = seeded_bank(10, 6, 0.5, 42);
  Mat before = bank.entries;
  Mat feats = oracle::random_matrix(3, 6, rng);
  contrastive::bank_update(bank, {1, 4, 7}, feats);
  for (int i = 0; i < 10; ++i) {
    CHECK(bank.entries.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
    if (i != 1 && i != 4 && i != 7)
      CHECK((bank.entries.row(i) - before.row(i)).cwiseAbs().maxCoeff() == 0.0);
  }
  CHECK_THROWS_AS(contrastive::bank_update(bank, {11}, feats.topRows(1)),
                  InvalidArgument);
}

TEST_CASE("mse alignment loss: fixed points and oracle") {
  RngStream rng(43);
  Mat a = oracle::random_matrix(4, 5, rng);
  CHECK(contrastive::mse_alignment_loss(a, a) == doctest::Approx(0.0));
  Mat b = a.array() + 1.0;
  CHECK(contrastive::mse_alignment_loss(a, b) == doctest::Approx(1.0));
  Mat c = oracle::random_matrix(4, 5, rng);
  CHECK(contrastive::mse_alignment_loss(a, c) ==
        doctest::Approx(oracle::mse(a, c)).epsilon(1e-12));
  CHECK_THROWS_AS(contrastive::mse_alignment_loss(a, Mat::Zero(3, 5)),
                  InvalidArgument);

  contrastive::PairGrads g;
  contrastive::mse_alignment_loss(a, c, &g);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 5; ++j) {
      double fd = oracle::fd_gradient(
          [&] { return contrastive::mse_alignment_loss(a, c); }, a(i, j));
      CHECK(oracle::rel_err(g.d_teacher(i, j), fd) < 1e-5);
    }
}

TEST_CASE("jsd loss: ordering, closed form, invariance, errors") {
  HolisticEmbedding t, s_good, s_bad;
  t.vectors = Mat::Identity(2, 2);
  s_good.vectors = Mat::Identity(2, 2);
  s_bad.vectors = Mat(2, 2);
  s_bad.vectors << 0, 1, 1, 0;  // positives dissimilar, negatives similar
  t.normalized = s_good.normalized = s_bad.normalized = true;

  double good = contrastive::jsd_in_batch_loss(t, s_good, 1.0);
  double bad = contrastive::jsd_in_batch_loss(t, s_bad, 1.0);
  CHECK(good < bad);

  // closed form oracle for the orthonormal case
  CHECK(good == doctest::Approx(oracle::jsd(t.vectors, s_good.vectors, 1.0))
                    .epsilon(1e-12));

  auto t5 = unit_embedding(5, 3, 44);
  auto s5 = unit_embedding(5, 3, 45);
  CHECK(contrastive::jsd_in_batch_loss(t5, s5, 0.8) ==
        doctest::Approx(oracle::jsd(t5.vectors, s5.vectors, 0.8)).epsilon(1e-12));

  auto t1 = unit_embedding(1, 3, 46);
  CHECK_THROWS_AS(contrastive::jsd_in_batch_loss(t1, t1, 1.0), InvalidArgument);

  contrastive::PairGrads g;
  contrastive::jsd_in_batch_loss(t5, s5, 0.8, &g);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) {
      double fd = oracle::fd_gradient(
          [&] { return contrastive::jsd_in_batch_loss(t5, s5, 0.8); },
          s5.vectors(i, j));
      CHECK(oracle::rel_err(g.d_student(i, j), fd) < 1e-4);
    }
}

TEST_CASE("memory bank: random init rows are unit and momentum validated") {
  RngStream rng(47);
  auto bank = MemoryBank::random_init(8, 5, 0.5, MemoryBank::Owner::Teacher, rng);
  for (int i = 0; i < 8; ++i)
    CHECK(bank.entries.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(
      MemoryBank::random_init(8, 5, 1.5, MemoryBank::Owner::Teacher, rng),
      InvalidArgument);
}
