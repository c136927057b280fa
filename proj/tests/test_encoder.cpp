#include <doctest.h>

#include "hkd/encoder.hpp"
#include "hkd/graph.hpp"
#include "hkd/rng.hpp"
#include "oracles.hpp"

using namespace hkd;
using encoder::EncoderWeights;

namespace {

EncoderWeights random_weights(int hops, int d, int g, uint64_t seed) {
  RngStream rng(seed);
  return EncoderWeights::random(hops, d, g, rng);
}

}  // namespace

TEST_CASE("tagcn with L=0 ignores the adjacency and equals the projection") {
  RngStream rng(1);
  Mat feats = oracle::random_matrix(5, 3, rng);
  auto w = random_weights(0, 3, 4, 11);

  Mat ahat1 = Mat::Identity(5, 5);
  Mat ahat2 = oracle::normalized_adjacency(oracle::random_graph_replay(5, 2, 3));
  auto out1 = encoder::tagcn_forward(ahat1, feats, w, 0);
  auto out2 = encoder::tagcn_forward(ahat2, feats, w, 0);
  auto proj = encoder::project_features(feats, w);
  CHECK((out1.vectors - out2.vectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK((out1.vectors - proj.vectors).cwiseAbs().maxCoeff() == 0.0);
  CHECK(out1.normalized);
}

TEST_CASE("tagcn with identity adjacency and L=1 sums the hop weights") {
  RngStream rng(2);
  Mat feats = oracle::random_matrix(4, 3, rng);
  auto w = random_weights(1, 3, 5, 12);
  auto out = encoder::tagcn_forward(Mat::Identity(4, 4), feats, w, 1);
  Mat expect = normalize_rows(feats * (w.hop_weights[0] + w.hop_weights[1]));
  CHECK((out.vectors - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tagcn on a 3-node path matches the term-by-term oracle") {
  Mat adj = Mat::Zero(3, 3);
  adj(0, 1) = adj(1, 0) = 1;
  adj(1, 2) = adj(2, 1) = 1;
  Mat ahat = graph::normalize_adjacency(adj);

  Mat feats(3, 2);
  feats << 1.0, -0.5, 0.25, 2.0, -1.5, 0.75;
  EncoderWeights w;
  Mat t0(2, 2), t1(2, 2);
  t0 << 0.5, -1.0, 0.25, 0.75;
  t1 << -0.3, 0.6, 1.1, -0.2;
  w.hop_weights = {t0, t1};

  auto out = encoder::tagcn_forward(ahat, feats, w, 1);
  Mat expect = oracle::tagcn(ahat, feats, {t0, t1});
  CHECK((out.vectors - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("tagcn errors on mismatched dimensions and hop counts") {
  RngStream rng(3);
  Mat feats = oracle::random_matrix(4, 3, rng);
  auto w = random_weights(1, 3, 4, 13);
  CHECK_THROWS_AS(encoder::tagcn_forward(Mat::Identity(4, 4), feats, w, 2),
                  InvalidArgument);
  CHECK_THROWS_AS(encoder::tagcn_forward(Mat::Identity(4, 4), feats, w, -1),
                  InvalidArgument);
  Mat wrong = oracle::random_matrix(4, 5, rng);
  CHECK_THROWS_AS(encoder::tagcn_forward(Mat::Identity(4, 4), wrong, w, 1),
                  InvalidArgument);
  CHECK_THROWS_AS(encoder::tagcn_forward(Mat::Identity(3, 3), feats, w, 1),
                  InvalidArgument);
}

TEST_CASE("tagcn permutation equivariance") {
  RngStream rng(4);
  const int b = 6;
  Mat adj = oracle::random_graph_replay(b, 2, 77);
  Mat ahat = graph::normalize_adjacency(adj);
  Mat feats = oracle::random_matrix(b, 4, rng);
  auto w = random_weights(1, 4, 3, 14);
  auto base = encoder::tagcn_forward(ahat, feats, w, 1);

  std::vector<int> perm(b);
  for (int i = 0; i < b; ++i) perm[i] = i;
  rng.shuffle(perm);
  Mat pa(b, b), pf(b, feats.cols());
  for (int i = 0; i < b; ++i) {
    pf.row(i) = feats.row(perm[i]);
    for (int j = 0; j < b; ++j) pa(i, j) = ahat(perm[i], perm[j]);
  }
  auto permuted = encoder::tagcn_forward(pa, pf, w, 1);
  for (int i = 0; i < b; ++i)
    CHECK((permuted.vectors.row(i) - base.vectors.row(perm[i]))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
}

TEST_CASE("tagcn output stays finite under degenerate inputs") {
  auto w = random_weights(1, 3, 4, 15);
  Mat feats = Mat::Zero(4, 3);  // zero rows hit the normalization guard
  auto out = encoder::tagcn_forward(Mat::Identity(4, 4), feats, w, 1);
  CHECK(all_finite(out.vectors));
}

TEST_CASE("pooling: mean over the complete graph averages the other rows") {
  Mat adj =
      graph::build_ablation_adjacency(3, graph::GraphMode::FullyConnected, 0, 0);
  Mat feats = Mat::Identity(3, 3);
  auto ctx = encoder::pooling_forward_cached(adj, feats, encoder::PoolMode::Mean);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(ctx.aggregate(i, j) == doctest::Approx(i == j ? 0.0 : 0.5));
  CHECK((ctx.out.vectors - oracle::pooling(adj, feats, true)).cwiseAbs().maxCoeff() <
        1e-12);
}

TEST_CASE("pooling: sum over a single edge swaps the endpoint features") {
  Mat adj = Mat::Zero(2, 2);
  adj(0, 1) = adj(1, 0) = 1;
  Mat feats(2, 3);
  feats << 1, 2, 3, 4, 5, 6;
  auto ctx = encoder::pooling_forward_cached(adj, feats, encoder::PoolMode::Sum);
  CHECK((ctx.aggregate.row(0) - feats.row(1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK((ctx.aggregate.row(1) - feats.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("pooling: seeded graph matches the adjacency-walk oracle") {
  RngStream rng(5);
  Mat adj = oracle::random_graph_replay(6, 2, 99);
  Mat feats = oracle::random_matrix(6, 4, rng);
  for (auto mode : {encoder::PoolMode::Sum, encoder::PoolMode::Mean}) {
    auto out = encoder::pooling_forward(adj, feats, mode);
    Mat expect = oracle::pooling(adj, feats, mode == encoder::PoolMode::Mean);
    CHECK((out.vectors - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pooling: zero-degree node errors in mean mode") {
  Mat adj = Mat::Zero(3, 3);
  adj(0, 1) = adj(1, 0) = 1;
  Mat feats = Mat::Ones(3, 2);
  CHECK_THROWS_AS(encoder::pooling_forward(adj, feats, encoder::PoolMode::Mean),
                  InvalidArgument);
  CHECK_THROWS_AS(encoder::parse_pool_mode("median"), InvalidArgument);
}

TEST_CASE("project_features: identity weights pass unit rows through") {
  EncoderWeights w;
  w.hop_weights = {Mat::Identity(3, 3)};
  RngStream rng(6);
  Mat feats = normalize_rows(oracle::random_matrix(4, 3, rng));
  auto out = encoder::project_features(feats, w);
  CHECK((out.vectors - feats).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("project_features: rows are unit-norm and match tagcn L=0 bitwise") {
  RngStream rng(7);
  Mat feats = oracle::random_matrix(5, 4, rng);
  auto w = random_weights(0, 4, 6, 16);
  auto proj = encoder::project_features(feats, w);
  for (int i = 0; i < proj.vectors.rows(); ++i)
    CHECK(proj.vectors.row(i).norm() == doctest::Approx(1.0).epsilon(1e-9));
  auto tag = encoder::tagcn_forward(Mat::Identity(5, 5), feats, w, 0);
  CHECK((proj.vectors - tag.vectors).cwiseAbs().maxCoeff() == 0.0);

  Mat wrong = oracle::random_matrix(5, 3, rng);
  CHECK_THROWS_AS(encoder::project_features(wrong, w), InvalidArgument);
}

TEST_CASE("encoder weights validate shape agreement and finiteness") {
  EncoderWeights w;
  w.hop_weights = {Mat::Identity(3, 3), Mat::Identity(2, 2)};
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
  w.hop_weights = {Mat::Identity(3, 3)};
  w.hop_weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(w.validate(), InvalidArgument);
}

TEST_CASE("tagcn gradients match finite differences") {
  RngStream rng(8);
  const int b = 4, d = 3, g = 6;
  Mat adj = oracle::random_graph_replay(b, 2, 55);
  Mat ahat = graph::normalize_adjacency(adj);
  Mat feats = oracle::random_matrix(b, d, rng);
  auto w = random_weights(1, d, g, 17);
  Mat weigh = oracle::random_matrix(b, g, rng);

  auto scalar = [&] {
    return encoder::tagcn_forward(ahat, feats, w, 1)
        .vectors.cwiseProduct(weigh)
        .sum();
  };

  auto ctx = encoder::tagcn_forward_cached(ahat, feats, w, 1);
  auto grads = encoder::tagcn_backward(ctx, ahat, w, weigh);

  for (int l = 0; l <= 1; ++l)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < g; ++j) {
        double fd = oracle::fd_gradient(scalar, w.hop_weights[l](i, j));
        CHECK(oracle::rel_err(grads.d_theta[l](i, j), fd) < 1e-4);
      }
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < d; ++j) {
      double fd = oracle::fd_gradient(scalar, feats(i, j));
      CHECK(oracle::rel_err(grads.d_features(i, j), fd) < 1e-4);
    }
}

TEST_CASE("pooling + projection gradients match finite differences") {
  RngStream rng(9);
  const int b = 5, d = 3, g = 4;
  Mat adj = oracle::random_graph_replay(b, 2, 66);
  Mat feats = oracle::random_matrix(b, d, rng);
  auto w = random_weights(0, d, g, 18);
  Mat weigh = oracle::random_matrix(b, g, rng);

  for (auto mode : {encoder::PoolMode::Sum, encoder::PoolMode::Mean}) {
    auto scalar = [&] {
      auto pooled = encoder::pooling_forward(adj, feats, mode);
      return encoder::project_features(pooled.vectors, w)
          .vectors.cwiseProduct(weigh)
          .sum();
    };
    auto pool_ctx = encoder::pooling_forward_cached(adj, feats, mode);
    auto proj_ctx = encoder::project_forward_cached(pool_ctx.out.vectors, w);
    auto pg = encoder::project_backward(proj_ctx, w, weigh);
    Mat d_feats = encoder::pooling_backward(pool_ctx, adj, mode, pg.d_features);

    for (int i = 0; i < d; ++i)
      for (int j = 0; j < g; ++j) {
        double fd = oracle::fd_gradient(scalar, w.hop_weights[0](i, j));
        CHECK(oracle::rel_err(pg.d_theta0(i, j), fd) < 1e-4);
      }
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < d; ++j) {
        double fd = oracle::fd_gradient(scalar, feats(i, j));
        CHECK(oracle::rel_err(d_feats(i, j), fd) < 1e-4);
      }
  }
}
