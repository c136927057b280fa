#include <doctest.h>

#include "hkd/models.hpp"
#include "hkd/nn.hpp"
#include "hkd/rng.hpp"
#include "oracles.hpp"

using namespace hkd;

namespace {

// FD check of d(sum of weighted outputs)/d(param or input) for one layer.
// `weigh` fixes a random projection so the scalar touches every output.
double layer_scalar(nn::Layer& layer, const Mat& x, const Mat& weigh) {
  Mat y = layer.forward(x, true);
  return y.cwiseProduct(weigh).sum();
}

void check_layer_gradients(nn::Layer& layer, Mat x, RngStream& rng,
                           double tol = 1e-5) {
  Mat probe = layer.forward(x, true);
  Mat weigh = oracle::random_matrix(static_cast<int>(probe.rows()),
                                    static_cast<int>(probe.cols()), rng);

  for (nn::Param* p : layer.params()) p->zero_grad();
  layer.forward(x, true);
  Mat dx = layer.backward(weigh);

  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) {
      double fd = oracle::fd_gradient([&] { return layer_scalar(layer, x, weigh); },
                                      x(i, j));
      CHECK(oracle::rel_err(dx(i, j), fd) < tol);
    }

  for (nn::Param* p : layer.params()) {
    for (int i = 0; i < p->value.rows(); ++i)
      for (int j = 0; j < p->value.cols(); ++j) {
        double fd = oracle::fd_gradient(
            [&] { return layer_scalar(layer, x, weigh); }, p->value(i, j));
        double analytic = p->grad(i, j);
        CHECK(oracle::rel_err(analytic, fd) < tol);
      }
  }
}

}  // namespace

TEST_CASE("conv2d matches finite differences") {
  RngStream rng(7);
  nn::Shape in{2, 5, 5};
  nn::Conv2d conv("c", in, 3, 3, 1, 1, 1, rng);
  Mat x = oracle::random_matrix(2, in.size(), rng);
  check_layer_gradients(conv, x, rng);
}

TEST_CASE("strided conv2d matches finite differences") {
  RngStream rng(8);
  nn::Shape in{3, 6, 6};
  nn::Conv2d conv("c", in, 4, 3, 2, 1, 1, rng);
  Mat x = oracle::random_matrix(2, in.size(), rng);
  check_layer_gradients(conv, x, rng);
}

TEST_CASE("grouped (depthwise) conv2d matches finite differences") {
  RngStream rng(9);
  nn::Shape in{4, 5, 5};
  nn::Conv2d conv("c", in, 4, 3, 1, 1, 4, rng);
  Mat x = oracle::random_matrix(2, in.size(), rng);
  check_layer_gradients(conv, x, rng);
}

TEST_CASE("pointwise conv2d matches finite differences") {
  RngStream rng(10);
  nn::Shape in{4, 4, 4};
  nn::Conv2d conv("c", in, 6, 1, 1, 0, 1, rng);
  Mat x = oracle::random_matrix(2, in.size(), rng);
  check_layer_gradients(conv, x, rng);
}

TEST_CASE("linear matches finite differences") {
  RngStream rng(11);
  nn::Linear lin("l", 7, 4, rng);
  Mat x = oracle::random_matrix(3, 7, rng);
  check_layer_gradients(lin, x, rng);
}

TEST_CASE("maxpool and global pool match finite differences") {
  RngStream rng(12);
  nn::Shape in{2, 4, 4};
  nn::MaxPool2d pool(in);
  Mat x = oracle::random_matrix(2, in.size(), rng);
  check_layer_gradients(pool, x, rng);

  nn::GlobalAvgPool gap(in);
  check_layer_gradients(gap, x, rng);
}

TEST_CASE("residual block matches finite differences") {
  RngStream rng(13);
  nn::Shape in{3, 4, 4};
  SUBCASE("identity skip") {
    nn::ResidualBlock block("b", in, 3, 1, rng);
    Mat x = oracle::random_matrix(2, in.size(), rng);
    check_layer_gradients(block, x, rng);
  }
  SUBCASE("projected skip with stride") {
    nn::ResidualBlock block("b", in, 5, 2, rng);
    Mat x = oracle::random_matrix(2, in.size(), rng);
    check_layer_gradients(block, x, rng);
  }
}

TEST_CASE("softmax cross entropy value and gradient") {
  RngStream rng(14);
  Mat logits = oracle::random_matrix(4, 5, rng);
  std::vector<int> labels = {1, 0, 4, 2};
  auto r = nn::softmax_cross_entropy(logits, labels);

  double expect = 0;
  Mat p = oracle::softmax(logits, 1.0);
  for (int i = 0; i < 4; ++i) expect -= std::log(p(i, labels[i]));
  expect /= 4;
  CHECK(r.loss == doctest::Approx(expect).epsilon(1e-12));

  for (int i = 0; i < logits.rows(); ++i)
    for (int j = 0; j < logits.cols(); ++j) {
      double fd = oracle::fd_gradient(
          [&] { return nn::softmax_cross_entropy(logits, labels).loss; },
          logits(i, j));
      CHECK(oracle::rel_err(r.d_logits(i, j), fd) < 1e-5);
    }
}

TEST_CASE("backbone backward combines feature and logit gradients") {
  RngStream rng(15);
  models::Backbone net("small-convnet-S", nn::Shape{3, 8, 8}, 3, 99);
  Mat x = oracle::random_matrix(2, 3 * 8 * 8, rng, 0.5);

  Mat wf = oracle::random_matrix(2, net.feature_dim(), rng);
  Mat wl = oracle::random_matrix(2, net.num_classes(), rng);
  auto scalar = [&] {
    auto out = net.forward(x, true);
    return out.features.cwiseProduct(wf).sum() +
           out.logits.cwiseProduct(wl).sum();
  };

  net.zero_grads();
  net.forward(x, true);
  net.backward(wf, wl);

  int checked = 0;
  for (nn::Param* p : net.params()) {
    for (int i = 0; i < p->value.rows() && checked < 200; ++i)
      for (int j = 0; j < p->value.cols() && checked < 200; j += 3) {
        double fd = oracle::fd_gradient(scalar, p->value(i, j));
        CHECK(oracle::rel_err(p->grad(i, j), fd) < 1e-4);
        ++checked;
      }
  }
  CHECK(checked > 0);
}
