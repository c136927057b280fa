#include <doctest.h>

#include <sstream>

#include "hkd/models.hpp"
#include "hkd/rng.hpp"
#include "oracles.hpp"

using namespace hkd;

TEST_CASE("backbone registry: shapes, determinism, unknown names") {
  RngStream rng(1);
  Mat x = oracle::random_matrix(3, 3 * 16 * 16, rng, 0.5);

  for (const auto& info : models::list_architectures()) {
    auto net = models::build_backbone(info.name, 7, 1234, nn::Shape{3, 16, 16});
    auto out = net->forward(x, false);
    CHECK(out.features.rows() == 3);
    CHECK(out.features.cols() == info.feature_dim);
    CHECK(out.logits.cols() == 7);
    CHECK(all_finite(out.features));
    CHECK(all_finite(out.logits));
    CHECK(net->parameter_count() <= 2'000'000);

    // same (name, seed) twice -> identical initial logits
    auto net2 = models::build_backbone(info.name, 7, 1234, nn::Shape{3, 16, 16});
    CHECK((net2->forward(x, false).logits - out.logits).cwiseAbs().maxCoeff() ==
          0.0);

    // forward is pure given weights and input
    CHECK((net->forward(x, false).logits - out.logits).cwiseAbs().maxCoeff() ==
          0.0);
  }

  CHECK_THROWS_AS(models::build_backbone("resnet-9000", 7, 0, nn::Shape{3, 16, 16}),
                  ConfigError);
}

TEST_CASE("backbones accept the smaller desk input size") {
  RngStream rng(2);
  Mat x = oracle::random_matrix(2, 3 * 12 * 12, rng, 0.5);
  for (const auto& info : models::list_architectures()) {
    auto net = models::build_backbone(info.name, 4, 9, nn::Shape{3, 12, 12});
    auto out = net->forward(x, false);
    CHECK(out.features.cols() == info.feature_dim);
  }
}

TEST_CASE("feature tap sits before the classifier") {
  RngStream rng(3);
  Mat x = oracle::random_matrix(2, 3 * 12 * 12, rng, 0.5);
  models::Backbone a("small-convnet-S", nn::Shape{3, 12, 12}, 5, 42);
  models::Backbone b("small-convnet-S", nn::Shape{3, 12, 12}, 5, 42);

  // perturb only b's classifier
  for (nn::Param* p : b.params())
    if (p->name.rfind("classifier", 0) == 0) p->value.array() += 0.25;

  auto oa = a.forward(x, false);
  auto ob = b.forward(x, false);
  CHECK((oa.features - ob.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK((oa.logits - ob.logits).cwiseAbs().maxCoeff() > 1e-6);
}

TEST_CASE("backbone save/load round trip is bit exact") {
  RngStream rng(4);
  Mat x = oracle::random_matrix(2, 3 * 12 * 12, rng, 0.5);
  models::Backbone net("vgg-8-like", nn::Shape{3, 12, 12}, 6, 77);
  uint64_t hash_before = net.weights_hash();

  std::stringstream buf;
  net.save(buf);
  models::Backbone restored("vgg-8-like", nn::Shape{3, 12, 12}, 6, 1);
  CHECK(restored.weights_hash() != hash_before);
  restored.load(buf);
  CHECK(restored.weights_hash() == hash_before);
  CHECK((restored.forward(x, false).logits - net.forward(x, false).logits)
            .cwiseAbs()
            .maxCoeff() == 0.0);

  std::stringstream buf2;
  net.save(buf2);
  models::Backbone wrong("small-convnet-S", nn::Shape{3, 12, 12}, 6, 1);
  CHECK_THROWS_AS(wrong.load(buf2), InvalidArgument);
}
