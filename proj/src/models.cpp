#include "hkd/models.hpp"

#include <cstring>

#include "hkd/rng.hpp"
#include "hkd/serialize.hpp"

namespace hkd::models {

const std::vector<ArchInfo>& list_architectures() {
  static const std::vector<ArchInfo> archs = {
      {"small-convnet-T", 128, "generic wide CNN teacher"},
      {"small-convnet-S", 32, "generic narrow CNN student"},
      {"resnet-8x4-like", 128, "ResNet8x4"},
      {"resnet-32x4-like", 192, "ResNet32x4"},
      {"vgg-8-like", 128, "VGG8"},
      {"mobilenet-v2-like", 96, "MobileNetV2"},
  };
  return archs;
}

int feature_dim_of(const std::string& arch) {
  for (const auto& a : list_architectures())
    if (a.name == arch) return a.feature_dim;
  throw ConfigError("unknown architecture: " + arch);
}

Backbone::Backbone(const std::string& arch, nn::Shape input_shape,
                   int num_classes, uint64_t seed)
    : arch_(arch), input_shape_(input_shape), num_classes_(num_classes) {
  feature_dim_ = feature_dim_of(arch);  // throws on unknown names
  require(num_classes >= 2, "backbone: need at least two classes");
  require(input_shape.c >= 1 && input_shape.h >= 4 && input_shape.w >= 4,
          "backbone: implausible input shape");
  build(seed);
}

void Backbone::build(uint64_t seed) {
  RngStream rng(seed);
  nn::Shape s = input_shape_;
  auto conv = [&](const std::string& n, int out_c, int k, int stride, int pad,
                  int groups = 1) {
    trunk_.push_back(
        std::make_unique<nn::Conv2d>(n, s, out_c, k, stride, pad, groups, rng));
    s = trunk_.back()->output_shape();
  };
  auto relu = [&] { trunk_.push_back(std::make_unique<nn::ReLU>(s)); };
  auto pool = [&] {
    trunk_.push_back(std::make_unique<nn::MaxPool2d>(s));
    s = trunk_.back()->output_shape();
  };
  auto block = [&](const std::string& n, int out_c, int stride) {
    trunk_.push_back(
        std::make_unique<nn::ResidualBlock>(n, s, out_c, stride, rng));
    s = trunk_.back()->output_shape();
  };

  if (arch_ == "small-convnet-T") {
    conv("conv1", 32, 3, 1, 1); relu();
    pool();
    conv("conv2", 64, 3, 1, 1); relu();
    pool();
    conv("conv3", 128, 3, 1, 1); relu();
  } else if (arch_ == "small-convnet-S") {
    conv("conv1", 16, 3, 1, 1); relu();
    pool();
    conv("conv2", 32, 3, 1, 1); relu();
    pool();
  } else if (arch_ == "resnet-8x4-like") {
    conv("stem", 32, 3, 1, 1); relu();
    block("block1", 32, 1);
    block("block2", 64, 2);
    block("block3", 128, 2);
  } else if (arch_ == "resnet-32x4-like") {
    conv("stem", 48, 3, 1, 1); relu();
    block("block1", 48, 1);
    block("block2", 48, 1);
    block("block3", 96, 2);
    block("block4", 96, 1);
    block("block5", 192, 2);
  } else if (arch_ == "vgg-8-like") {
    conv("conv1", 32, 3, 1, 1); relu();
    pool();
    conv("conv2", 64, 3, 1, 1); relu();
    pool();
    conv("conv3", 128, 3, 1, 1); relu();
    conv("conv4", 128, 3, 1, 1); relu();
  } else if (arch_ == "mobilenet-v2-like") {
    conv("stem", 16, 3, 1, 1); relu();
    conv("dw1", 16, 3, 1, 1, 16);
    conv("pw1", 32, 1, 1, 0); relu();
    pool();
    conv("dw2", 32, 3, 1, 1, 32);
    conv("pw2", 64, 1, 1, 0); relu();
    pool();
    conv("dw3", 64, 3, 1, 1, 64);
    conv("pw3", 96, 1, 1, 0); relu();
  } else {
    throw ConfigError("unknown architecture: " + arch_);
  }

  trunk_.push_back(std::make_unique<nn::GlobalAvgPool>(s));
  require(trunk_.back()->output_shape().size() == feature_dim_,
          "backbone: registry feature width does not match the built trunk");
  classifier_ = std::make_unique<nn::Linear>("classifier", feature_dim_,
                                             num_classes_, rng);
}

BackboneOutput Backbone::forward(const Mat& images, bool train) {
  require(images.cols() == input_shape_.size(),
          "backbone: input width does not match " + std::to_string(input_shape_.c) +
              "x" + std::to_string(input_shape_.h) + "x" +
              std::to_string(input_shape_.w));
  require(all_finite(images), "backbone: non-finite input");
  Mat x = images;
  for (auto& layer : trunk_) x = layer->forward(x, train);
  BackboneOutput out;
  out.features = x;
  out.logits = classifier_->forward(x, train);
  return out;
}

void Backbone::backward(const Mat& d_features, const Mat& d_logits) {
  Mat dx;
  if (d_logits.size() > 0)
    dx = classifier_->backward(d_logits);
  if (d_features.size() > 0)
    dx = dx.size() > 0 ? Mat(dx + d_features) : d_features;
  require(dx.size() > 0, "backbone backward: no incoming gradient");
  for (auto it = trunk_.rbegin(); it != trunk_.rend(); ++it)
    dx = (*it)->backward(dx);
}

std::vector<nn::Param*> Backbone::params() {
  std::vector<nn::Param*> out;
  for (auto& layer : trunk_)
    for (nn::Param* p : layer->params()) out.push_back(p);
  for (nn::Param* p : classifier_->params()) out.push_back(p);
  return out;
}

void Backbone::zero_grads() {
  for (nn::Param* p : params()) p->zero_grad();
}

void Backbone::save(std::ostream& os) const {
  io::write_string(os, arch_);
  io::write_i64(os, input_shape_.c);
  io::write_i64(os, input_shape_.h);
  io::write_i64(os, input_shape_.w);
  io::write_i64(os, num_classes_);
  auto* self = const_cast<Backbone*>(this);
  auto ps = self->params();
  io::write_u64(os, ps.size());
  for (nn::Param* p : ps) {
    io::write_string(os, p->name);
    io::write_mat(os, p->value);
  }
}

void Backbone::load(std::istream& is) {
  std::string arch = io::read_string(is);
  require(arch == arch_, "backbone load: checkpoint is for architecture '" +
                             arch + "', not '" + arch_ + "'");
  nn::Shape shp{static_cast<int>(io::read_i64(is)),
                static_cast<int>(io::read_i64(is)),
                static_cast<int>(io::read_i64(is))};
  require(shp == input_shape_, "backbone load: input shape mismatch");
  int64_t k = io::read_i64(is);
  require(k == num_classes_, "backbone load: class count mismatch");
  auto ps = params();
  uint64_t n = io::read_u64(is);
  require(n == ps.size(), "backbone load: parameter count mismatch");
  for (nn::Param* p : ps) {
    std::string name = io::read_string(is);
    require(name == p->name, "backbone load: expected parameter '" + p->name +
                                 "', found '" + name + "'");
    Mat m = io::read_mat(is);
    require(m.rows() == p->value.rows() && m.cols() == p->value.cols(),
            "backbone load: shape mismatch for " + p->name);
    p->value = m;
  }
}

uint64_t Backbone::weights_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto* self = const_cast<Backbone*>(this);
  for (nn::Param* p : self->params()) {
    for (Eigen::Index i = 0; i < p->value.rows(); ++i)
      for (Eigen::Index j = 0; j < p->value.cols(); ++j) {
        uint64_t bits;
        double v = p->value(i, j);
        std::memcpy(&bits, &v, 8);
        for (int byte = 0; byte < 8; ++byte) {
          h ^= (bits >> (8 * byte)) & 0xff;
          h *= 0x100000001b3ull;
        }
      }
  }
  return h;
}

int64_t Backbone::parameter_count() const {
  int64_t n = 0;
  auto* self = const_cast<Backbone*>(this);
  for (nn::Param* p : self->params()) n += p->value.size();
  return n;
}

std::unique_ptr<Backbone> build_backbone(const std::string& name,
                                         int num_classes, uint64_t seed,
                                         nn::Shape input_shape) {
  return std::make_unique<Backbone>(name, input_shape, num_classes, seed);
}

}  // namespace hkd::models
