#pragma once

#include <cstdint>
#include <istream>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/nn.hpp"

namespace hkd::models {

// Penultimate pooled representation plus logits for one batch.
struct BackboneOutput {
  Mat features;  // b x d
  Mat logits;    // b x K
};

struct ArchInfo {
  std::string name;
  int feature_dim;      // fixed per architecture (global pooling)
  std::string maps_to;  // the full-scale architecture this stands in for
};

const std::vector<ArchInfo>& list_architectures();
int feature_dim_of(const std::string& arch);

// Deterministically initialized convolutional backbone. The feature tap sits
// strictly before the classification layer: swapping the classifier changes
// logits but never features.
class Backbone {
 public:
  Backbone(const std::string& arch, nn::Shape input_shape, int num_classes,
           uint64_t seed);

  BackboneOutput forward(const Mat& images, bool train = false);

  // Joint gradient entry: d_features arrives from feature-space losses,
  // d_logits from prediction-space losses. Either may be empty (treated as
  // zero). A train-mode forward must precede.
  void backward(const Mat& d_features, const Mat& d_logits);

  std::vector<nn::Param*> params();
  void zero_grads();

  const std::string& arch() const { return arch_; }
  nn::Shape input_shape() const { return input_shape_; }
  int feature_dim() const { return feature_dim_; }
  int num_classes() const { return num_classes_; }

  void save(std::ostream& os) const;
  void load(std::istream& is);
  uint64_t weights_hash() const;
  int64_t parameter_count() const;

 private:
  std::string arch_;
  nn::Shape input_shape_;
  int num_classes_;
  int feature_dim_ = 0;
  std::vector<std::unique_ptr<nn::Layer>> trunk_;
  std::unique_ptr<nn::Linear> classifier_;

  void build(uint64_t seed);
};

std::unique_ptr<Backbone> build_backbone(const std::string& name,
                                         int num_classes, uint64_t seed,
                                         nn::Shape input_shape);

}  // namespace hkd::models
