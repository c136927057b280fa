#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/models.hpp"
#include "hkd/nn.hpp"

namespace hkd::data {

struct DatasetSpec {
  std::string name = "synthetic-clusters";  // | cifar-like-subset | custom-dir
  int num_classes = 10;
  int image_size = 16;
  int channels = 3;
  int train_per_class = 128;
  int test_per_class = 32;

  // synthetic-clusters controls: sibling classes share a base pattern and
  // differ by a pattern of amplitude pattern_delta; additive noise is drawn
  // at noise_sigma and norm-clipped below half the minimum template distance,
  // which keeps the classes linearly separable by construction.
  double noise_sigma = 0.25;
  double pattern_delta = 0.35;

  // Optional nuisance subspace: nuisance_dims directions orthogonal to every
  // between-template difference (and to each other), each carrying
  // N(0, nuisance_amp^2) variation. Raises the sample complexity of the task
  // without touching the separability guarantee.
  int nuisance_dims = 0;
  double nuisance_amp = 0.0;

  std::string source_dir;                  // cifar-like-subset / custom-dir
  std::string source_format = "cifar10";   // | cifar100

  bool normalize = true;
  std::optional<std::vector<double>> channel_mean;    // override stats
  std::optional<std::vector<double>> channel_stddev;
};

struct Dataset {
  Mat images;  // n x (c*h*w), channel-normalized
  std::vector<int> labels;
  nn::Shape shape;
  int num_classes = 0;
  std::vector<double> channel_mean;    // stats that were applied
  std::vector<double> channel_stddev;

  int size() const { return static_cast<int>(images.rows()); }
};

struct SplitPair {
  Dataset train;
  Dataset test;
};

// Deterministic under (spec, seed): ordering, noise draws and normalization
// all replay exactly.
SplitPair load_dataset(const DatasetSpec& spec, uint64_t seed);

struct FeatureDataset {
  Mat features;
  std::vector<int> labels;
  int num_classes = 0;
};

// Eval-mode penultimate features of `net` over the whole dataset.
FeatureDataset extract_features(models::Backbone& net, const Dataset& ds,
                                int batch_size = 128);

struct TransferSplit {
  FeatureDataset train;
  FeatureDataset test;
};

// Representation-transfer protocol: resize the target images to the frozen
// network's input size, push them through it, keep (feature, label) pairs.
TransferSplit make_transfer_split(models::Backbone& frozen_net,
                                  const DatasetSpec& target_spec,
                                  uint64_t seed);

// Bilinear per-channel resize; channel count is preserved.
Mat resize_bilinear(const Mat& images, nn::Shape from, int to_h, int to_w);

// Minimal binary PPM (P6) / PGM (P5) reader used by custom-dir datasets.
// Returns one row (channel-major) and the decoded shape.
Mat read_pnm(const std::string& path, nn::Shape& shape_out);

}  // namespace hkd::data
