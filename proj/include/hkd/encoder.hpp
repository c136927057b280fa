#pragma once

#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/rng.hpp"

namespace hkd::encoder {

// Hop weights Theta_0..Theta_L of one graph encoder. All hops share the
// output width g; hop l multiplies the l-step aggregated features.
struct EncoderWeights {
  std::vector<Mat> hop_weights;  // L+1 matrices, each d x g
  bool trainable = true;

  int hops() const { return static_cast<int>(hop_weights.size()) - 1; }
  int input_dim() const { return static_cast<int>(hop_weights.at(0).rows()); }
  int output_dim() const { return static_cast<int>(hop_weights.at(0).cols()); }

  // Uniform init scaled by 1/sqrt(d).
  static EncoderWeights random(int hops, int input_dim, int output_dim,
                               RngStream& rng);
  void validate() const;
};

struct HolisticEmbedding {
  Mat vectors;  // b x g
  bool normalized = false;
};

enum class PoolMode { Sum, Mean };
PoolMode parse_pool_mode(const std::string& s);

// Graph-based representation per the polynomial-filter convolution:
// sum_{l=0..L} Ahat^l F Theta_l, then row-wise L2 normalization.
HolisticEmbedding tagcn_forward(const Mat& normalized_adjacency,
                                const Mat& features,
                                const EncoderWeights& weights, int hops);

// Parameter-free neighbor aggregation over the binary adjacency; sum mode
// row-normalizes A F, mean mode divides by degree first.
HolisticEmbedding pooling_forward(const Mat& adjacency, const Mat& features,
                                  PoolMode mode);

// normalize_rows(F Theta_0); identical to tagcn_forward with L=0. Maps raw
// (memory-bank) features into the shared embedding space.
HolisticEmbedding project_features(const Mat& features,
                                   const EncoderWeights& weights);

// --- gradient machinery -----------------------------------------------------

// Caches the forward intermediates needed for the backward pass.
struct TagcnContext {
  std::vector<Mat> hop_feats;  // Ahat^l F for l = 0..L
  Mat pre_norm;                // sum_l hop_feats[l] Theta_l
  HolisticEmbedding out;
};

struct TagcnGrads {
  std::vector<Mat> d_theta;  // one per hop weight
  Mat d_features;            // b x d
};

TagcnContext tagcn_forward_cached(const Mat& normalized_adjacency,
                                  const Mat& features,
                                  const EncoderWeights& weights, int hops);

TagcnGrads tagcn_backward(const TagcnContext& ctx,
                          const Mat& normalized_adjacency,
                          const EncoderWeights& weights, const Mat& d_out);

struct ProjectContext {
  Mat features;
  Mat pre_norm;
  HolisticEmbedding out;
};

struct ProjectGrads {
  Mat d_theta0;
  Mat d_features;
};

ProjectContext project_forward_cached(const Mat& features,
                                      const EncoderWeights& weights);

ProjectGrads project_backward(const ProjectContext& ctx,
                              const EncoderWeights& weights, const Mat& d_out);

struct PoolingContext {
  Mat aggregate;  // A F (sum) or D^{-1} A F (mean), before normalization
  HolisticEmbedding out;
};

PoolingContext pooling_forward_cached(const Mat& adjacency, const Mat& features,
                                      PoolMode mode);

Mat pooling_backward(const PoolingContext& ctx, const Mat& adjacency,
                     PoolMode mode, const Mat& d_out);

// Backward through row-wise L2 normalization: given pre-normalization rows
// and the gradient at the normalized output, returns the gradient at the
// pre-normalization input. Rows under the zero guard pass gradients through.
Mat rownorm_backward(const Mat& pre_norm, const Mat& d_out, double eps = 1e-12);

}  // namespace hkd::encoder
