#include "hkd/encoder.hpp"

#include <cmath>

namespace hkd::encoder {

EncoderWeights EncoderWeights::random(int hops, int input_dim, int output_dim,
                                      RngStream& rng) {
  require(hops >= 0, "encoder weights: hops must be non-negative");
  require(input_dim >= 1 && output_dim >= 1,
          "encoder weights: dimensions must be positive");
  EncoderWeights w;
  double scale = 1.0 / std::sqrt(static_cast<double>(input_dim));
  for (int l = 0; l <= hops; ++l) {
    Mat theta(input_dim, output_dim);
    for (Eigen::Index i = 0; i < theta.rows(); ++i)
      for (Eigen::Index j = 0; j < theta.cols(); ++j)
        theta(i, j) = rng.uniform(-scale, scale);
    w.hop_weights.push_back(std::move(theta));
  }
  return w;
}

void EncoderWeights::validate() const {
  require(!hop_weights.empty(), "encoder weights: need at least Theta_0");
  for (const Mat& t : hop_weights) {
    require(t.rows() == hop_weights[0].rows() &&
                t.cols() == hop_weights[0].cols(),
            "encoder weights: all hop matrices must share one shape");
    require(all_finite(t), "encoder weights: entries must be finite");
  }
}

PoolMode parse_pool_mode(const std::string& s) {
  if (s == "sum") return PoolMode::Sum;
  if (s == "mean") return PoolMode::Mean;
  throw InvalidArgument("unknown pooling mode: " + s);
}

Mat rownorm_backward(const Mat& pre_norm, const Mat& d_out, double eps) {
  Mat dx(pre_norm.rows(), pre_norm.cols());
  for (Eigen::Index i = 0; i < pre_norm.rows(); ++i) {
    double n = pre_norm.row(i).norm();
    if (n < eps) {
      dx.row(i) = d_out.row(i);
      continue;
    }
    Eigen::RowVectorXd y = pre_norm.row(i) / n;
    double dot = y.dot(d_out.row(i));
    dx.row(i) = (d_out.row(i) - dot * y) / n;
  }
  return dx;
}

TagcnContext tagcn_forward_cached(const Mat& normalized_adjacency,
                                  const Mat& features,
                                  const EncoderWeights& weights, int hops) {
  require(hops >= 0, "tagcn: hops must be non-negative");
  weights.validate();
  require(weights.hops() == hops,
          "tagcn: expected " + std::to_string(hops + 1) + " hop matrices, got " +
              std::to_string(weights.hops() + 1));
  require(normalized_adjacency.rows() == normalized_adjacency.cols(),
          "tagcn: adjacency must be square");
  require(normalized_adjacency.rows() == features.rows(),
          "tagcn: adjacency and features must share the batch size");
  require(features.cols() == weights.input_dim(),
          "tagcn: feature width does not match the hop weights");

  TagcnContext ctx;
  Mat cur = features;
  ctx.hop_feats.push_back(cur);
  for (int l = 1; l <= hops; ++l) {
    cur = normalized_adjacency * cur;
    ctx.hop_feats.push_back(cur);
  }
  ctx.pre_norm = Mat::Zero(features.rows(), weights.output_dim());
  for (int l = 0; l <= hops; ++l)
    ctx.pre_norm += ctx.hop_feats[l] * weights.hop_weights[l];

  ctx.out.vectors = normalize_rows(ctx.pre_norm);
  ctx.out.normalized = true;
  return ctx;
}

HolisticEmbedding tagcn_forward(const Mat& normalized_adjacency,
                                const Mat& features,
                                const EncoderWeights& weights, int hops) {
  return tagcn_forward_cached(normalized_adjacency, features, weights, hops)
      .out;
}

TagcnGrads tagcn_backward(const TagcnContext& ctx,
                          const Mat& normalized_adjacency,
                          const EncoderWeights& weights, const Mat& d_out) {
  Mat d_pre = rownorm_backward(ctx.pre_norm, d_out);

  TagcnGrads g;
  g.d_theta.resize(weights.hop_weights.size());
  for (size_t l = 0; l < weights.hop_weights.size(); ++l)
    g.d_theta[l] = ctx.hop_feats[l].transpose() * d_pre;

  // d/dF of Ahat^l F Theta_l is Ahat^l dPre Theta_l^T (Ahat symmetric).
  g.d_features = Mat::Zero(ctx.hop_feats[0].rows(), ctx.hop_feats[0].cols());
  Mat carried = d_pre;
  for (size_t l = 0; l < weights.hop_weights.size(); ++l) {
    if (l > 0) carried = normalized_adjacency * carried;
    g.d_features += carried * weights.hop_weights[l].transpose();
  }
  return g;
}

ProjectContext project_forward_cached(const Mat& features,
                                      const EncoderWeights& weights) {
  weights.validate();
  require(features.cols() == weights.input_dim(),
          "project_features: feature width does not match Theta_0");
  ProjectContext ctx;
  ctx.features = features;
  ctx.pre_norm = features * weights.hop_weights[0];
  ctx.out.vectors = normalize_rows(ctx.pre_norm);
  ctx.out.normalized = true;
  return ctx;
}

HolisticEmbedding project_features(const Mat& features,
                                   const EncoderWeights& weights) {
  return project_forward_cached(features, weights).out;
}

ProjectGrads project_backward(const ProjectContext& ctx,
                              const EncoderWeights& weights, const Mat& d_out) {
  Mat d_pre = rownorm_backward(ctx.pre_norm, d_out);
  ProjectGrads g;
  g.d_theta0 = ctx.features.transpose() * d_pre;
  g.d_features = d_pre * weights.hop_weights[0].transpose();
  return g;
}

PoolingContext pooling_forward_cached(const Mat& adjacency, const Mat& features,
                                      PoolMode mode) {
  require(adjacency.rows() == adjacency.cols(), "pooling: adjacency must be square");
  require(adjacency.rows() == features.rows(),
          "pooling: adjacency and features must share the batch size");
  PoolingContext ctx;
  ctx.aggregate = adjacency * features;
  if (mode == PoolMode::Mean) {
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i) {
      double deg = adjacency.row(i).sum();
      require(deg > 0.0, "pooling: node " + std::to_string(i) +
                             " has zero degree in mean mode");
      ctx.aggregate.row(i) /= deg;
    }
  }
  ctx.out.vectors = normalize_rows(ctx.aggregate);
  ctx.out.normalized = true;
  return ctx;
}

HolisticEmbedding pooling_forward(const Mat& adjacency, const Mat& features,
                                  PoolMode mode) {
  return pooling_forward_cached(adjacency, features, mode).out;
}

Mat pooling_backward(const PoolingContext& ctx, const Mat& adjacency,
                     PoolMode mode, const Mat& d_out) {
  Mat d_agg = rownorm_backward(ctx.aggregate, d_out);
  if (mode == PoolMode::Mean) {
    for (Eigen::Index i = 0; i < adjacency.rows(); ++i)
      d_agg.row(i) /= adjacency.row(i).sum();
  }
  return adjacency.transpose() * d_agg;
}

}  // namespace hkd::encoder
