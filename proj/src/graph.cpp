#include "hkd/graph.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hkd/rng.hpp"

namespace hkd::graph {

Mat softmax_with_temperature(const Mat& logits, double temperature) {
  require(temperature > 0.0, "softmax: temperature must be positive");
  require(logits.rows() >= 1 && logits.cols() >= 2,
          "softmax: need at least 1 row and 2 classes");
  require(all_finite(logits), "softmax: logits must be finite");

  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::RowVectorXd z = logits.row(i) / temperature;
    double m = z.maxCoeff();
    Eigen::RowVectorXd e = (z.array() - m).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

PredictionBatch PredictionBatch::from_logits(const Mat& logits,
                                             double temperature) {
  PredictionBatch pb;
  pb.logits = logits;
  pb.temperature = temperature;
  pb.soft_targets = softmax_with_temperature(logits, temperature);
  return pb;
}

GraphMode parse_graph_mode(const std::string& s) {
  if (s == "knn") return GraphMode::Knn;
  if (s == "random") return GraphMode::Random;
  if (s == "fully_connected" || s == "fc") return GraphMode::FullyConnected;
  throw InvalidArgument("unknown graph mode: " + s);
}

std::string to_string(GraphMode m) {
  switch (m) {
    case GraphMode::Knn: return "knn";
    case GraphMode::Random: return "random";
    case GraphMode::FullyConnected: return "fc";
  }
  return "?";
}

Mat build_knn_directed(const Mat& predictions, int k) {
  const int b = static_cast<int>(predictions.rows());
  require(k >= 1, "knn graph: k must be positive");
  require(k < b, "knn graph: k must be smaller than the batch size");

  Mat unit(b, predictions.cols());
  for (int i = 0; i < b; ++i) {
    double n = predictions.row(i).norm();
    require(n > 0.0, "knn graph: prediction row " + std::to_string(i) +
                         " has zero norm");
    unit.row(i) = predictions.row(i) / n;
  }
  Mat sim = unit * unit.transpose();

  Mat adj = Mat::Zero(b, b);
  std::vector<int> order(b);
  for (int i = 0; i < b; ++i) {
    order.clear();
    for (int j = 0; j < b; ++j)
      if (j != i) order.push_back(j);
    // Higher similarity first; ties by ascending index for determinism.
    std::partial_sort(order.begin(), order.begin() + k, order.end(),
                      [&](int a, int c) {
                        if (sim(i, a) != sim(i, c)) return sim(i, a) > sim(i, c);
                        return a < c;
                      });
    for (int j = 0; j < k; ++j) adj(i, order[j]) = 1.0;
  }
  return adj;
}

Mat build_knn_adjacency(const Mat& predictions, int k) {
  Mat d = build_knn_directed(predictions, k);
  Mat adj(d.rows(), d.cols());
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index j = 0; j < d.cols(); ++j)
      adj(i, j) = (d(i, j) > 0.0 || d(j, i) > 0.0) ? 1.0 : 0.0;
  return adj;
}

Mat build_ablation_adjacency(int b, GraphMode mode, int k, uint64_t seed) {
  require(b >= 2, "ablation graph: need at least 2 nodes");
  if (mode == GraphMode::FullyConnected) {
    Mat adj = Mat::Ones(b, b);
    adj.diagonal().setZero();
    return adj;
  }
  if (mode == GraphMode::Random) {
    require(k >= 1 && k < b, "ablation graph: random mode needs 1 <= k < b");
    RngStream rng(seed);
    Mat adj = Mat::Zero(b, b);
    for (int i = 0; i < b; ++i) {
      for (int j : rng.sample_without_replacement(b, k, i)) {
        adj(i, j) = 1.0;
        adj(j, i) = 1.0;
      }
    }
    return adj;
  }
  throw InvalidArgument("ablation graph: mode must be random or fully_connected");
}

Mat normalize_adjacency(const Mat& adjacency) {
  const auto b = adjacency.rows();
  require(adjacency.cols() == b, "normalize_adjacency: matrix must be square");
  for (Eigen::Index i = 0; i < b; ++i) {
    require(adjacency(i, i) == 0.0, "normalize_adjacency: diagonal must be zero");
    for (Eigen::Index j = 0; j < b; ++j) {
      require(adjacency(i, j) == adjacency(j, i),
              "normalize_adjacency: adjacency must be symmetric");
      require(adjacency(i, j) == 0.0 || adjacency(i, j) == 1.0,
              "normalize_adjacency: adjacency must be binary");
    }
  }

  Vec inv_sqrt_deg(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    double deg = adjacency.row(i).sum();
    require(deg > 0.0, "normalize_adjacency: node " + std::to_string(i) +
                           " is isolated");
    inv_sqrt_deg(i) = 1.0 / std::sqrt(deg);
  }
  return inv_sqrt_deg.asDiagonal() * adjacency * inv_sqrt_deg.asDiagonal();
}

AttributedGraph build_attributed_graph(const Mat& predictions,
                                       const Mat& features, int k) {
  require(predictions.rows() == features.rows(),
          "attributed graph: predictions and features must share the batch");
  AttributedGraph g;
  g.adjacency = build_knn_adjacency(predictions, k);
  g.normalized_adjacency = normalize_adjacency(g.adjacency);
  g.features = features;
  g.k = k;
  return g;
}

}  // namespace hkd::graph
