#pragma once

#include <cstdint>
#include <string>

#include "hkd/common.hpp"

namespace hkd::graph {

// Logits plus the temperature-scaled soft targets derived from them, for one
// network's view of a mini-batch.
struct PredictionBatch {
  Mat logits;        // b x K
  Mat soft_targets;  // b x K, rows sum to 1
  double temperature = 1.0;

  static PredictionBatch from_logits(const Mat& logits, double temperature);
};

enum class GraphMode { Knn, Random, FullyConnected };

GraphMode parse_graph_mode(const std::string& s);
std::string to_string(GraphMode m);

// Per-batch attributed context graph: binary adjacency from KNN over
// predictions, its symmetric normalization, and the node feature matrix.
struct AttributedGraph {
  Mat adjacency;             // b x b binary, symmetric, zero diagonal
  Mat normalized_adjacency;  // D^{-1/2} A D^{-1/2}
  Mat features;              // b x d
  int k = 0;
};

Mat softmax_with_temperature(const Mat& logits, double temperature);

// Directed KNN graph: row i has ones at the k most cosine-similar other rows
// of `predictions` (ties broken by ascending index). Retained so tests can
// assert the out-degree invariant before symmetrization.
Mat build_knn_directed(const Mat& predictions, int k);

// OR-symmetrized KNN adjacency.
Mat build_knn_adjacency(const Mat& predictions, int k);

// Rand / FC ablation graphs. Random mode draws k distinct neighbors per node
// from RngStream(seed), node order 0..b-1, then symmetrizes.
Mat build_ablation_adjacency(int b, GraphMode mode, int k, uint64_t seed);

// D^{-1/2} A D^{-1/2} for a symmetric zero-diagonal binary adjacency.
Mat normalize_adjacency(const Mat& adjacency);

AttributedGraph build_attributed_graph(const Mat& predictions,
                                       const Mat& features, int k);

}  // namespace hkd::graph
