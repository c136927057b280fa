#pragma once

// Brute-force scalar-loop oracles. Everything here is written independently
// of the library's linear-algebra paths: plain loops, log/exp by hand, full
// sorts instead of selection. Tests freeze expected values against these.

#include <algorithm>
#include <cmath>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/rng.hpp"

namespace oracle {

using hkd::Mat;
using hkd::Vec;

inline Mat random_matrix(int rows, int cols, hkd::RngStream& rng,
                         double scale = 1.0) {
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = scale * rng.normal();
  return m;
}

inline Mat unit_rows(const Mat& m) {
  Mat out = m;
  for (int i = 0; i < m.rows(); ++i) {
    double sq = 0;
    for (int j = 0; j < m.cols(); ++j) sq += m(i, j) * m(i, j);
    double n = std::sqrt(sq);
    if (n > 0)
      for (int j = 0; j < m.cols(); ++j) out(i, j) = m(i, j) / n;
  }
  return out;
}

// Row-wise softmax with temperature, scalar loops only.
inline Mat softmax(const Mat& logits, double tau) {
  Mat out(logits.rows(), logits.cols());
  for (int i = 0; i < logits.rows(); ++i) {
    double m = logits(i, 0) / tau;
    for (int j = 1; j < logits.cols(); ++j) m = std::max(m, logits(i, j) / tau);
    double z = 0;
    for (int j = 0; j < logits.cols(); ++j) z += std::exp(logits(i, j) / tau - m);
    for (int j = 0; j < logits.cols(); ++j)
      out(i, j) = std::exp(logits(i, j) / tau - m) / z;
  }
  return out;
}

inline double cosine(const Mat& a, int i, const Mat& b, int j) {
  double dot = 0, na = 0, nb = 0;
  for (int c = 0; c < a.cols(); ++c) {
    dot += a(i, c) * b(j, c);
    na += a(i, c) * a(i, c);
    nb += b(j, c) * b(j, c);
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// KNN adjacency by sorting every row of the full cosine-similarity matrix.
inline Mat knn_adjacency(const Mat& preds, int k) {
  const int b = static_cast<int>(preds.rows());
  Mat directed = Mat::Zero(b, b);
  for (int i = 0; i < b; ++i) {
    std::vector<std::pair<double, int>> sims;
    for (int j = 0; j < b; ++j)
      if (j != i) sims.push_back({cosine(preds, i, preds, j), j});
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& c) {
      if (a.first != c.first) return a.first > c.first;
      return a.second < c.second;
    });
    for (int t = 0; t < k; ++t) directed(i, sims[t].second) = 1.0;
  }
  Mat adj = Mat::Zero(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      adj(i, j) = (directed(i, j) > 0 || directed(j, i) > 0) ? 1.0 : 0.0;
  return adj;
}

// D^{-1/2} A D^{-1/2} via explicit scalar loops.
inline Mat normalized_adjacency(const Mat& adj) {
  const int b = static_cast<int>(adj.rows());
  std::vector<double> deg(b, 0.0);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) deg[i] += adj(i, j);
  Mat out(b, b);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j)
      out(i, j) = adj(i, j) / (std::sqrt(deg[i]) * std::sqrt(deg[j]));
  return out;
}

// Replays the random ablation graph's sampling procedure.
inline Mat random_graph_replay(int b, int k, uint64_t seed) {
  hkd::RngStream rng(seed);
  Mat adj = Mat::Zero(b, b);
  for (int i = 0; i < b; ++i)
    for (int j : rng.sample_without_replacement(b, k, i)) {
      adj(i, j) = 1.0;
      adj(j, i) = 1.0;
    }
  return adj;
}

// Term-by-term evaluation of the polynomial graph convolution followed by
// row normalization: sum_l Ahat^l F Theta_l.
inline Mat tagcn(const Mat& ahat, const Mat& feats,
                 const std::vector<Mat>& thetas) {
  const int b = static_cast<int>(feats.rows());
  const int g = static_cast<int>(thetas[0].cols());
  Mat pre = Mat::Zero(b, g);
  Mat hop = feats;
  for (size_t l = 0; l < thetas.size(); ++l) {
    if (l > 0) {
      Mat next = Mat::Zero(b, hop.cols());
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < b; ++j)
          for (int c = 0; c < hop.cols(); ++c)
            next(i, c) += ahat(i, j) * hop(j, c);
      hop = next;
    }
    for (int i = 0; i < b; ++i)
      for (int o = 0; o < g; ++o)
        for (int c = 0; c < hop.cols(); ++c)
          pre(i, o) += hop(i, c) * thetas[l](c, o);
  }
  return unit_rows(pre);
}

// Neighbor-walk pooling over the binary adjacency.
inline Mat pooling(const Mat& adj, const Mat& feats, bool mean) {
  const int b = static_cast<int>(adj.rows());
  Mat agg = Mat::Zero(b, feats.cols());
  for (int i = 0; i < b; ++i) {
    double deg = 0;
    for (int j = 0; j < b; ++j) {
      if (adj(i, j) == 0) continue;
      deg += 1;
      for (int c = 0; c < feats.cols(); ++c) agg(i, c) += feats(j, c);
    }
    if (mean)
      for (int c = 0; c < feats.cols(); ++c) agg(i, c) /= deg;
  }
  return unit_rows(agg);
}

// In-batch InfoNCE by direct enumeration:
// -(1/b) sum_i log[e^{s_ii/tau} / ((1/b) sum_j e^{s_ij/tau})].
inline double infonce_in_batch(const Mat& teacher, const Mat& student,
                               double tau) {
  const int b = static_cast<int>(teacher.rows());
  double total = 0;
  for (int i = 0; i < b; ++i) {
    double pos = 0;
    for (int c = 0; c < teacher.cols(); ++c) pos += teacher(i, c) * student(i, c);
    double denom = 0;
    for (int j = 0; j < b; ++j) {
      double s = 0;
      for (int c = 0; c < teacher.cols(); ++c) s += teacher(i, c) * student(j, c);
      denom += std::exp(s / tau);
    }
    total += std::log(std::exp(pos / tau) / (denom / b));
  }
  return -total / b;
}

// One direction of the memory-bank loss with an explicit negative list per
// anchor: -(1/b) sum_i log[e^{pos/tau} / (e^{pos/tau} + sum_neg e^{s/tau})].
inline double bank_side(const Mat& anchor, const Mat& positive,
                        const Mat& contrast_rows,
                        const std::vector<std::vector<int>>& negs, double tau) {
  const int b = static_cast<int>(anchor.rows());
  double total = 0;
  for (int i = 0; i < b; ++i) {
    double pos = 0;
    for (int c = 0; c < anchor.cols(); ++c) pos += anchor(i, c) * positive(i, c);
    double denom = std::exp(pos / tau);
    for (int j : negs[i]) {
      double s = 0;
      for (int c = 0; c < anchor.cols(); ++c)
        s += anchor(i, c) * contrast_rows(j, c);
      denom += std::exp(s / tau);
    }
    total += std::log(std::exp(pos / tau) / denom);
  }
  return -total / b;
}

// All-negatives list for a batch over a bank of size n.
inline std::vector<std::vector<int>> all_negatives(const std::vector<int>& idx,
                                                   int n) {
  std::vector<std::vector<int>> negs(idx.size());
  for (size_t i = 0; i < idx.size(); ++i)
    for (int j = 0; j < n; ++j)
      if (j != idx[i]) negs[i].push_back(j);
  return negs;
}

// Mean KL(p||q) over rows, scaled by tau^2.
inline double kd_loss(const Mat& p, const Mat& q, double tau) {
  double total = 0;
  for (int i = 0; i < p.rows(); ++i)
    for (int j = 0; j < p.cols(); ++j)
      if (p(i, j) > 0) total += p(i, j) * (std::log(p(i, j)) - std::log(q(i, j)));
  return tau * tau * total / p.rows();
}

inline double mse(const Mat& a, const Mat& b) {
  double total = 0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      double d = a(i, j) - b(i, j);
      total += d * d;
    }
  return total / (a.rows() * a.cols());
}

inline double softplus(double x) { return std::log1p(std::exp(-std::abs(x))) +
                                          std::max(x, 0.0); }

// Softplus-discriminator JSD objective over in-batch pairs.
inline double jsd(const Mat& teacher, const Mat& student, double tau) {
  const int b = static_cast<int>(teacher.rows());
  double pos = 0, neg = 0;
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      double s = 0;
      for (int c = 0; c < teacher.cols(); ++c) s += teacher(i, c) * student(j, c);
      if (i == j)
        pos += softplus(-s / tau);
      else
        neg += softplus(s / tau);
    }
  return pos / b + neg / (static_cast<double>(b) * (b - 1));
}

// Central finite differences of f around x, relative-error check helper.
template <typename F>
double fd_gradient(F&& f, double& x, double h = 1e-6) {
  double keep = x;
  x = keep + h;
  double up = f();
  x = keep - h;
  double down = f();
  x = keep;
  return (up - down) / (2 * h);
}

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace oracle
