#include "hkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>

#include "hkd/rng.hpp"

namespace hkd::eval {

double accuracy(const Mat& predictions, const std::vector<int>& labels) {
  require(predictions.rows() >= 1, "accuracy: empty predictions");
  require(static_cast<Eigen::Index>(labels.size()) == predictions.rows(),
          "accuracy: label count mismatch");
  int correct = 0;
  for (Eigen::Index i = 0; i < predictions.rows(); ++i) {
    int best = 0;
    for (Eigen::Index j = 1; j < predictions.cols(); ++j)
      if (predictions(i, j) > predictions(i, best)) best = static_cast<int>(j);
    if (best == labels[i]) ++correct;
  }
  return 100.0 * correct / static_cast<double>(predictions.rows());
}

double ari(const std::vector<AriInput>& rows) {
  require(!rows.empty(), "ari: need at least one combination");
  double total = 0.0;
  for (size_t i = 0; i < rows.size(); ++i) {
    double denom = rows[i].acc_bkd - rows[i].acc_stu;
    if (denom == 0.0)
      throw InvalidArgument("ari: row " + std::to_string(i) +
                            " has acc_bkd == acc_stu (zero denominator)");
    total += (rows[i].acc_hkd - rows[i].acc_bkd) / denom;
  }
  return total / static_cast<double>(rows.size()) * 100.0;
}

double linear_probe(const data::FeatureDataset& train,
                    const data::FeatureDataset& test, int num_classes,
                    uint64_t seed) {
  require(train.features.rows() >= 1 && test.features.rows() >= 1,
          "linear probe: empty split");
  require(train.features.cols() == test.features.cols(),
          "linear probe: feature width mismatch between splits");
  const Eigen::Index n = train.features.rows();
  const Eigen::Index d = train.features.cols();

  for (Eigen::Index j = 0; j < d; ++j) {
    double mean = train.features.col(j).mean();
    double var = (train.features.col(j).array() - mean).square().mean();
    if (var < 1e-12) {
      std::cerr << "[hkd] warning: linear probe feature " << j
                << " has degenerate variance\n";
      break;
    }
  }

  RngStream rng(seed);
  Mat w(d, num_classes);
  double scale = 1.0 / std::sqrt(static_cast<double>(d));
  for (Eigen::Index i = 0; i < d; ++i)
    for (int j = 0; j < num_classes; ++j) w(i, j) = scale * rng.normal();
  Vec bias = Vec::Zero(num_classes);

  // Full-batch GD with heavy-ball momentum. The step size is bounded by the
  // softmax-regression curvature limit 4n / ||X||_F^2.
  double lr = 4.0 * static_cast<double>(n) /
              std::max(1.0, train.features.squaredNorm());
  Mat vel_w = Mat::Zero(d, num_classes);
  Vec vel_b = Vec::Zero(num_classes);
  const double momentum = 0.9;
  const double tol = 1e-6;
  const int max_iters = 20000;

  for (int it = 0; it < max_iters; ++it) {
    Mat scores = (train.features * w).rowwise() + bias.transpose();
    Mat probs(scores.rows(), scores.cols());
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      double m = scores.row(i).maxCoeff();
      Eigen::RowVectorXd e = (scores.row(i).array() - m).exp();
      probs.row(i) = e / e.sum();
    }
    for (Eigen::Index i = 0; i < n; ++i) probs(i, train.labels[i]) -= 1.0;
    probs /= static_cast<double>(n);
    Mat grad_w = train.features.transpose() * probs;
    Vec grad_b = probs.colwise().sum().transpose();

    double gnorm = std::max(grad_w.cwiseAbs().maxCoeff(),
                            grad_b.cwiseAbs().maxCoeff());
    if (gnorm < tol) break;
    vel_w = momentum * vel_w - lr * grad_w;
    vel_b = momentum * vel_b - lr * grad_b;
    w += vel_w;
    bias += vel_b;
  }

  Mat test_scores = (test.features * w).rowwise() + bias.transpose();
  return accuracy(test_scores, test.labels);
}

Mat prediction_similarity(const Mat& predictions) {
  require(predictions.rows() >= 1, "similarity: empty predictions");
  Mat unit = predictions;
  for (Eigen::Index i = 0; i < unit.rows(); ++i) {
    double n = unit.row(i).norm();
    require(n > 0.0, "similarity: zero-norm prediction row");
    unit.row(i) /= n;
  }
  return unit * unit.transpose();
}

namespace {

// value in [-1,1] -> blue-white-red
void diverging_color(double v, unsigned char rgb[3]) {
  v = std::clamp(v, -1.0, 1.0);
  double t = (v + 1.0) / 2.0;  // 0 = blue, 0.5 = white, 1 = red
  double r, g, b;
  if (t < 0.5) {
    double u = t / 0.5;
    r = 0.230 + (1.0 - 0.230) * u;
    g = 0.299 + (1.0 - 0.299) * u;
    b = 0.754 + (1.0 - 0.754) * u;
  } else {
    double u = (t - 0.5) / 0.5;
    r = 1.0 + (0.706 - 1.0) * u;
    g = 1.0 + (0.016 - 1.0) * u;
    b = 1.0 + (0.150 - 1.0) * u;
  }
  rgb[0] = static_cast<unsigned char>(std::lround(255 * r));
  rgb[1] = static_cast<unsigned char>(std::lround(255 * g));
  rgb[2] = static_cast<unsigned char>(std::lround(255 * b));
}

}  // namespace

void write_heatmap_ppm(const Mat& sim, const std::string& path,
                       int cell_pixels) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write heatmap: " + path);
  const int rows = static_cast<int>(sim.rows());
  const int cols = static_cast<int>(sim.cols());
  const int h = rows * cell_pixels, w = cols * cell_pixels;
  f << "P6\n" << w << " " << h << "\n255\n";
  std::vector<unsigned char> line(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      unsigned char rgb[3];
      diverging_color(sim(y / cell_pixels, x / cell_pixels), rgb);
      line[3 * x] = rgb[0];
      line[3 * x + 1] = rgb[1];
      line[3 * x + 2] = rgb[2];
    }
    f.write(reinterpret_cast<const char*>(line.data()),
            static_cast<std::streamsize>(line.size()));
  }
}

void write_matrix_csv(const Mat& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw DataError("cannot write csv: " + path);
  f.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) f << ",";
      f << m(i, j);
    }
    f << "\n";
  }
}

}  // namespace hkd::eval
