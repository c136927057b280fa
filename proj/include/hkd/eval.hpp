#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/data.hpp"

namespace hkd::eval {

// Top-1 accuracy in percent; argmax ties break toward the lowest class index.
double accuracy(const Mat& predictions, const std::vector<int>& labels);

// One teacher/student combination's accuracies for the relative-improvement
// metric.
struct AriInput {
  double acc_hkd;  // the method under evaluation
  double acc_bkd;  // the baseline distillation method
  double acc_stu;  // the plain-trained student
};

// Average Relative Improvement in percent:
//   (1/M) sum_i (acc_hkd - acc_bkd) / (acc_bkd - acc_stu) * 100
double ari(const std::vector<AriInput>& rows);

// Trains a linear softmax classifier on frozen features by full-batch
// gradient descent to tolerance 1e-6; returns test accuracy in percent.
// Degenerate feature variance produces a warning on stderr, not an error.
double linear_probe(const data::FeatureDataset& train,
                    const data::FeatureDataset& test, int num_classes,
                    uint64_t seed);

// Pairwise cosine similarity between prediction rows.
Mat prediction_similarity(const Mat& predictions);

// Diverging blue-white-red map over [-1, 1], written as binary PPM.
void write_heatmap_ppm(const Mat& sim, const std::string& path,
                       int cell_pixels = 8);

void write_matrix_csv(const Mat& m, const std::string& path);

}  // namespace hkd::eval
