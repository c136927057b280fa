#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hkd/common.hpp"
#include "hkd/rng.hpp"

namespace hkd::nn {

// Image batches are stored one row per sample, channel-major within the row:
// index(c, y, x) = (c * h + y) * w + x.
struct Shape {
  int c = 0, h = 0, w = 0;
  int size() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

struct Param {
  std::string name;
  Mat value;
  Mat grad;

  Param(std::string n, Mat v)
      : name(std::move(n)), value(std::move(v)),
        grad(Mat::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Mat forward(const Mat& x, bool train) = 0;
  virtual Mat backward(const Mat& dy) = 0;
  virtual std::vector<Param*> params() { return {}; }
  virtual Shape output_shape() const = 0;
};

class Conv2d : public Layer {
 public:
  Conv2d(const std::string& name, Shape in, int out_channels, int ksize,
         int stride, int pad, int groups, RngStream& rng);

  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Shape output_shape() const override { return out_shape_; }

 private:
  Shape in_shape_, out_shape_;
  int ksize_, stride_, pad_, groups_;
  Param weight_;  // (in_c/groups * k * k) x out_c, group g owns columns
  Param bias_;    // 1 x out_c
  std::vector<int> col_index_;  // per group-invariant spatial gather table
  Mat cols_cache_;              // (b * oh * ow) x (in_c * k * k)
  Eigen::Index batch_ = 0;

  void im2col(const Mat& x, Mat& cols) const;
};

class ReLU : public Layer {
 public:
  explicit ReLU(Shape in) : shape_(in) {}
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  Shape output_shape() const override { return shape_; }

 private:
  Shape shape_;
  Mat mask_;
};

class MaxPool2d : public Layer {
 public:
  explicit MaxPool2d(Shape in);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  Shape output_shape() const override { return out_shape_; }

 private:
  Shape in_shape_, out_shape_;
  std::vector<int> argmax_;
};

class GlobalAvgPool : public Layer {
 public:
  explicit GlobalAvgPool(Shape in) : in_shape_(in) {}
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  Shape output_shape() const override { return Shape{in_shape_.c, 1, 1}; }

 private:
  Shape in_shape_;
};

class Linear : public Layer {
 public:
  Linear(const std::string& name, int in_dim, int out_dim, RngStream& rng);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }
  Shape output_shape() const override { return Shape{out_dim_, 1, 1}; }
  int in_dim() const { return in_dim_; }

 private:
  int in_dim_, out_dim_;
  Param weight_;  // in x out
  Param bias_;    // 1 x out
  Mat x_cache_;
};

// conv-relu-conv plus identity (or 1x1 projection) skip, relu after the add.
class ResidualBlock : public Layer {
 public:
  ResidualBlock(const std::string& name, Shape in, int out_channels, int stride,
                RngStream& rng);
  Mat forward(const Mat& x, bool train) override;
  Mat backward(const Mat& dy) override;
  std::vector<Param*> params() override;
  Shape output_shape() const override { return conv2_->output_shape(); }

 private:
  std::unique_ptr<Conv2d> conv1_, conv2_, proj_;
  std::unique_ptr<ReLU> relu1_;
  Mat out_mask_;
};

struct CrossEntropyResult {
  double loss;
  Mat d_logits;
  Mat probabilities;
};

// Mean softmax cross-entropy over the batch, gradient w.r.t. logits included.
CrossEntropyResult softmax_cross_entropy(const Mat& logits,
                                         const std::vector<int>& labels);

}  // namespace hkd::nn
