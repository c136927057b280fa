#include "hkd/nn.hpp"

#include <cmath>

namespace hkd::nn {

namespace {

int conv_out(int n, int k, int stride, int pad) {
  return (n + 2 * pad - k) / stride + 1;
}

Mat he_normal(int rows, int cols, int fan_in, RngStream& rng) {
  double std_dev = std::sqrt(2.0 / static_cast<double>(fan_in));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = std_dev * rng.normal();
  return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d
// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, Shape in, int out_channels, int ksize,
               int stride, int pad, int groups, RngStream& rng)
    : in_shape_(in),
      ksize_(ksize),
      stride_(stride),
      pad_(pad),
      groups_(groups),
      weight_(name + ".weight",
              he_normal((in.c / groups) * ksize * ksize, out_channels,
                        (in.c / groups) * ksize * ksize, rng)),
      bias_(name + ".bias", Mat::Zero(1, out_channels)) {
  require(in.c % groups == 0 && out_channels % groups == 0,
          "conv: channels must divide groups");
  out_shape_ = Shape{out_channels, conv_out(in.h, ksize, stride, pad),
                     conv_out(in.w, ksize, stride, pad)};
  require(out_shape_.h >= 1 && out_shape_.w >= 1, "conv: output collapsed");

  // Gather table: for each output pixel and kernel tap, the input spatial
  // offset within one channel plane, or -1 for padding.
  col_index_.resize(static_cast<size_t>(out_shape_.h) * out_shape_.w * ksize *
                    ksize);
  size_t p = 0;
  for (int oy = 0; oy < out_shape_.h; ++oy)
    for (int ox = 0; ox < out_shape_.w; ++ox)
      for (int ky = 0; ky < ksize; ++ky)
        for (int kx = 0; kx < ksize; ++kx) {
          int iy = oy * stride - pad + ky;
          int ix = ox * stride - pad + kx;
          col_index_[p++] = (iy < 0 || iy >= in.h || ix < 0 || ix >= in.w)
                                ? -1
                                : iy * in.w + ix;
        }
}

void Conv2d::im2col(const Mat& x, Mat& cols) const {
  const int taps = ksize_ * ksize_;
  const int plane = in_shape_.h * in_shape_.w;
  const int opix = out_shape_.h * out_shape_.w;
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    for (int c = 0; c < in_shape_.c; ++c) {
      const double* src = x.row(s).data() + static_cast<size_t>(c) * plane;
      for (int o = 0; o < opix; ++o) {
        double* dst = cols.row(s * opix + o).data() + static_cast<size_t>(c) * taps;
        const int* idx = col_index_.data() + static_cast<size_t>(o) * taps;
        for (int t = 0; t < taps; ++t) dst[t] = idx[t] < 0 ? 0.0 : src[idx[t]];
      }
    }
  }
}

Mat Conv2d::forward(const Mat& x, bool train) {
  require(x.cols() == in_shape_.size(), "conv " + weight_.name +
                                            ": input width mismatch");
  batch_ = x.rows();
  const int opix = out_shape_.h * out_shape_.w;
  const int taps = ksize_ * ksize_;
  const int cg = in_shape_.c / groups_;   // input channels per group
  const int og = out_shape_.c / groups_;  // output channels per group

  Mat cols(batch_ * opix, in_shape_.c * taps);
  im2col(x, cols);
  if (train) cols_cache_ = cols;

  Mat out(batch_, out_shape_.size());
  for (int g = 0; g < groups_; ++g) {
    Mat r = cols.middleCols(static_cast<Eigen::Index>(g) * cg * taps, cg * taps) *
            weight_.value.middleCols(static_cast<Eigen::Index>(g) * og, og);
    for (Eigen::Index s = 0; s < batch_; ++s)
      for (int oc = 0; oc < og; ++oc) {
        int channel = g * og + oc;
        double b = bias_.value(0, channel);
        double* dst = out.row(s).data() + static_cast<size_t>(channel) * opix;
        for (int o = 0; o < opix; ++o) dst[o] = r(s * opix + o, oc) + b;
      }
  }
  return out;
}

Mat Conv2d::backward(const Mat& dy) {
  require(cols_cache_.rows() > 0, "conv backward without a train forward");
  const int opix = out_shape_.h * out_shape_.w;
  const int taps = ksize_ * ksize_;
  const int cg = in_shape_.c / groups_;
  const int og = out_shape_.c / groups_;
  const int plane = in_shape_.h * in_shape_.w;

  Mat d_cols = Mat::Zero(cols_cache_.rows(), cols_cache_.cols());
  for (int g = 0; g < groups_; ++g) {
    // Regroup dy into (b*opix) x og for this group's output channels.
    Mat dr(batch_ * opix, og);
    for (Eigen::Index s = 0; s < batch_; ++s)
      for (int oc = 0; oc < og; ++oc) {
        int channel = g * og + oc;
        const double* src = dy.row(s).data() + static_cast<size_t>(channel) * opix;
        for (int o = 0; o < opix; ++o) dr(s * opix + o, oc) = src[o];
        bias_.grad(0, channel) += dr.col(oc).segment(s * opix, opix).sum();
      }
    auto cols_g = cols_cache_.middleCols(static_cast<Eigen::Index>(g) * cg * taps,
                                         cg * taps);
    weight_.grad.middleCols(static_cast<Eigen::Index>(g) * og, og) +=
        cols_g.transpose() * dr;
    d_cols.middleCols(static_cast<Eigen::Index>(g) * cg * taps, cg * taps) =
        dr * weight_.value.middleCols(static_cast<Eigen::Index>(g) * og, og)
                 .transpose();
  }

  // col2im scatter-add.
  Mat dx = Mat::Zero(batch_, in_shape_.size());
  for (Eigen::Index s = 0; s < batch_; ++s) {
    for (int c = 0; c < in_shape_.c; ++c) {
      double* dst = dx.row(s).data() + static_cast<size_t>(c) * plane;
      for (int o = 0; o < opix; ++o) {
        const double* src =
            d_cols.row(s * opix + o).data() + static_cast<size_t>(c) * taps;
        const int* idx = col_index_.data() + static_cast<size_t>(o) * taps;
        for (int t = 0; t < taps; ++t)
          if (idx[t] >= 0) dst[idx[t]] += src[t];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ReLU / pooling
// ---------------------------------------------------------------------------

Mat ReLU::forward(const Mat& x, bool train) {
  if (train) mask_ = (x.array() > 0.0).cast<double>();
  return x.cwiseMax(0.0);
}

Mat ReLU::backward(const Mat& dy) {
  require(mask_.rows() == dy.rows(), "relu backward without a train forward");
  return dy.cwiseProduct(mask_);
}

MaxPool2d::MaxPool2d(Shape in) : in_shape_(in) {
  require(in.h % 2 == 0 && in.w % 2 == 0, "maxpool: spatial dims must be even");
  out_shape_ = Shape{in.c, in.h / 2, in.w / 2};
}

Mat MaxPool2d::forward(const Mat& x, bool train) {
  const int plane_in = in_shape_.h * in_shape_.w;
  const int plane_out = out_shape_.h * out_shape_.w;
  Mat out(x.rows(), out_shape_.size());
  argmax_.assign(static_cast<size_t>(x.rows()) * out_shape_.size(), 0);
  for (Eigen::Index s = 0; s < x.rows(); ++s) {
    for (int c = 0; c < in_shape_.c; ++c) {
      const double* src = x.row(s).data() + static_cast<size_t>(c) * plane_in;
      double* dst = out.row(s).data() + static_cast<size_t>(c) * plane_out;
      for (int oy = 0; oy < out_shape_.h; ++oy)
        for (int ox = 0; ox < out_shape_.w; ++ox) {
          int best = (2 * oy) * in_shape_.w + 2 * ox;
          for (int dy_ = 0; dy_ < 2; ++dy_)
            for (int dx_ = 0; dx_ < 2; ++dx_) {
              int cand = (2 * oy + dy_) * in_shape_.w + 2 * ox + dx_;
              if (src[cand] > src[best]) best = cand;
            }
          int o = oy * out_shape_.w + ox;
          dst[o] = src[best];
          argmax_[(static_cast<size_t>(s) * in_shape_.c + c) * plane_out + o] =
              best;
        }
    }
  }
  (void)train;
  return out;
}

Mat MaxPool2d::backward(const Mat& dy) {
  const int plane_in = in_shape_.h * in_shape_.w;
  const int plane_out = out_shape_.h * out_shape_.w;
  Mat dx = Mat::Zero(dy.rows(), in_shape_.size());
  for (Eigen::Index s = 0; s < dy.rows(); ++s)
    for (int c = 0; c < in_shape_.c; ++c) {
      const double* src = dy.row(s).data() + static_cast<size_t>(c) * plane_out;
      double* dst = dx.row(s).data() + static_cast<size_t>(c) * plane_in;
      for (int o = 0; o < plane_out; ++o)
        dst[argmax_[(static_cast<size_t>(s) * in_shape_.c + c) * plane_out + o]] +=
            src[o];
    }
  return dx;
}

Mat GlobalAvgPool::forward(const Mat& x, bool train) {
  const int plane = in_shape_.h * in_shape_.w;
  Mat out(x.rows(), in_shape_.c);
  for (Eigen::Index s = 0; s < x.rows(); ++s)
    for (int c = 0; c < in_shape_.c; ++c)
      out(s, c) = x.row(s).segment(static_cast<Eigen::Index>(c) * plane, plane)
                      .mean();
  (void)train;
  return out;
}

Mat GlobalAvgPool::backward(const Mat& dy) {
  const int plane = in_shape_.h * in_shape_.w;
  Mat dx(dy.rows(), in_shape_.size());
  for (Eigen::Index s = 0; s < dy.rows(); ++s)
    for (int c = 0; c < in_shape_.c; ++c)
      dx.row(s)
          .segment(static_cast<Eigen::Index>(c) * plane, plane)
          .setConstant(dy(s, c) / static_cast<double>(plane));
  return dx;
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, int in_dim, int out_dim, RngStream& rng)
    : in_dim_(in_dim),
      out_dim_(out_dim),
      weight_(name + ".weight", he_normal(in_dim, out_dim, in_dim, rng)),
      bias_(name + ".bias", Mat::Zero(1, out_dim)) {}

Mat Linear::forward(const Mat& x, bool train) {
  require(x.cols() == in_dim_, "linear " + weight_.name + ": width mismatch");
  if (train) x_cache_ = x;
  return (x * weight_.value).rowwise() + bias_.value.row(0);
}

Mat Linear::backward(const Mat& dy) {
  require(x_cache_.rows() == dy.rows(), "linear backward without a train forward");
  weight_.grad += x_cache_.transpose() * dy;
  bias_.grad += dy.colwise().sum();
  return dy * weight_.value.transpose();
}

// ---------------------------------------------------------------------------
// ResidualBlock
// ---------------------------------------------------------------------------

ResidualBlock::ResidualBlock(const std::string& name, Shape in, int out_channels,
                             int stride, RngStream& rng) {
  conv1_ = std::make_unique<Conv2d>(name + ".conv1", in, out_channels, 3, stride,
                                    1, 1, rng);
  relu1_ = std::make_unique<ReLU>(conv1_->output_shape());
  conv2_ = std::make_unique<Conv2d>(name + ".conv2", conv1_->output_shape(),
                                    out_channels, 3, 1, 1, 1, rng);
  if (stride != 1 || in.c != out_channels)
    proj_ = std::make_unique<Conv2d>(name + ".proj", in, out_channels, 1, stride,
                                     0, 1, rng);
}

Mat ResidualBlock::forward(const Mat& x, bool train) {
  Mat h = relu1_->forward(conv1_->forward(x, train), train);
  Mat main = conv2_->forward(h, train);
  Mat skip = proj_ ? proj_->forward(x, train) : x;
  Mat pre = main + skip;
  if (train) out_mask_ = (pre.array() > 0.0).cast<double>();
  return pre.cwiseMax(0.0);
}

Mat ResidualBlock::backward(const Mat& dy) {
  Mat d_pre = dy.cwiseProduct(out_mask_);
  Mat d_main = conv1_->backward(relu1_->backward(conv2_->backward(d_pre)));
  Mat d_skip = proj_ ? proj_->backward(d_pre) : d_pre;
  return d_main + d_skip;
}

std::vector<Param*> ResidualBlock::params() {
  std::vector<Param*> out;
  for (Layer* l : std::initializer_list<Layer*>{conv1_.get(), conv2_.get(),
                                                proj_.get()}) {
    if (!l) continue;
    for (Param* p : l->params()) out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

CrossEntropyResult softmax_cross_entropy(const Mat& logits,
                                         const std::vector<int>& labels) {
  require(static_cast<Eigen::Index>(labels.size()) == logits.rows(),
          "cross entropy: label count mismatch");
  const Eigen::Index b = logits.rows();
  CrossEntropyResult r;
  r.probabilities = Mat(b, logits.cols());
  r.d_logits = Mat(b, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    require(labels[i] >= 0 && labels[i] < logits.cols(),
            "cross entropy: label out of range");
    double m = logits.row(i).maxCoeff();
    Eigen::RowVectorXd e = (logits.row(i).array() - m).exp();
    double z = e.sum();
    r.probabilities.row(i) = e / z;
    total -= logits(i, labels[i]) - m - std::log(z);
    r.d_logits.row(i) = r.probabilities.row(i) / static_cast<double>(b);
    r.d_logits(i, labels[i]) -= 1.0 / static_cast<double>(b);
  }
  r.loss = total / static_cast<double>(b);
  return r;
}

}  // namespace hkd::nn
