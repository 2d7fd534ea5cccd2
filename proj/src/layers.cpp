#include "occtip/layers.hpp"

#include <cmath>

#include "occtip/error.hpp"

namespace occtip {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) { return x * sigmoid(x); }

double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

double softplus(double x) {
  if (x > 20.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  // log(exp(y) - 1) written to stay accurate for small y
  return y + std::log(-std::expm1(-y));
}

Mat silu(const Mat& x) { return x.unaryExpr([](double v) { return silu(v); }); }

Mat silu_backward(const Mat& x, const Mat& dy) {
  return dy.cwiseProduct(x.unaryExpr([](double v) { return silu_grad(v); }));
}

// ---------------------------------------------------------------------------

Linear::Linear(int in, int out, bool bias)
    : weight(out, in), bias(bias ? 1 : 0, bias ? out : 0), in_(in), out_(out), has_bias_(bias) {}

void Linear::init_uniform(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  fill_uniform(weight.value, -bound, bound, rng);
  if (has_bias_) fill_uniform(bias.value, -bound, bound, rng);
}

Mat Linear::forward(const Mat& x) const {
  if (x.cols() != in_) {
    fail(ErrorKind::ShapeError, "linear expects " + std::to_string(in_) + " input columns, got " +
                                    std::to_string(x.cols()));
  }
  Mat y = x * weight.value.transpose();
  if (has_bias_) y.rowwise() += bias.value.row(0);
  return y;
}

Mat Linear::backward(const Mat& x, const Mat& dy) {
  weight.grad.noalias() += dy.transpose() * x;
  if (has_bias_) bias.grad.row(0) += dy.colwise().sum();
  return dy * weight.value;
}

void Linear::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".weight", &weight, true});
  if (has_bias_) out.push_back({prefix + ".bias", &bias, false});
}

std::size_t Linear::num_params() const { return count(in_, out_, has_bias_); }

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(int dim, double eps) : gain(1, dim), bias(1, dim), dim_(dim), eps_(eps) {
  gain.value.setOnes();
}

Mat LayerNorm::forward(const Mat& x, Cache* cache) const {
  if (x.cols() != dim_) fail(ErrorKind::ShapeError, "layer norm width mismatch");
  const Eigen::Index rows = x.rows();
  Mat xhat(rows, dim_);
  Vec inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps_);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Mat y = xhat.array().rowwise() * gain.value.row(0).array();
  y.rowwise() += bias.value.row(0);
  if (cache) {
    cache->normalized = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Mat LayerNorm::backward(const Cache& cache, const Mat& dy) {
  const Mat& xhat = cache.normalized;
  gain.grad.row(0) += dy.cwiseProduct(xhat).colwise().sum();
  bias.grad.row(0) += dy.colwise().sum();
  Mat dxhat = dy.array().rowwise() * gain.value.row(0).array();
  Mat dx(dy.rows(), dim_);
  const double n = static_cast<double>(dim_);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_d = dxhat.row(r).mean();
    const double mean_dx = dxhat.row(r).dot(xhat.row(r)) / n;
    dx.row(r) = cache.inv_std(r) *
                (dxhat.row(r).array() - mean_d - xhat.row(r).array() * mean_dx);
  }
  return dx;
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) {
  out.push_back({prefix + ".gain", &gain, false});
  out.push_back({prefix + ".bias", &bias, false});
}

// ---------------------------------------------------------------------------

std::string to_string(ConvMode mode) {
  switch (mode) {
    case ConvMode::Standard: return "standard";
    case ConvMode::Causal: return "causal";
    case ConvMode::None: return "none";
  }
  return "standard";
}

ConvMode conv_mode_from_string(const std::string& name) {
  if (name == "standard") return ConvMode::Standard;
  if (name == "causal") return ConvMode::Causal;
  if (name == "none") return ConvMode::None;
  fail(ErrorKind::ConfigError, "unknown conv mode '" + name + "'");
}

int DepthwiseConv1d::width_for(ConvMode mode) {
  switch (mode) {
    case ConvMode::Standard: return 5;
    case ConvMode::Causal: return 4;
    case ConvMode::None: return 0;
  }
  return 0;
}

int DepthwiseConv1d::left_pad_for(ConvMode mode) {
  switch (mode) {
    case ConvMode::Standard: return 2;
    case ConvMode::Causal: return 3;
    case ConvMode::None: return 0;
  }
  return 0;
}

DepthwiseConv1d::DepthwiseConv1d(int channels, ConvMode mode)
    : channels_(channels),
      mode_(mode),
      width_(width_for(mode)),
      left_pad_(left_pad_for(mode)) {
  if (mode != ConvMode::None) {
    weight = Param(channels, width_);
    bias = Param(1, channels);
  }
}

void DepthwiseConv1d::init_uniform(Rng& rng) {
  if (mode_ == ConvMode::None) return;
  const double bound = 1.0 / std::sqrt(static_cast<double>(width_));
  fill_uniform(weight.value, -bound, bound, rng);
  fill_uniform(bias.value, -bound, bound, rng);
}

Mat DepthwiseConv1d::forward(const Mat& x) const {
  if (mode_ == ConvMode::None) return x;
  if (x.cols() != channels_) fail(ErrorKind::ShapeError, "conv channel mismatch");
  const Eigen::Index len = x.rows();
  Mat y(len, channels_);
  y.rowwise() = bias.value.row(0);
  for (int j = 0; j < width_; ++j) {
    const Eigen::Index shift = j - left_pad_;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - shift);
    if (t1 <= t0) continue;
    y.middleRows(t0, t1 - t0).array() +=
        x.middleRows(t0 + shift, t1 - t0).array().rowwise() * weight.value.col(j).transpose().array();
  }
  return y;
}

Mat DepthwiseConv1d::backward(const Mat& x, const Mat& dy) {
  if (mode_ == ConvMode::None) return dy;
  const Eigen::Index len = x.rows();
  Mat dx = Mat::Zero(len, channels_);
  bias.grad.row(0) += dy.colwise().sum();
  for (int j = 0; j < width_; ++j) {
    const Eigen::Index shift = j - left_pad_;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(len, len - shift);
    if (t1 <= t0) continue;
    const auto dy_part = dy.middleRows(t0, t1 - t0);
    const auto x_part = x.middleRows(t0 + shift, t1 - t0);
    weight.grad.col(j) += dy_part.cwiseProduct(x_part).colwise().sum().transpose();
    dx.middleRows(t0 + shift, t1 - t0).array() +=
        dy_part.array().rowwise() * weight.value.col(j).transpose().array();
  }
  return dx;
}

void DepthwiseConv1d::collect(const std::string& prefix, ParamList& out) {
  if (mode_ == ConvMode::None) return;
  out.push_back({prefix + ".weight", &weight, true});
  out.push_back({prefix + ".bias", &bias, false});
}

std::size_t DepthwiseConv1d::num_params() const {
  if (mode_ == ConvMode::None) return 0;
  return static_cast<std::size_t>(channels_) * (width_ + 1);
}

}  // namespace occtip
