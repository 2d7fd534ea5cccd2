#pragma once

#include <string>

#include "occtip/tensor.hpp"

namespace occtip {

double sigmoid(double x);
double silu(double x);
/// d silu / dx
double silu_grad(double x);
double softplus(double x);
/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

Mat silu(const Mat& x);
/// Returns dy ⊙ silu'(x).
Mat silu_backward(const Mat& x, const Mat& dy);

/// y = x Wᵀ + b applied row-wise. W is out×in.
class Linear {
 public:
  Linear() = default;
  Linear(int in, int out, bool bias = true);

  /// PyTorch-style uniform(-1/√in, 1/√in) for weight and bias.
  void init_uniform(Rng& rng);

  Mat forward(const Mat& x) const;
  /// Accumulates weight/bias gradients and returns dL/dx.
  Mat backward(const Mat& x, const Mat& dy);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;
  static std::size_t count(int in, int out, bool bias = true) {
    return static_cast<std::size_t>(in) * out + (bias ? out : 0);
  }

  int in() const { return in_; }
  int out() const { return out_; }
  bool has_bias() const { return has_bias_; }

  Param weight;
  Param bias;

 private:
  int in_ = 0;
  int out_ = 0;
  bool has_bias_ = true;
};

/// Per-row layer normalization with learnable gain and bias.
class LayerNorm {
 public:
  struct Cache {
    Mat normalized;  // x̂
    Vec inv_std;
  };

  LayerNorm() = default;
  explicit LayerNorm(int dim, double eps = 1e-5);

  Mat forward(const Mat& x, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& dy);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const { return 2 * static_cast<std::size_t>(dim_); }

  Param gain;
  Param bias;

 private:
  int dim_ = 0;
  double eps_ = 1e-5;
};

enum class ConvMode { Standard, Causal, None };

std::string to_string(ConvMode mode);
ConvMode conv_mode_from_string(const std::string& name);

/// Depthwise 1D convolution along the sequence axis of an L×D matrix.
/// Standard mode is width 5 with symmetric padding 2; causal mode is width 4
/// with left padding 3; None is the identity and owns no parameters.
class DepthwiseConv1d {
 public:
  DepthwiseConv1d() = default;
  DepthwiseConv1d(int channels, ConvMode mode);

  static int width_for(ConvMode mode);
  static int left_pad_for(ConvMode mode);

  void init_uniform(Rng& rng);

  Mat forward(const Mat& x) const;
  Mat backward(const Mat& x, const Mat& dy);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;

  ConvMode mode() const { return mode_; }
  int width() const { return width_; }
  int left_pad() const { return left_pad_; }

  Param weight;  // channels × width
  Param bias;    // 1 × channels

 private:
  int channels_ = 0;
  ConvMode mode_ = ConvMode::Standard;
  int width_ = 0;
  int left_pad_ = 0;
};

}  // namespace occtip
