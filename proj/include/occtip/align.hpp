#pragma once

#include <array>
#include <string>

#include "occtip/layers.hpp"
#include "occtip/tensor.hpp"

namespace occtip::align {

enum class HeadKind { Text, Image, Mixed };

std::string to_string(HeadKind kind);

/// Row-wise L2 normalization. Throws NumericalError on a zero row.
Mat normalize_rows(const Mat& x);
/// Backward of normalize_rows given the normalized output and the raw input
/// row norms.
Mat normalize_rows_backward(const Mat& normalized, const Vec& norms, const Mat& dy);

/// Learnable affine map into the shared space, followed by row-wise L2
/// normalization. The mixed head takes Concat(z^P, z^I).
class ProjectionHead {
 public:
  struct Cache {
    Mat input;
    Vec norms;
    Mat output;
  };

  ProjectionHead() = default;
  ProjectionHead(HeadKind kind, int embed_dim);

  /// Text and image heads start at the identity; the mixed head at [½I ½I].
  /// Biases start at zero.
  void init_identity();

  Mat project(const Mat& features, Cache* cache = nullptr) const;
  Mat backward(const Cache& cache, const Mat& dy);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const { return linear.num_params(); }

  HeadKind kind() const { return kind_; }
  int in_dim() const { return linear.in(); }
  int out_dim() const { return linear.out(); }

  Linear linear;

 private:
  HeadKind kind_ = HeadKind::Text;
};

/// τ = exp(log_tau) clamped to [5e-3, 1].
struct TemperatureParam {
  static constexpr double kMin = 5e-3;
  static constexpr double kMax = 1.0;
  static constexpr double kInit = 0.07;

  Param log_tau{1, 1};

  TemperatureParam();
  double tau() const;
  /// False when the clamp is active (gradient does not reach log_tau).
  bool in_range() const;
  /// Adds dL/dτ to the log_tau gradient.
  void accumulate(double dtau);
};

enum class Reduction { Sum, Mean };

struct PairLoss {
  double value = 0;
  Mat dza;
  Mat dzb;
  double dtau = 0;
};

/// −½(l^{a→b} + l^{b→a}), l^{a→b} = Σ_i log softmax_j(za_i·zb_j/τ)_i.
/// Sum reduction follows the batch sum; Mean divides by B.
double cross_modal_loss(const Mat& za, const Mat& zb, double tau, Reduction reduction = Reduction::Sum);
/// Loss and its gradients with respect to both inputs and τ.
PairLoss cross_modal_loss_grad(const Mat& za, const Mat& zb, double tau,
                               Reduction reduction = Reduction::Sum);

/// z^T, z^I, z^P, z^M rows (unit norm before loss computation).
struct EmbeddingBatch {
  Mat z_t;
  Mat z_i;
  Mat z_p;
  Mat z_m;
};

struct LossBreakdown {
  double point_image = 0;
  double point_text = 0;
  double image_text = 0;
  double mixed_text = 0;
  double total() const { return point_image + point_text + image_text + mixed_text; }
};

struct TotalLossGrad {
  LossBreakdown terms;
  EmbeddingBatch grads;
  double dtau = 0;
};

/// L^{P↔I} + L^{P↔T} + L^{I↔T} + L^{M↔T} with one shared τ.
LossBreakdown total_loss(const EmbeddingBatch& batch, double tau, Reduction reduction = Reduction::Sum);
TotalLossGrad total_loss_grad(const EmbeddingBatch& batch, double tau,
                              Reduction reduction = Reduction::Mean);

}  // namespace occtip::align
