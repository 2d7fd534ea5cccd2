#include "occtip/align.hpp"

#include <algorithm>
#include <cmath>

#include "occtip/error.hpp"

namespace occtip::align {

std::string to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::Text: return "text";
    case HeadKind::Image: return "image";
    case HeadKind::Mixed: return "mixed";
  }
  return "text";
}

Mat normalize_rows(const Mat& x) {
  Mat out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double n = x.row(r).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw NumericalError("normalize_rows", static_cast<long>(r), "zero or non-finite row norm");
    out.row(r) = x.row(r) / n;
  }
  return out;
}

Mat normalize_rows_backward(const Mat& normalized, const Vec& norms, const Mat& dy) {
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double proj = dy.row(r).dot(normalized.row(r));
    dx.row(r) = (dy.row(r) - proj * normalized.row(r)) / norms(r);
  }
  return dx;
}

// ---------------------------------------------------------------------------

ProjectionHead::ProjectionHead(HeadKind kind, int embed_dim)
    : linear(kind == HeadKind::Mixed ? 2 * embed_dim : embed_dim, embed_dim), kind_(kind) {}

void ProjectionHead::init_identity() {
  const int d = linear.out();
  linear.weight.value.setZero();
  if (kind_ == HeadKind::Mixed) {
    linear.weight.value.leftCols(d) = 0.5 * Mat::Identity(d, d);
    linear.weight.value.rightCols(d) = 0.5 * Mat::Identity(d, d);
  } else {
    linear.weight.value = Mat::Identity(d, d);
  }
  linear.bias.value.setZero();
}

Mat ProjectionHead::project(const Mat& features, Cache* cache) const {
  if (features.cols() != linear.in()) {
    fail(ErrorKind::ShapeError, to_string(kind_) + " head expects " + std::to_string(linear.in()) +
                                    " features, got " + std::to_string(features.cols()));
  }
  const Mat raw = linear.forward(features);
  Mat out = normalize_rows(raw);
  if (cache) {
    cache->input = features;
    cache->norms = raw.rowwise().norm();
    cache->output = out;
  }
  return out;
}

Mat ProjectionHead::backward(const Cache& cache, const Mat& dy) {
  return linear.backward(cache.input, normalize_rows_backward(cache.output, cache.norms, dy));
}

void ProjectionHead::collect(const std::string& prefix, ParamList& out) { linear.collect(prefix, out); }

// ---------------------------------------------------------------------------

TemperatureParam::TemperatureParam() { log_tau.value(0, 0) = std::log(kInit); }

double TemperatureParam::tau() const { return std::clamp(std::exp(log_tau.value(0, 0)), kMin, kMax); }

bool TemperatureParam::in_range() const {
  const double t = std::exp(log_tau.value(0, 0));
  return t >= kMin && t <= kMax;
}

void TemperatureParam::accumulate(double dtau) {
  if (in_range()) log_tau.grad(0, 0) += dtau * std::exp(log_tau.value(0, 0));
}

// ---------------------------------------------------------------------------

namespace {

void check_pair(const Mat& za, const Mat& zb, double tau) {
  if (!(tau > 0.0)) fail(ErrorKind::InvalidInput, "temperature must be positive");
  if (za.rows() < 1) fail(ErrorKind::InvalidInput, "empty batch");
  if (za.rows() != zb.rows() || za.cols() != zb.cols()) fail(ErrorKind::ShapeError, "paired embeddings differ in shape");
}

/// Row-wise softmax and log-sum-exp of a logits matrix.
void softmax_rows(const Mat& logits, Mat& probs, Vec& lse) {
  probs.resize(logits.rows(), logits.cols());
  lse.resize(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double m = logits.row(i).maxCoeff();
    const auto e = (logits.row(i).array() - m).exp();
    const double sum = e.sum();
    lse(i) = m + std::log(sum);
    probs.row(i) = e / sum;
  }
}

}  // namespace

double cross_modal_loss(const Mat& za, const Mat& zb, double tau, Reduction reduction) {
  return cross_modal_loss_grad(za, zb, tau, reduction).value;
}

PairLoss cross_modal_loss_grad(const Mat& za, const Mat& zb, double tau, Reduction reduction) {
  check_pair(za, zb, tau);
  const Eigen::Index batch = za.rows();
  const Mat sim = za * zb.transpose();
  const Mat logits = sim / tau;
  Mat p_ab, p_ba;
  Vec lse_ab, lse_ba;
  softmax_rows(logits, p_ab, lse_ab);
  softmax_rows(logits.transpose(), p_ba, lse_ba);

  double l_ab = 0.0;
  double l_ba = 0.0;
  for (Eigen::Index i = 0; i < batch; ++i) {
    l_ab += logits(i, i) - lse_ab(i);
    l_ba += logits(i, i) - lse_ba(i);
  }
  const double scale = reduction == Reduction::Mean ? 1.0 / static_cast<double>(batch) : 1.0;

  PairLoss out;
  out.value = -0.5 * (l_ab + l_ba) * scale;
  // dL/dlogits = ½(P_ab − I) + ½(P_baᵀ − I), times the reduction scale
  Mat dlogits = 0.5 * (p_ab + p_ba.transpose());
  dlogits.diagonal().array() -= 1.0;
  dlogits *= scale;
  out.dza = dlogits * zb / tau;
  out.dzb = dlogits.transpose() * za / tau;
  out.dtau = -(dlogits.cwiseProduct(sim)).sum() / (tau * tau);
  return out;
}

LossBreakdown total_loss(const EmbeddingBatch& batch, double tau, Reduction reduction) {
  return total_loss_grad(batch, tau, reduction).terms;
}

TotalLossGrad total_loss_grad(const EmbeddingBatch& batch, double tau, Reduction reduction) {
  if (batch.z_t.size() == 0 || batch.z_i.size() == 0 || batch.z_p.size() == 0 || batch.z_m.size() == 0) {
    fail(ErrorKind::InvalidInput, "all four modalities are required");
  }
  const auto pi = cross_modal_loss_grad(batch.z_p, batch.z_i, tau, reduction);
  const auto pt = cross_modal_loss_grad(batch.z_p, batch.z_t, tau, reduction);
  const auto it = cross_modal_loss_grad(batch.z_i, batch.z_t, tau, reduction);
  const auto mt = cross_modal_loss_grad(batch.z_m, batch.z_t, tau, reduction);

  TotalLossGrad out;
  out.terms = {pi.value, pt.value, it.value, mt.value};
  out.grads.z_p = pi.dza + pt.dza;
  out.grads.z_i = pi.dzb + it.dza;
  out.grads.z_t = pt.dzb + it.dzb + mt.dzb;
  out.grads.z_m = mt.dza;
  out.dtau = pi.dtau + pt.dtau + it.dtau + mt.dtau;
  return out;
}

}  // namespace occtip::align
