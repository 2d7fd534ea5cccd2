#pragma once

// Reference implementations used by the tests and the acceptance binary.
// Each one is written out loop by loop from the defining formula and calls
// nothing in the library except parameter accessors.

#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Geometry>

#include "occtip/curves.hpp"
#include "occtip/duomamba.hpp"
#include "occtip/meshgen.hpp"
#include "occtip/ssm.hpp"

namespace oracle {

using occtip::Mat;

// h_t = exp(Δ_t A) h_{t-1} + Δ_t B_t x_t,  y_t = C_t·h_t + D x_t
inline Mat naive_scan(const Mat& x, const occtip::ssm::S6Params& p) {
  const int L = static_cast<int>(x.rows()), D = p.channels, N = p.n_state, R = p.dt_rank;
  Mat y = Mat::Zero(L, D);
  std::vector<double> h(static_cast<std::size_t>(D * N), 0.0);
  for (int t = 0; t < L; ++t) {
    std::vector<double> B(N), C(N), low(R), delta(D);
    for (int n = 0; n < N; ++n) {
      B[n] = p.b_proj.bias.value(0, n);
      C[n] = p.c_proj.bias.value(0, n);
      for (int d = 0; d < D; ++d) {
        B[n] += p.b_proj.weight.value(n, d) * x(t, d);
        C[n] += p.c_proj.weight.value(n, d) * x(t, d);
      }
    }
    for (int r = 0; r < R; ++r) {
      low[r] = 0;
      for (int d = 0; d < D; ++d) low[r] += p.dt_down.weight.value(r, d) * x(t, d);
    }
    for (int d = 0; d < D; ++d) {
      double raw = p.dt_up.bias.value(0, d);
      for (int r = 0; r < R; ++r) raw += p.dt_up.weight.value(d, r) * low[r];
      delta[d] = std::log1p(std::exp(raw));
    }
    for (int d = 0; d < D; ++d) {
      double acc = 0;
      for (int n = 0; n < N; ++n) {
        const double A = -std::exp(p.a_log.value(d, n));
        double& s = h[static_cast<std::size_t>(d * N + n)];
        s = std::exp(delta[d] * A) * s + delta[d] * B[n] * x(t, d);
        acc += C[n] * s;
      }
      y(t, d) = acc + (p.use_skip ? p.d_skip.value(0, d) * x(t, d) : 0.0);
    }
  }
  return y;
}

inline Mat affine(const Mat& x, const occtip::Linear& lin) {
  Mat y(x.rows(), lin.out());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (int o = 0; o < lin.out(); ++o) {
      double acc = lin.has_bias() ? lin.bias.value(0, o) : 0.0;
      for (int i = 0; i < lin.in(); ++i) acc += lin.weight.value(o, i) * x(r, i);
      y(r, o) = acc;
    }
  }
  return y;
}

inline double silu(double v) { return v / (1.0 + std::exp(-v)); }

inline Mat silu(const Mat& x) {
  Mat y = x;
  for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = silu(x.data()[i]);
  return y;
}

inline Mat layer_norm(const Mat& x, const occtip::LayerNorm& ln, double eps = 1e-5) {
  Mat y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double mean = 0, var = 0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) mean += x(r, c);
    mean /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
    var /= static_cast<double>(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      y(r, c) = ln.gain.value(0, c) * (x(r, c) - mean) / std::sqrt(var + eps) + ln.bias.value(0, c);
    }
  }
  return y;
}

// Depthwise, zero padded: y_t = b + Σ_j w_j x_{t+j-pad}
inline Mat conv1d(const Mat& x, const occtip::DepthwiseConv1d& conv) {
  if (conv.mode() == occtip::ConvMode::None) return x;
  const auto L = x.rows();
  Mat y(L, x.cols());
  for (Eigen::Index t = 0; t < L; ++t) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      double acc = conv.bias.value(0, c);
      for (int j = 0; j < conv.width(); ++j) {
        const Eigen::Index s = t + j - conv.left_pad();
        if (s >= 0 && s < L) acc += conv.weight.value(c, j) * x(s, c);
      }
      y(t, c) = acc;
    }
  }
  return y;
}

// Sort: row i of the result is row forward[i] of x. Unsort puts it back.
inline Mat sort_rows(const Mat& x, const occtip::curves::Permutation& p) {
  Mat y(x.rows(), x.cols());
  for (std::size_t i = 0; i < p.forward.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = x.row(p.forward[i]);
  return y;
}

inline Mat unsort_rows(const Mat& x, const occtip::curves::Permutation& p) {
  Mat y(x.rows(), x.cols());
  for (std::size_t i = 0; i < p.forward.size(); ++i) y.row(p.forward[i]) = x.row(static_cast<Eigen::Index>(i));
  return y;
}

// The block equations, one line each:
//   Z_in = LayerNorm(Z_prev)           Z   = SiLU(Linear(Z_in))
//   H'   = HSort(Linear(Z_in))         H'' = SiLU(Conv1D(H'))
//   T'   = THSort(Linear(Z_in))        T'' = SiLU(Conv1D(T'))
//   H    = Unsort(S6(H'')) ⊙ Z         T   = Unsort(S6(T'')) ⊙ Z
//   Z_out = Z_prev + Linear(H + T)
inline Mat block(const Mat& z_prev, const occtip::curves::Permutation& ph, const occtip::curves::Permutation& pt,
                 const occtip::duomamba::DuoMambaBlock& b) {
  const Mat z_in = layer_norm(z_prev, b.norm);
  const Mat z = silu(affine(z_in, b.gate_proj));
  const Mat h1 = sort_rows(affine(z_in, b.branch_proj_h), ph);
  const Mat h2 = silu(conv1d(h1, b.conv_h));
  const Mat t1 = sort_rows(affine(z_in, b.branch_proj_t), pt);
  const Mat t2 = silu(conv1d(t1, b.conv_t));
  const Mat h = unsort_rows(naive_scan(h2, b.s6_h), ph).cwiseProduct(z);
  const Mat t = unsort_rows(naive_scan(t2, b.s6_t), pt).cwiseProduct(z);
  return z_prev + affine(h + t, b.out_proj);
}

// Walks every named tensor and multiplies out its shape.
inline std::size_t enumerate_params(occtip::duomamba::Encoder& enc) {
  occtip::ParamList list;
  enc.collect("enc", list);
  std::size_t total = 0;
  for (const auto& p : list) total += static_cast<std::size_t>(p.param->value.rows() * p.param->value.cols());
  return total;
}

// Closest point on triangle abc to p, by Voronoi region (Ericson, RTCD 5.1.5).
inline occtip::Vec3 closest_on_triangle(const occtip::Vec3& p, const occtip::Vec3& a, const occtip::Vec3& b,
                                        const occtip::Vec3& c) {
  const occtip::Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const occtip::Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + d1 / (d1 - d3) * ab;
  const occtip::Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + d2 / (d2 - d6) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + (d4 - d3) / ((d4 - d3) + (d5 - d6)) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

struct SurfaceHit {
  double distance;
  // true when some face within `tol` of the point faces the camera
  bool visible;
};

// For a convex mesh around the origin: the outward normal of each face is
// the plane normal oriented away from the origin.
inline SurfaceHit locate(const occtip::meshgen::TriangleMesh& mesh, const occtip::Vec3& p,
                         const occtip::Vec3& camera, double tol) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, bool>> faces;
  for (const auto& f : mesh.faces) {
    const auto& a = mesh.vertices[f[0]];
    const auto& b = mesh.vertices[f[1]];
    const auto& c = mesh.vertices[f[2]];
    const double d = (p - closest_on_triangle(p, a, b, c)).norm();
    occtip::Vec3 n = (b - a).cross(c - a).normalized();
    if (n.dot(a + b + c) < 0) n = -n;
    faces.emplace_back(d, n.dot(camera - p) > 0);
    best = std::min(best, d);
  }
  bool visible = false;
  for (const auto& [d, front] : faces) visible = visible || (d <= best + tol && front);
  return {best, visible};
}

}  // namespace oracle
