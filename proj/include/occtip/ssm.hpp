#pragma once

#include <string>
#include <vector>

#include "occtip/layers.hpp"
#include "occtip/tensor.hpp"

namespace occtip::ssm {

/// Discretized scalar pair for one (channel, state) entry.
struct Discretized {
  double a_bar;
  double b_bar;
};

/// Zero-order hold with Mamba's simplified input term: ā = exp(dt·a),
/// b̄ = dt·b. Requires dt > 0 and a < 0.
Discretized zoh_discretize(double a, double b, double dt);

/// Exact ZOH input term (exp(dt·a) − 1)/a · b, kept for comparison.
double zoh_exact_b(double a, double b, double dt);

/// Selective state-space parameters over `channels` input channels and an
/// N-dimensional state per channel.
///
///   A      = −exp(a_log)                      channels × N
///   B_t    = b_proj(x_t), C_t = c_proj(x_t)   per step, N each
///   Δ_t    = softplus(dt_up(dt_down(x_t)))    per step, one per channel
///   h_t    = exp(Δ_t A) ⊙ h_{t−1} + Δ_t B_t x_t
///   y_t    = ⟨C_t, h_t⟩ + d_skip ⊙ x_t
struct S6Params {
  int channels = 0;
  int n_state = 0;
  int dt_rank = 0;
  Param a_log;
  Linear b_proj;
  Linear c_proj;
  Linear dt_down;  // channels → dt_rank, no bias
  Linear dt_up;    // dt_rank → channels
  Param d_skip;    // 1 × channels
  bool use_skip = true;

  S6Params() = default;
  S6Params(int channels, int n_state);

  static int rank_for(int channels) { return (channels + 15) / 16; }

  /// Δ in [1e-3, 1e-1] log-uniform via the dt_up bias, |A| spread
  /// log-uniformly over [1, 16] across the state index.
  void init(Rng& rng);

  double a(int channel, int state) const;

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;
  static std::size_t count(int channels, int n_state);
};

/// Per-channel recurrent state; the literal step function operates on it.
struct ScanState {
  std::vector<double> h;  // n_state entries
  long position = 0;
};

/// Intermediates kept by the forward pass for backward.
struct ScanTrace {
  Mat x;           // L × D
  Mat dt_low;      // L × R
  Mat delta_raw;   // L × D
  Mat delta;       // L × D
  Mat b;           // L × N
  Mat c;           // L × N
  std::vector<double> states;  // L × D × N, h_t for every step
};

/// Linear-time scan: projections as batched matrix products, then one pass
/// over time with the state entries of a channel contiguous.
Mat selective_scan(const Mat& x, const S6Params& params, ScanTrace* trace = nullptr);

/// Literal per-step evaluation of the same recurrence. Used as an oracle.
Mat selective_scan_reference(const Mat& x, const S6Params& params);

/// Accumulates gradients into `params` and returns dL/dx.
Mat selective_scan_backward(const ScanTrace& trace, S6Params& params, const Mat& dy);

}  // namespace occtip::ssm
