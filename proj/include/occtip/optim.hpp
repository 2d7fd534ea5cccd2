#pragma once

#include <vector>

#include "occtip/tensor.hpp"

namespace occtip::train {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Adam with decoupled weight decay: p ← p − lr·wd·p − lr·m̂/(√v̂ + ε).
/// Decay applies only to parameters flagged `decay`.
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const AdamWConfig& config) : config_(config) {}

  void step(ParamList& params, double lr);

  const AdamWConfig& config() const { return config_; }
  long steps() const { return t_; }

  /// Moment buffers in parameter order; empty before the first step.
  std::vector<Mat> m;
  std::vector<Mat> v;
  long t_ = 0;

 private:
  AdamWConfig config_;
};

/// Shadow weights. The decay at update n is min(decay, (1+n)/(10+n)) when
/// warmup is on, the plain decay otherwise.
class Ema {
 public:
  Ema() = default;
  Ema(double decay, bool warmup) : decay_(decay), warmup_(warmup) {}

  void reset(const ParamList& params);
  void update(const ParamList& params);
  /// Copies the shadow into the given parameters (same order as reset).
  void apply_to(ParamList& params) const;

  double decay_at(long n) const;
  double decay() const { return decay_; }
  bool warmup() const { return warmup_; }

  std::vector<Mat> shadow;
  long updates = 0;

 private:
  double decay_ = 0.9995;
  bool warmup_ = true;
};

/// Linear warmup over `warmup_steps` from 0 to `base_lr`, then half-cosine
/// to 0 at `total_steps`.
double lr_at(long step, long warmup_steps, long total_steps, double base_lr);

}  // namespace occtip::train
