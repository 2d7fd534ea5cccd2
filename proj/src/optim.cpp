#include "occtip/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "occtip/error.hpp"

namespace occtip::train {

void AdamW::step(ParamList& params, double lr) {
  if (m.empty()) {
    for (const auto& p : params) {
      m.push_back(Mat::Zero(p.param->value.rows(), p.param->value.cols()));
      v.push_back(Mat::Zero(p.param->value.rows(), p.param->value.cols()));
    }
  }
  if (m.size() != params.size()) fail(ErrorKind::ShapeError, "optimizer state does not match parameter list");
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param& p = *params[i].param;
    if (!all_finite(p.grad)) throw NumericalError(params[i].name + ".grad", t_, "non-finite gradient");
    m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * p.grad;
    v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
    if (params[i].decay && config_.weight_decay != 0.0) p.value -= lr * config_.weight_decay * p.value;
    const auto update = (m[i].array() / c1) / ((v[i].array() / c2).sqrt() + config_.eps);
    p.value.array() -= lr * update;
  }
}

void Ema::reset(const ParamList& params) {
  shadow.clear();
  for (const auto& p : params) shadow.push_back(p.param->value);
  updates = 0;
}

double Ema::decay_at(long n) const {
  if (!warmup_) return decay_;
  return std::min(decay_, (1.0 + static_cast<double>(n)) / (10.0 + static_cast<double>(n)));
}

void Ema::update(const ParamList& params) {
  if (shadow.size() != params.size()) fail(ErrorKind::ShapeError, "EMA shadow does not match parameter list");
  const double d = decay_at(updates);
  // written as a step toward the parameters so equal values stay bitwise equal
  for (std::size_t i = 0; i < params.size(); ++i) shadow[i] += (1.0 - d) * (params[i].param->value - shadow[i]);
  ++updates;
}

void Ema::apply_to(ParamList& params) const {
  if (shadow.size() != params.size()) fail(ErrorKind::ShapeError, "EMA shadow does not match parameter list");
  for (std::size_t i = 0; i < params.size(); ++i) params[i].param->value = shadow[i];
}

double lr_at(long step, long warmup_steps, long total_steps, double base_lr) {
  if (step <= 0 || total_steps <= 0) return 0.0;
  if (step >= total_steps) return 0.0;
  if (step <= warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(std::max(1L, warmup_steps));
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace occtip::train
