#include "occtip/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "occtip/error.hpp"

namespace occtip::train {

void TrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& why) {
    fail(ErrorKind::InvalidConfig, field + " " + why);
  };
  if (batch_size < 1) bad("batch_size", "must be positive");
  if (epochs < 0) bad("epochs", "must be non-negative");
  if (warmup_epochs < 0 || warmup_epochs > epochs) bad("warmup_epochs", "must lie in [0, epochs]");
  if (!(base_lr >= 0.0) || !std::isfinite(base_lr)) bad("base_lr", "must be a finite non-negative number");
  if (!(weight_decay >= 0.0)) bad("weight_decay", "must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) bad("beta1", "must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) bad("beta2", "must lie in [0, 1)");
  if (!(ema_decay >= 0.0 && ema_decay <= 1.0)) bad("ema_decay", "must lie in [0, 1]");
  if (!(color_drop_prob >= 0.0 && color_drop_prob <= 1.0)) bad("color_drop_prob", "must lie in [0, 1]");
  if (held_out_views < 0) bad("held_out_views", "must be non-negative");
}

json TrainConfig::to_json() const {
  return {{"batch_size", batch_size},
          {"epochs", epochs},
          {"warmup_epochs", warmup_epochs},
          {"base_lr", base_lr},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"ema_decay", ema_decay},
          {"ema_warmup", ema_warmup},
          {"color_drop_prob", color_drop_prob},
          {"color_constant", tokenizer::kColorConstant},
          {"held_out_views", held_out_views},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const json& j, TrainConfig c) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "train config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "batch_size") c.batch_size = it->get<int>();
      else if (k == "epochs") c.epochs = it->get<int>();
      else if (k == "warmup_epochs") c.warmup_epochs = it->get<int>();
      else if (k == "base_lr") c.base_lr = it->get<double>();
      else if (k == "weight_decay") c.weight_decay = it->get<double>();
      else if (k == "beta1") c.beta1 = it->get<double>();
      else if (k == "beta2") c.beta2 = it->get<double>();
      else if (k == "ema_decay") c.ema_decay = it->get<double>();
      else if (k == "ema_warmup") c.ema_warmup = it->get<bool>();
      else if (k == "color_drop_prob") c.color_drop_prob = it->get<double>();
      else if (k == "held_out_views") c.held_out_views = it->get<int>();
      else if (k == "seed") c.seed = it->get<std::uint64_t>();
      else if (k == "color_constant") {
        if (it->get<double>() != tokenizer::kColorConstant) fail(ErrorKind::InvalidConfig, "color_constant is fixed at 0.4");
      } else {
        fail(ErrorKind::InvalidConfig, "unknown train field '" + k + "'");
      }
    } catch (const json::exception&) {
      fail(ErrorKind::InvalidConfig, k + " has the wrong type");
    }
  }
  return c;
}

TrainConfig TrainConfig::from_json(const json& j) { return from_json(j, TrainConfig{}); }

json to_json(const duomamba::EncoderConfig& c) {
  return {{"l_blocks", c.l_blocks},
          {"c_dim", c.c_dim},
          {"s_tokens", c.s_tokens},
          {"k_neighbors", c.k_neighbors},
          {"n_state", c.n_state},
          {"expand", c.expand},
          {"embed_dim", c.embed_dim},
          {"curve_bits", c.curve_bits},
          {"curve_a", curves::to_string(c.curve_a)},
          {"curve_b", curves::to_string(c.curve_b)},
          {"conv_mode", to_string(c.conv_mode)},
          {"allow_same_curves", c.allow_same_curves}};
}

duomamba::EncoderConfig encoder_config_from_json(const json& j, duomamba::EncoderConfig c) {
  if (!j.is_object()) fail(ErrorKind::InvalidConfig, "encoder config must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& k = it.key();
    try {
      if (k == "l_blocks") c.l_blocks = it->get<int>();
      else if (k == "c_dim") c.c_dim = it->get<int>();
      else if (k == "s_tokens") c.s_tokens = it->get<int>();
      else if (k == "k_neighbors") c.k_neighbors = it->get<int>();
      else if (k == "n_state") c.n_state = it->get<int>();
      else if (k == "expand") c.expand = it->get<int>();
      else if (k == "embed_dim") c.embed_dim = it->get<int>();
      else if (k == "curve_bits") c.curve_bits = it->get<int>();
      else if (k == "curve_a") c.curve_a = curves::curve_from_string(it->get<std::string>());
      else if (k == "curve_b") c.curve_b = curves::curve_from_string(it->get<std::string>());
      else if (k == "conv_mode") c.conv_mode = conv_mode_from_string(it->get<std::string>());
      else if (k == "allow_same_curves") c.allow_same_curves = it->get<bool>();
      else fail(ErrorKind::InvalidConfig, "unknown encoder field '" + k + "'");
    } catch (const json::exception&) {
      fail(ErrorKind::InvalidConfig, k + " has the wrong type");
    }
  }
  return c;
}

json StepMetrics::to_json() const {
  return {{"step", step},
          {"epoch", epoch},
          {"lr", lr},
          {"loss", terms.total()},
          {"point_image", terms.point_image},
          {"point_text", terms.point_text},
          {"image_text", terms.image_text},
          {"mixed_text", terms.mixed_text},
          {"tau", tau}};
}

// ---------------------------------------------------------------------------

Trainer::Trainer(const dataset::Dataset& data, const duomamba::EncoderConfig& encoder, const TrainConfig& config)
    : optimizer(AdamWConfig{config.beta1, config.beta2, 1e-8, config.weight_decay}),
      ema(config.ema_decay, config.ema_warmup),
      data_(data),
      config_(config),
      model_(encoder) {
  config_.validate();
  encoder.validate();
  if (data.objects.empty()) fail(ErrorKind::InvalidInput, "dataset has no objects");
  if (data.clip_dim() != encoder.embed_dim) {
    fail(ErrorKind::ConfigError, "dataset feature width " + std::to_string(data.clip_dim()) +
                                     " does not match embed_dim " + std::to_string(encoder.embed_dim));
  }
  split_ = dataset::split_views(data, config_.held_out_views, config_.seed);
  rounds_ = static_cast<long>(split_.train_views.front().size());
  for (const auto& v : split_.train_views) rounds_ = std::min(rounds_, static_cast<long>(v.size()));
  const int objects = static_cast<int>(data.objects.size());
  batch_ = std::min(config_.batch_size, objects);
  batches_per_round_ = (objects + batch_ - 1) / batch_;
  model_.init(config_.seed);
  auto params = model_.parameters();
  ema.reset(params);
}

const tokenizer::PatchSet& Trainer::patches(int object_id, int view_id) {
  const auto key = std::make_pair(object_id, view_id);
  auto it = patch_cache_.find(key);
  if (it == patch_cache_.end()) {
    const auto& rec = data_.records[dataset::record_index(data_, object_id, view_id)];
    const auto& cfg = model_.config();
    it = patch_cache_.emplace(key, tokenizer::make_patches(rec.point_cloud, cfg.s_tokens, cfg.k_neighbors)).first;
  }
  return it->second;
}

std::vector<std::pair<int, int>> Trainer::schedule(long step) const {
  const long index = step - 1;
  const long epoch = index / steps_per_epoch();
  const long within = index % steps_per_epoch();
  const long round = within / batches_per_round_;
  const long chunk = within % batches_per_round_;
  const auto objects = static_cast<int>(data_.objects.size());

  std::vector<int> order(static_cast<std::size_t>(objects));
  std::iota(order.begin(), order.end(), 0);
  Rng object_rng(mix_seed(config_.seed, 0x0bec7 + static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(round)));
  std::shuffle(order.begin(), order.end(), object_rng);

  std::vector<std::pair<int, int>> out;
  const long begin = chunk * batch_;
  const long end = std::min<long>(begin + batch_, objects);
  for (long i = begin; i < end; ++i) {
    const int o = order[static_cast<std::size_t>(i)];
    auto views = split_.train_views[static_cast<std::size_t>(o)];
    Rng view_rng(mix_seed(config_.seed, 0x71e3 + static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(o)));
    std::shuffle(views.begin(), views.end(), view_rng);
    out.emplace_back(o, views[static_cast<std::size_t>(round) % views.size()]);
  }
  return out;
}

Batch Trainer::make_batch(const std::vector<std::pair<int, int>>& object_views, Rng* rng) {
  Batch batch;
  const auto n = static_cast<Eigen::Index>(object_views.size());
  const int d = data_.clip_dim();
  batch.text.resize(n, d);
  batch.image.resize(n, d);
  std::bernoulli_distribution drop(config_.color_drop_prob);
  for (Eigen::Index b = 0; b < n; ++b) {
    const auto [o, v] = object_views[static_cast<std::size_t>(b)];
    batch.patches.push_back(&patches(o, v));
    const auto& rec = data_.records[dataset::record_index(data_, o, v)];
    batch.image.row(b) = rec.image_feature.transpose();
    if (rng) {
      std::uniform_int_distribution<Eigen::Index> caption(0, rec.text_features.rows() - 1);
      batch.text.row(b) = rec.text_features.row(caption(*rng));
      batch.drop_color.push_back(drop(*rng));
    } else {
      batch.text.row(b) = rec.text_features.row(0);
      batch.drop_color.push_back(false);
    }
  }
  return batch;
}

StepMetrics Trainer::step() {
  if (done()) fail(ErrorKind::InvalidInput, "training already finished");
  const long n = step_ + 1;
  Rng rng(mix_seed(config_.seed, 0x57e9, static_cast<std::uint64_t>(n)));
  const Batch batch = make_batch(schedule(n), &rng);

  model_.zero_grad();
  StepMetrics m;
  m.step = n;
  m.epoch = static_cast<int>((n - 1) / steps_per_epoch());
  m.tau = model_.temperature.tau();
  m.terms = forward_loss(model_, batch, true);
  m.lr = lr_at(n, warmup_steps(), total_steps(), config_.base_lr);

  auto params = model_.parameters();
  for (const auto& p : params) {
    if (!all_finite(p.param->grad)) throw NumericalError(p.name + ".grad", n, "non-finite gradient");
  }
  optimizer.step(params, m.lr);
  for (const auto& p : params) {
    if (!all_finite(p.param->value)) throw NumericalError(p.name, n, "non-finite parameter after update");
  }
  ema.update(params);
  step_ = n;
  return m;
}

void Trainer::run(const std::function<void(const StepMetrics&)>& on_step) {
  while (!done()) {
    const auto m = step();
    if (on_step) on_step(m);
  }
}

align::LossBreakdown Trainer::evaluate_batch(const std::vector<std::pair<int, int>>& object_views) {
  const Batch batch = make_batch(object_views, nullptr);
  return forward_loss(model_, batch, false);
}

Model Trainer::ema_model() const {
  Model copy = model_;
  auto params = copy.parameters();
  ema.apply_to(params);
  return copy;
}

}  // namespace occtip::train
