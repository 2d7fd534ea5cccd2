#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <utility>
#include <vector>

#include "occtip/dataset.hpp"
#include "occtip/model.hpp"
#include "occtip/optim.hpp"

namespace occtip::train {

using store::json;

struct TrainConfig {
  int batch_size = 32;
  int epochs = 50;
  int warmup_epochs = 10;
  double base_lr = 7e-4;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double ema_decay = 0.9995;
  bool ema_warmup = true;
  double color_drop_prob = 0.5;
  int held_out_views = 2;
  std::uint64_t seed = 0;

  /// Throws InvalidConfig naming the field.
  void validate() const;
  json to_json() const;
  /// Missing keys keep the values of `base`; unknown keys are rejected.
  static TrainConfig from_json(const json& j, TrainConfig base);
  static TrainConfig from_json(const json& j);
};

json to_json(const duomamba::EncoderConfig& config);
duomamba::EncoderConfig encoder_config_from_json(const json& j, duomamba::EncoderConfig base = {});

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  double lr = 0;
  align::LossBreakdown terms;
  double tau = 0;

  json to_json() const;
};

/// Desk-scale training loop. An epoch is one round per training view: each
/// round visits every object once, with a freshly shuffled view, in batches
/// of distinct objects. Every random choice at step n is derived from
/// (seed, n), so resuming from a checkpoint replays the same trajectory.
class Trainer {
 public:
  Trainer(const dataset::Dataset& data, const duomamba::EncoderConfig& encoder, const TrainConfig& config);

  long steps_per_epoch() const { return rounds_ * batches_per_round_; }
  long total_steps() const { return steps_per_epoch() * config_.epochs; }
  long warmup_steps() const { return steps_per_epoch() * config_.warmup_epochs; }
  long step_count() const { return step_; }
  bool done() const { return step_ >= total_steps(); }

  StepMetrics step();
  void run(const std::function<void(const StepMetrics&)>& on_step = {});

  /// Loss on the given batch without touching any state.
  align::LossBreakdown evaluate_batch(const std::vector<std::pair<int, int>>& object_views);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  /// A copy of the model carrying the EMA shadow weights.
  Model ema_model() const;

  const dataset::Split& split() const { return split_; }
  const TrainConfig& config() const { return config_; }
  const dataset::Dataset& data() const { return data_; }
  const tokenizer::PatchSet& patches(int object_id, int view_id);

  AdamW optimizer;
  Ema ema;

  /// Used by checkpoint restore.
  void set_step(long step) { step_ = step; }

 private:
  std::vector<std::pair<int, int>> schedule(long step) const;
  Batch make_batch(const std::vector<std::pair<int, int>>& object_views, Rng* rng);

  const dataset::Dataset& data_;
  TrainConfig config_;
  Model model_;
  dataset::Split split_;
  long rounds_ = 0;
  long batches_per_round_ = 0;
  int batch_ = 0;
  long step_ = 0;
  std::map<std::pair<int, int>, tokenizer::PatchSet> patch_cache_;
};

}  // namespace occtip::train
