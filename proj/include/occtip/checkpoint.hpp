#pragma once

#include "occtip/store.hpp"
#include "occtip/trainer.hpp"

namespace occtip::train {

/// Parameters, EMA shadow, AdamW moments, step counter, seed, configs, and
/// the held-out split, all in one container.
store::Container make_checkpoint(Trainer& trainer);

/// Restores parameters, EMA, optimizer state, and step. The trainer must
/// have been built with the checkpoint's configs.
void restore_checkpoint(Trainer& trainer, const store::Container& checkpoint);

duomamba::EncoderConfig checkpoint_encoder_config(const store::Container& checkpoint);
TrainConfig checkpoint_train_config(const store::Container& checkpoint);

/// A model rebuilt from a checkpoint, with EMA weights when `use_ema`.
Model load_model(const store::Container& checkpoint, bool use_ema = true);

}  // namespace occtip::train
