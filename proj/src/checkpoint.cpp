#include "occtip/checkpoint.hpp"

#include "occtip/error.hpp"

namespace occtip::train {

namespace {

// Checkpoints keep full precision so a resumed run matches an uninterrupted one.
constexpr auto kF64 = store::DType::F64;

void load_into(ParamList& params, const store::Container& c, const std::string& prefix) {
  for (auto& p : params) {
    const Mat m = store::to_mat(c.at(prefix + p.name));
    if (m.rows() != p.param->value.rows() || m.cols() != p.param->value.cols()) {
      fail(ErrorKind::ConfigError, "checkpoint tensor '" + p.name + "' has a different shape");
    }
    p.param->value = m;
  }
}

std::vector<Mat> load_buffers(const ParamList& params, const store::Container& c, const std::string& prefix) {
  std::vector<Mat> out;
  for (const auto& p : params) out.push_back(store::to_mat(c.at(prefix + p.name)));
  return out;
}

}  // namespace

store::Container make_checkpoint(Trainer& trainer) {
  store::Container c;
  c.metadata = {{"kind", "checkpoint"},
                {"encoder", to_json(trainer.model().config())},
                {"train", trainer.config().to_json()},
                {"step", trainer.step_count()},
                {"total_steps", trainer.total_steps()},
                {"adam_steps", trainer.optimizer.steps()},
                {"ema_updates", trainer.ema.updates},
                {"held_views", trainer.split().held_views},
                {"num_params", trainer.model().num_params()}};
  auto params = trainer.model().parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.add(store::from_mat("param/" + params[i].name, params[i].param->value, kF64));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    c.add(store::from_mat("ema/" + params[i].name, trainer.ema.shadow[i], kF64));
  }
  if (!trainer.optimizer.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      c.add(store::from_mat("adam_m/" + params[i].name, trainer.optimizer.m[i], kF64));
      c.add(store::from_mat("adam_v/" + params[i].name, trainer.optimizer.v[i], kF64));
    }
  }
  c.add(store::from_u64("seed", {trainer.config().seed}));
  return c;
}

void restore_checkpoint(Trainer& trainer, const store::Container& c) {
  if (c.metadata.value("kind", "") != "checkpoint") fail(ErrorKind::FormatError, "container is not a checkpoint");
  auto params = trainer.model().parameters();
  load_into(params, c, "param/");
  trainer.ema.shadow = load_buffers(params, c, "ema/");
  trainer.ema.updates = c.metadata.at("ema_updates").get<long>();
  if (c.find("adam_m/" + params.front().name)) {
    trainer.optimizer.m = load_buffers(params, c, "adam_m/");
    trainer.optimizer.v = load_buffers(params, c, "adam_v/");
  } else {
    trainer.optimizer.m.clear();
    trainer.optimizer.v.clear();
  }
  trainer.optimizer.t_ = c.metadata.at("adam_steps").get<long>();
  trainer.set_step(c.metadata.at("step").get<long>());
}

duomamba::EncoderConfig checkpoint_encoder_config(const store::Container& c) {
  if (!c.metadata.contains("encoder")) fail(ErrorKind::FormatError, "checkpoint lacks an encoder config");
  return encoder_config_from_json(c.metadata.at("encoder"));
}

TrainConfig checkpoint_train_config(const store::Container& c) {
  if (!c.metadata.contains("train")) fail(ErrorKind::FormatError, "checkpoint lacks a train config");
  return TrainConfig::from_json(c.metadata.at("train"));
}

Model load_model(const store::Container& c, bool use_ema) {
  Model model(checkpoint_encoder_config(c));
  auto params = model.parameters();
  load_into(params, c, use_ema ? "ema/" : "param/");
  return model;
}

}  // namespace occtip::train
