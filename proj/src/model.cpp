#include "occtip/model.hpp"

#include "occtip/error.hpp"

namespace occtip::train {

Model::Model(const duomamba::EncoderConfig& config)
    : encoder(config),
      text_head(align::HeadKind::Text, config.embed_dim),
      image_head(align::HeadKind::Image, config.embed_dim),
      mixed_head(align::HeadKind::Mixed, config.embed_dim) {}

void Model::init(std::uint64_t seed) {
  Rng rng(mix_seed(seed, 0x6d6f64656cULL));
  encoder.init(rng);
  text_head.init_identity();
  image_head.init_identity();
  mixed_head.init_identity();
  temperature = align::TemperatureParam{};
}

ParamList Model::parameters() {
  ParamList out;
  encoder.collect("encoder", out);
  text_head.collect("head.text", out);
  image_head.collect("head.image", out);
  mixed_head.collect("head.mixed", out);
  out.push_back({"log_tau", &temperature.log_tau, false});
  return out;
}

std::size_t Model::num_params() {
  std::size_t total = 0;
  for (const auto& p : parameters()) total += static_cast<std::size_t>(p.param->size());
  return total;
}

void Model::zero_grad() {
  for (auto& p : parameters()) p.param->zero_grad();
}

Mat encode_points(const Model& model, const std::vector<const tokenizer::PatchSet*>& patches,
                  const std::vector<bool>& drop_color) {
  Mat out(static_cast<Eigen::Index>(patches.size()), model.clip_dim());
  for (std::size_t b = 0; b < patches.size(); ++b) {
    const bool drop = b < drop_color.size() && drop_color[b];
    out.row(static_cast<Eigen::Index>(b)) = model.encoder.forward(*patches[b], drop).transpose();
  }
  return out;
}

align::LossBreakdown forward_loss(Model& model, const Batch& batch, bool backward) {
  const auto n = static_cast<Eigen::Index>(batch.size());
  if (n == 0) fail(ErrorKind::InvalidInput, "empty batch");
  if (batch.text.rows() != n || batch.image.rows() != n) fail(ErrorKind::ShapeError, "feature rows do not match batch");
  const int d = model.clip_dim();
  if (batch.text.cols() != d || batch.image.cols() != d) {
    fail(ErrorKind::ConfigError, "fixture feature width " + std::to_string(batch.text.cols()) +
                                     " does not match embed_dim " + std::to_string(d));
  }

  const Mat raw_p = encode_points(model, batch.patches, batch.drop_color);
  const Vec norms_p = raw_p.rowwise().norm();
  align::EmbeddingBatch emb;
  emb.z_p = align::normalize_rows(raw_p);
  align::ProjectionHead::Cache text_cache, image_cache, mixed_cache;
  emb.z_t = model.text_head.project(batch.text, &text_cache);
  emb.z_i = model.image_head.project(batch.image, &image_cache);
  Mat concat(n, 2 * d);
  concat << emb.z_p, emb.z_i;
  emb.z_m = model.mixed_head.project(concat, &mixed_cache);

  const double tau = model.temperature.tau();
  auto result = align::total_loss_grad(emb, tau, align::Reduction::Mean);
  if (!std::isfinite(result.terms.total())) throw NumericalError("total_loss", -1, "non-finite loss");
  if (!backward) return result.terms;

  model.temperature.accumulate(result.dtau);
  const Mat dconcat = model.mixed_head.backward(mixed_cache, result.grads.z_m);
  Mat dz_p = result.grads.z_p + dconcat.leftCols(d);
  const Mat dz_i = result.grads.z_i + dconcat.rightCols(d);
  model.text_head.backward(text_cache, result.grads.z_t);
  model.image_head.backward(image_cache, dz_i);

  const Mat draw_p = align::normalize_rows_backward(emb.z_p, norms_p, dz_p);
  for (Eigen::Index b = 0; b < n; ++b) {
    duomamba::Encoder::Cache cache;
    const bool drop = static_cast<std::size_t>(b) < batch.drop_color.size() && batch.drop_color[b];
    model.encoder.forward(*batch.patches[static_cast<std::size_t>(b)], drop, &cache);
    model.encoder.backward(cache, draw_p.row(b).transpose());
  }
  return result.terms;
}

}  // namespace occtip::train
