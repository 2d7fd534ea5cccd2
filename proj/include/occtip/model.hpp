#pragma once

#include <cstdint>
#include <vector>

#include "occtip/align.hpp"
#include "occtip/duomamba.hpp"
#include "occtip/tokenizer.hpp"

namespace occtip::train {

/// Point encoder f^P, the three projection heads, and the shared τ.
class Model {
 public:
  Model() = default;
  explicit Model(const duomamba::EncoderConfig& config);

  /// Seeded init. Heads start at the identity (mixed: averaging) so the
  /// frozen text/image geometry is preserved at step 0.
  void init(std::uint64_t seed);

  /// Stable order: encoder, text head, image head, mixed head, log_tau.
  ParamList parameters();
  std::size_t num_params();
  void zero_grad();

  int clip_dim() const { return encoder.config().embed_dim; }
  const duomamba::EncoderConfig& config() const { return encoder.config(); }

  duomamba::Encoder encoder;
  align::ProjectionHead text_head;
  align::ProjectionHead image_head;
  align::ProjectionHead mixed_head;
  align::TemperatureParam temperature;
};

/// One training batch. Patch sets are borrowed; each row of `text` and
/// `image` is the frozen feature of the matching sample.
struct Batch {
  std::vector<const tokenizer::PatchSet*> patches;
  std::vector<bool> drop_color;
  Mat text;
  Mat image;

  std::size_t size() const { return patches.size(); }
};

/// Point embeddings for a set of patches, before normalization.
Mat encode_points(const Model& model, const std::vector<const tokenizer::PatchSet*>& patches,
                  const std::vector<bool>& drop_color);

/// Mean-reduced total loss. With `backward` set, gradients are accumulated
/// into the model (callers zero them first). The encoder is run twice per
/// sample on the backward path so only one sample's activations are alive
/// at a time.
align::LossBreakdown forward_loss(Model& model, const Batch& batch, bool backward);

}  // namespace occtip::train
