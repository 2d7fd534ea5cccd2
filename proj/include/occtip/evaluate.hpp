#pragma once

#include <cstdint>
#include <vector>

#include "occtip/dataset.hpp"
#include "occtip/model.hpp"

namespace occtip::train {

using store::json;

/// Class indices ordered by descending cosine similarity of `z` to the rows
/// of `class_embeddings`; ties go to the lower index. Throws InvalidInput
/// when there are no classes.
std::vector<int> rank_classes(const Vec& z, const Mat& class_embeddings);

/// Projects the class text features through h^T and ranks them against the
/// point embedding of `patches`.
std::vector<int> zero_shot_classify(const Model& model, const tokenizer::PatchSet& patches,
                                    const Mat& class_text_features);

struct ZeroShotReport {
  int samples = 0;
  double top1 = 0;
  double top3 = 0;
  double top5 = 0;

  json to_json() const;
};

/// Top-1/3/5 accuracy over the given records.
ZeroShotReport evaluate_zero_shot(const Model& model, const dataset::Dataset& data,
                                  const std::vector<std::size_t>& records);

/// Normalized point embeddings (one row per record).
Mat point_features(const Model& model, const dataset::Dataset& data, const std::vector<std::size_t>& records);

struct ProbeConfig {
  int iterations = 1000;
  double lr = 0.1;
  double l2 = 1e-4;
};

/// Multinomial logistic regression by full-batch gradient descent; returns
/// test accuracy. Throws InvalidInput when a class has no training sample.
double linear_probe(const Mat& train_x, const std::vector<int>& train_y, const Mat& test_x,
                    const std::vector<int>& test_y, int num_classes, const ProbeConfig& config = {});

/// Accuracy on the training set itself (used by the separability check).
double linear_probe_train_accuracy(const Mat& train_x, const std::vector<int>& train_y, int num_classes,
                                   const ProbeConfig& config = {});

inline const std::vector<int> kShots = {1, 2, 4, 8, 16};

struct ProbeReport {
  std::vector<int> shots;
  std::vector<double> accuracy;

  json to_json() const;
};

/// For each shot count, draws n examples per class from the pool (seeded)
/// and evaluates on the test set. Shot counts larger than the smallest class
/// pool are capped at it.
ProbeReport few_shot_probe(const Mat& pool_x, const std::vector<int>& pool_y, const Mat& test_x,
                           const std::vector<int>& test_y, int num_classes, const std::vector<int>& shots,
                           std::uint64_t seed, const ProbeConfig& config = {});

}  // namespace occtip::train
