#include "occtip/evaluate.hpp"

#include <algorithm>
#include <numeric>

#include "occtip/error.hpp"

namespace occtip::train {

std::vector<int> rank_classes(const Vec& z, const Mat& class_embeddings) {
  if (class_embeddings.rows() == 0) fail(ErrorKind::InvalidInput, "no candidate classes");
  if (class_embeddings.cols() != z.size()) fail(ErrorKind::ShapeError, "class embedding width differs from z");
  const double zn = z.norm();
  std::vector<double> score(static_cast<std::size_t>(class_embeddings.rows()));
  for (Eigen::Index k = 0; k < class_embeddings.rows(); ++k) {
    const double denom = zn * class_embeddings.row(k).norm();
    score[static_cast<std::size_t>(k)] = denom > 0 ? class_embeddings.row(k).dot(z) / denom : 0.0;
  }
  std::vector<int> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return score[a] > score[b]; });
  return order;
}

std::vector<int> zero_shot_classify(const Model& model, const tokenizer::PatchSet& patches,
                                    const Mat& class_text_features) {
  if (class_text_features.rows() == 0) fail(ErrorKind::InvalidInput, "no candidate classes");
  if (class_text_features.cols() != model.clip_dim()) {
    fail(ErrorKind::ConfigError, "class feature width does not match the checkpoint embed_dim");
  }
  const Mat classes = model.text_head.project(class_text_features);
  return rank_classes(model.encoder.forward(patches), classes);
}

json ZeroShotReport::to_json() const {
  return {{"samples", samples}, {"top1", top1}, {"top3", top3}, {"top5", top5}};
}

ZeroShotReport evaluate_zero_shot(const Model& model, const dataset::Dataset& data,
                                  const std::vector<std::size_t>& records) {
  if (data.clip_dim() != model.clip_dim()) {
    fail(ErrorKind::ConfigError, "dataset feature width " + std::to_string(data.clip_dim()) +
                                     " does not match checkpoint embed_dim " + std::to_string(model.clip_dim()));
  }
  const Mat classes = model.text_head.project(data.class_text);
  const auto& cfg = model.config();
  ZeroShotReport r;
  for (auto i : records) {
    const auto& rec = data.records[i];
    const auto patches = tokenizer::make_patches(rec.point_cloud, cfg.s_tokens, cfg.k_neighbors);
    const auto order = rank_classes(model.encoder.forward(patches), classes);
    const int label = data.label_of(rec);
    const auto pos = std::find(order.begin(), order.end(), label) - order.begin();
    r.top1 += pos < 1;
    r.top3 += pos < 3;
    r.top5 += pos < 5;
    ++r.samples;
  }
  if (r.samples > 0) {
    r.top1 /= r.samples;
    r.top3 /= r.samples;
    r.top5 /= r.samples;
  }
  return r;
}

Mat point_features(const Model& model, const dataset::Dataset& data, const std::vector<std::size_t>& records) {
  const auto& cfg = model.config();
  Mat out(static_cast<Eigen::Index>(records.size()), model.clip_dim());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto patches = tokenizer::make_patches(data.records[records[i]].point_cloud, cfg.s_tokens, cfg.k_neighbors);
    out.row(static_cast<Eigen::Index>(i)) = model.encoder.forward(patches).normalized().transpose();
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct Softmax {
  Mat w;  // D × K
  RowVec b;

  Mat logits(const Mat& x) const { return (x * w).rowwise() + b; }

  std::vector<int> predict(const Mat& x) const {
    const Mat l = logits(x);
    std::vector<int> out(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      Eigen::Index arg;
      l.row(i).maxCoeff(&arg);
      out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
    }
    return out;
  }
};

Softmax fit_softmax(const Mat& x, const std::vector<int>& y, int num_classes, const ProbeConfig& config) {
  if (x.rows() != static_cast<Eigen::Index>(y.size())) fail(ErrorKind::ShapeError, "one label per training row");
  if (num_classes < 1) fail(ErrorKind::InvalidInput, "need at least one class");
  std::vector<int> seen(static_cast<std::size_t>(num_classes), 0);
  for (int label : y) {
    if (label < 0 || label >= num_classes) fail(ErrorKind::InvalidInput, "label out of range");
    seen[static_cast<std::size_t>(label)] = 1;
  }
  for (int k = 0; k < num_classes; ++k) {
    if (!seen[static_cast<std::size_t>(k)]) fail(ErrorKind::InvalidInput, "class " + std::to_string(k) + " has no training sample");
  }

  const auto n = x.rows();
  Mat onehot = Mat::Zero(n, num_classes);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, y[static_cast<std::size_t>(i)]) = 1.0;

  Softmax model{Mat::Zero(x.cols(), num_classes), RowVec::Zero(num_classes)};
  for (int it = 0; it < config.iterations; ++it) {
    Mat p = model.logits(x);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - m).exp().matrix();
      p.row(i) /= p.row(i).sum();
    }
    const Mat g = (p - onehot) / static_cast<double>(n);
    model.w -= config.lr * (x.transpose() * g + config.l2 * model.w);
    model.b -= config.lr * g.colwise().sum();
  }
  return model;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (truth.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += pred[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

}  // namespace

double linear_probe(const Mat& train_x, const std::vector<int>& train_y, const Mat& test_x,
                    const std::vector<int>& test_y, int num_classes, const ProbeConfig& config) {
  if (test_x.cols() != train_x.cols()) fail(ErrorKind::ShapeError, "train and test feature widths differ");
  if (test_x.rows() != static_cast<Eigen::Index>(test_y.size())) fail(ErrorKind::ShapeError, "one label per test row");
  const auto model = fit_softmax(train_x, train_y, num_classes, config);
  return accuracy(model.predict(test_x), test_y);
}

double linear_probe_train_accuracy(const Mat& train_x, const std::vector<int>& train_y, int num_classes,
                                   const ProbeConfig& config) {
  const auto model = fit_softmax(train_x, train_y, num_classes, config);
  return accuracy(model.predict(train_x), train_y);
}

json ProbeReport::to_json() const {
  json j = json::object();
  for (std::size_t i = 0; i < shots.size(); ++i) j[std::to_string(shots[i]) + "-shot"] = accuracy[i];
  return j;
}

ProbeReport few_shot_probe(const Mat& pool_x, const std::vector<int>& pool_y, const Mat& test_x,
                           const std::vector<int>& test_y, int num_classes, const std::vector<int>& shots,
                           std::uint64_t seed, const ProbeConfig& config) {
  std::vector<std::vector<Eigen::Index>> by_class(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < pool_y.size(); ++i) {
    const int label = pool_y[i];
    if (label < 0 || label >= num_classes) fail(ErrorKind::InvalidInput, "label out of range");
    by_class[static_cast<std::size_t>(label)].push_back(static_cast<Eigen::Index>(i));
  }
  ProbeReport report;
  for (int n_shot : shots) {
    if (n_shot < 1) fail(ErrorKind::InvalidConfig, "shot count must be positive");
    Rng rng(mix_seed(seed, 0x5407, static_cast<std::uint64_t>(n_shot)));
    std::vector<Eigen::Index> rows;
    std::vector<int> labels;
    for (int k = 0; k < num_classes; ++k) {
      auto pool = by_class[static_cast<std::size_t>(k)];
      if (pool.empty()) fail(ErrorKind::InvalidInput, "class " + std::to_string(k) + " has no training sample");
      std::shuffle(pool.begin(), pool.end(), rng);
      const auto take = std::min<std::size_t>(pool.size(), static_cast<std::size_t>(n_shot));
      for (std::size_t i = 0; i < take; ++i) {
        rows.push_back(pool[i]);
        labels.push_back(k);
      }
    }
    Mat x(static_cast<Eigen::Index>(rows.size()), pool_x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = pool_x.row(rows[i]);
    report.shots.push_back(n_shot);
    report.accuracy.push_back(linear_probe(x, labels, test_x, test_y, num_classes, config));
  }
  return report;
}

}  // namespace occtip::train
