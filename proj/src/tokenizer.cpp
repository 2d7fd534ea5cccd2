#include "occtip/tokenizer.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include "occtip/error.hpp"

namespace occtip::tokenizer {

namespace {

bool lex_less(const Vec3& a, const Vec3& b) {
  return std::tie(a.x(), a.y(), a.z()) < std::tie(b.x(), b.y(), b.z());
}

}  // namespace

std::vector<Vec3> PatchSet::center_list() const {
  std::vector<Vec3> out(static_cast<std::size_t>(centers.rows()));
  for (Eigen::Index i = 0; i < centers.rows(); ++i) out[static_cast<std::size_t>(i)] = centers.row(i).transpose();
  return out;
}

std::vector<std::uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, int s) {
  if (points.empty()) fail(ErrorKind::InvalidInput, "FPS on an empty cloud");
  if (s < 1) fail(ErrorKind::InvalidInput, "FPS count must be positive");
  const std::size_t n = points.size();
  std::size_t start = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (lex_less(points[i], points[start])) start = i;
  }

  const std::size_t distinct_rounds = std::min<std::size_t>(n, static_cast<std::size_t>(s));
  std::vector<std::uint32_t> chosen;
  chosen.reserve(static_cast<std::size_t>(s));
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<bool> taken(n, false);
  std::size_t current = start;
  for (std::size_t round = 0; round < distinct_rounds; ++round) {
    chosen.push_back(static_cast<std::uint32_t>(current));
    taken[current] = true;
    if (round + 1 == distinct_rounds) break;
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      min_dist[i] = std::min(min_dist[i], (points[i] - points[current]).squaredNorm());
      if (best == n || min_dist[i] > min_dist[best] ||
          (min_dist[i] == min_dist[best] && lex_less(points[i], points[best]))) {
        best = i;
      }
    }
    current = best;
  }
  for (std::size_t i = chosen.size(); i < static_cast<std::size_t>(s); ++i) {
    chosen.push_back(chosen[i % n]);
  }
  return chosen;
}

PatchSet knn_group(const std::vector<Vec3>& points, const std::vector<meshgen::Rgb>& colors,
                   const Mat& centers, int k) {
  if (k < 1) fail(ErrorKind::InvalidConfig, "k must be positive");
  if (static_cast<std::size_t>(k) > points.size()) {
    fail(ErrorKind::InvalidConfig, "k = " + std::to_string(k) + " exceeds cloud size " +
                                       std::to_string(points.size()));
  }
  if (!colors.empty() && colors.size() != points.size()) {
    fail(ErrorKind::ShapeError, "color count does not match point count");
  }
  const auto s = centers.rows();
  PatchSet out;
  out.k = k;
  out.centers = centers;
  out.neighbor_indices.resize(static_cast<std::size_t>(s) * k);
  out.relative_points.resize(s * k, 3);
  if (!colors.empty()) out.patch_colors.resize(s * k, 3);

  std::vector<std::uint32_t> order(points.size());
  std::vector<double> dist(points.size());
  for (Eigen::Index c = 0; c < s; ++c) {
    const Vec3 center = centers.row(c).transpose();
    for (std::size_t i = 0; i < points.size(); ++i) dist[i] = (points[i] - center).squaredNorm();
    std::iota(order.begin(), order.end(), 0u);
    auto closer = [&](std::uint32_t a, std::uint32_t b) {
      if (dist[a] != dist[b]) return dist[a] < dist[b];
      if (points[a] != points[b]) return lex_less(points[a], points[b]);
      return a < b;
    };
    std::partial_sort(order.begin(), order.begin() + k, order.end(), closer);
    for (int j = 0; j < k; ++j) {
      const auto idx = order[static_cast<std::size_t>(j)];
      const Eigen::Index row = c * k + j;
      out.neighbor_indices[static_cast<std::size_t>(row)] = idx;
      out.relative_points.row(row) = (points[idx] - center).transpose();
      if (!colors.empty()) {
        const auto& rgb = colors[idx];
        out.patch_colors.row(row) << rgb[0], rgb[1], rgb[2];
      }
    }
  }
  return out;
}

PatchSet make_patches(const meshgen::PartialPointCloud& cloud, int s, int k) {
  const auto idx = farthest_point_sampling(cloud.points, s);
  Mat centers(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    centers.row(static_cast<Eigen::Index>(i)) = cloud.points[idx[i]].transpose();
  }
  return knn_group(cloud.points, cloud.colors, centers, k);
}

// ---------------------------------------------------------------------------

MiniPointNet::MiniPointNet(int c_dim)
    : layer1(kInput, kHidden), layer2(kHidden, c_dim), out(c_dim, c_dim), c_dim_(c_dim) {}

void MiniPointNet::init(Rng& rng) {
  layer1.init_uniform(rng);
  layer2.init_uniform(rng);
  out.init_uniform(rng);
}

Mat MiniPointNet::features(const PatchSet& patches, bool drop_color) {
  const auto rows = patches.relative_points.rows();
  Mat input(rows, kInput);
  input.leftCols(3) = patches.relative_points;
  if (!drop_color && patches.patch_colors.size() > 0) {
    input.rightCols(3) = patches.patch_colors;
  } else {
    input.rightCols(3).setConstant(kColorConstant);
  }
  return input;
}

Mat MiniPointNet::forward_features(const Mat& input, int num_patches, int k, Cache* cache) const {
  if (input.cols() != kInput || input.rows() != static_cast<Eigen::Index>(num_patches) * k) {
    fail(ErrorKind::ShapeError, "mini-PointNet input must be (S·k)×6");
  }
  Mat pre1 = layer1.forward(input);
  Mat act1 = silu(pre1);
  Mat pre2 = layer2.forward(act1);
  Mat pooled(num_patches, c_dim_);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(num_patches) * c_dim_);
  for (int p = 0; p < num_patches; ++p) {
    for (int ch = 0; ch < c_dim_; ++ch) {
      Eigen::Index best = static_cast<Eigen::Index>(p) * k;
      double best_val = silu(pre2(best, ch));
      for (int j = 1; j < k; ++j) {
        const Eigen::Index row = static_cast<Eigen::Index>(p) * k + j;
        const double v = silu(pre2(row, ch));
        if (v > best_val) {
          best_val = v;
          best = row;
        }
      }
      pooled(p, ch) = best_val;
      argmax[static_cast<std::size_t>(p) * c_dim_ + ch] = best;
    }
  }
  Mat tokens = out.forward(pooled);
  if (cache) {
    cache->input = input;
    cache->pre1 = std::move(pre1);
    cache->act1 = std::move(act1);
    cache->pre2 = std::move(pre2);
    cache->pooled = std::move(pooled);
    cache->argmax = std::move(argmax);
  }
  return tokens;
}

TokenSequence MiniPointNet::forward(const PatchSet& patches, bool drop_color, Cache* cache) const {
  TokenSequence seq;
  seq.tokens = forward_features(features(patches, drop_color), patches.num_patches(), patches.k, cache);
  seq.centers = patches.centers;
  return seq;
}

void MiniPointNet::backward(const Cache& cache, int k, const Mat& dtokens) {
  const Mat dpooled = out.backward(cache.pooled, dtokens);
  const Eigen::Index num_patches = dpooled.rows();
  Mat dpre2 = Mat::Zero(num_patches * k, c_dim_);
  for (Eigen::Index p = 0; p < num_patches; ++p) {
    for (int ch = 0; ch < c_dim_; ++ch) {
      const Eigen::Index row = cache.argmax[static_cast<std::size_t>(p) * c_dim_ + ch];
      dpre2(row, ch) += dpooled(p, ch) * silu_grad(cache.pre2(row, ch));
    }
  }
  const Mat dact1 = layer2.backward(cache.act1, dpre2);
  const Mat dpre1 = silu_backward(cache.pre1, dact1);
  layer1.backward(cache.input, dpre1);
}

void MiniPointNet::collect(const std::string& prefix, ParamList& out_list) {
  layer1.collect(prefix + ".layer1", out_list);
  layer2.collect(prefix + ".layer2", out_list);
  out.collect(prefix + ".out", out_list);
}

std::size_t MiniPointNet::num_params() const {
  return layer1.num_params() + layer2.num_params() + out.num_params();
}

std::size_t MiniPointNet::count(int c_dim) {
  return Linear::count(kInput, kHidden) + Linear::count(kHidden, c_dim) + Linear::count(c_dim, c_dim);
}

}  // namespace occtip::tokenizer
