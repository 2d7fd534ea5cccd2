#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occtip/layers.hpp"
#include "occtip/meshgen.hpp"
#include "occtip/tensor.hpp"

namespace occtip::tokenizer {

/// Substituted per channel when a cloud carries no color.
inline constexpr double kColorConstant = 0.4;

struct PatchSet {
  Mat centers;                                  // S×3
  std::vector<std::uint32_t> neighbor_indices;  // S×k, row-major
  Mat relative_points;                          // (S·k)×3, patch-major
  Mat patch_colors;                             // (S·k)×3 or empty
  int k = 0;

  int num_patches() const { return static_cast<int>(centers.rows()); }
  std::vector<Vec3> center_list() const;
};

struct TokenSequence {
  Mat tokens;   // S×C
  Mat centers;  // S×3
};

/// Greedy FPS. Starts at the lexicographically smallest point; each next
/// center maximizes the min-distance to the chosen set, ties going to the
/// lexicographically smaller point. Indices cycle when s exceeds N.
std::vector<std::uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, int s);

/// k nearest neighbors per center by L2 distance. Equal distances are
/// ordered by coordinates, then index, so the selected coordinate set does
/// not depend on input order.
PatchSet knn_group(const std::vector<Vec3>& points, const std::vector<meshgen::Rgb>& colors,
                   const Mat& centers, int k);

/// FPS + kNN in one call.
PatchSet make_patches(const meshgen::PartialPointCloud& cloud, int s, int k);

/// Shared per-point 6→64→C MLP (SiLU), max-pooled over the patch, then a
/// final C→C affine. Input features are relative xyz ‖ rgb.
class MiniPointNet {
 public:
  static constexpr int kHidden = 64;
  static constexpr int kInput = 6;

  struct Cache {
    Mat input;   // (S·k)×6
    Mat pre1;    // (S·k)×64
    Mat act1;
    Mat pre2;    // (S·k)×C
    Mat pooled;  // S×C
    std::vector<Eigen::Index> argmax;  // S×C row index into pre2/act2
  };

  MiniPointNet() = default;
  explicit MiniPointNet(int c_dim);

  void init(Rng& rng);

  /// Builds the (S·k)×6 feature matrix; absent colors become 0.4.
  static Mat features(const PatchSet& patches, bool drop_color = false);

  TokenSequence forward(const PatchSet& patches, bool drop_color = false, Cache* cache = nullptr) const;
  Mat forward_features(const Mat& input, int num_patches, int k, Cache* cache = nullptr) const;
  /// Accumulates parameter gradients; there is no gradient w.r.t. points.
  void backward(const Cache& cache, int k, const Mat& dtokens);

  void collect(const std::string& prefix, ParamList& out);
  std::size_t num_params() const;
  static std::size_t count(int c_dim);

  int c_dim() const { return c_dim_; }

  Linear layer1;
  Linear layer2;
  Linear out;

 private:
  int c_dim_ = 0;
};

}  // namespace occtip::tokenizer
