#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace occtip {

/// Row-major so that an S×C activation stores one token per contiguous row.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;
using Vec3 = Eigen::Vector3d;

using Rng = std::mt19937_64;

/// A learnable tensor and its accumulated gradient. Vectors are stored as
/// 1×n matrices so every parameter has the same type.
struct Param {
  Mat value;
  Mat grad;

  Param() = default;
  Param(Eigen::Index rows, Eigen::Index cols)
      : value(Mat::Zero(rows, cols)), grad(Mat::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

struct NamedParam {
  std::string name;
  Param* param;
  /// Whether decoupled weight decay applies (weight matrices only).
  bool decay;
};

using ParamList = std::vector<NamedParam>;

/// SplitMix64 finalizer, used to derive independent stream seeds from a
/// base seed and a tuple of indices.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

void fill_uniform(Mat& m, double lo, double hi, Rng& rng);
void fill_normal(Mat& m, double stddev, Rng& rng);

bool all_finite(const Mat& m);

}  // namespace occtip
