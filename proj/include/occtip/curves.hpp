#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "occtip/tensor.hpp"

namespace occtip::curves {

struct GridCoord {
  std::uint32_t x = 0;
  std::uint32_t y = 0;
  std::uint32_t z = 0;

  friend bool operator==(const GridCoord&, const GridCoord&) = default;
};

enum class CurveKind { Hilbert, TransHilbert, Morton, TransMorton, FpsOrder };

std::string to_string(CurveKind kind);
/// Accepts "hilbert", "trans-hilbert", "morton", "trans-morton", "fps".
CurveKind curve_from_string(const std::string& name);

inline constexpr int kDefaultBits = 10;

/// Affine [-1,1] → [0, 2^bits − 1] per axis, round-half-up, clamped.
std::vector<GridCoord> quantize(const std::vector<Vec3>& points, int bits);

/// 3D Hilbert index (Skilling's transpose form), starting at the origin
/// cell. Consecutive codes are face-adjacent cells.
std::uint64_t hilbert_index(const GridCoord& c, int bits);
/// Inverse of hilbert_index.
GridCoord hilbert_decode(std::uint64_t code, int bits);
/// Hilbert on cyclically permuted axes: hilbert(y, z, x).
std::uint64_t trans_hilbert_index(const GridCoord& c, int bits);

/// Bit interleave with x least significant: bit 3i ← x_i, 3i+1 ← y_i, 3i+2 ← z_i.
std::uint64_t morton_index(const GridCoord& c, int bits);
std::uint64_t trans_morton_index(const GridCoord& c, int bits);

std::uint64_t curve_index(CurveKind kind, const GridCoord& c, int bits);

/// forward[i] is the original index of the element at sorted position i;
/// inverse[j] is the sorted position of original element j.
struct Permutation {
  std::vector<std::uint32_t> forward;
  std::vector<std::uint32_t> inverse;

  static Permutation identity(std::size_t n);
  static Permutation from_forward(std::vector<std::uint32_t> forward);
  std::size_t size() const { return forward.size(); }
  bool is_identity() const;

  /// Rows of x in sorted order.
  Mat gather(const Mat& x) const;
  /// Inverse of gather: restores the original row order.
  Mat scatter(const Mat& sorted) const;
};

/// Stable ascending sort of the quantized points by curve code. FpsOrder
/// returns the identity.
Permutation sort_by_curve(const std::vector<Vec3>& points, CurveKind kind, int bits = kDefaultBits);

}  // namespace occtip::curves
