#include "occtip/curves.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "occtip/error.hpp"

namespace occtip::curves {

std::string to_string(CurveKind kind) {
  switch (kind) {
    case CurveKind::Hilbert: return "hilbert";
    case CurveKind::TransHilbert: return "trans-hilbert";
    case CurveKind::Morton: return "morton";
    case CurveKind::TransMorton: return "trans-morton";
    case CurveKind::FpsOrder: return "fps";
  }
  return "hilbert";
}

CurveKind curve_from_string(const std::string& name) {
  if (name == "hilbert") return CurveKind::Hilbert;
  if (name == "trans-hilbert") return CurveKind::TransHilbert;
  if (name == "morton" || name == "z-order") return CurveKind::Morton;
  if (name == "trans-morton" || name == "trans-z-order") return CurveKind::TransMorton;
  if (name == "fps") return CurveKind::FpsOrder;
  fail(ErrorKind::ConfigError, "unknown curve '" + name + "'");
}

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 16) fail(ErrorKind::InvalidInput, "bits must be in [1, 16]");
}

void check_coord(const GridCoord& c, int bits) {
  check_bits(bits);
  const std::uint32_t limit = 1u << bits;
  if (c.x >= limit || c.y >= limit || c.z >= limit) {
    fail(ErrorKind::InvalidInput, "grid coordinate exceeds 2^" + std::to_string(bits));
  }
}

}  // namespace

std::vector<GridCoord> quantize(const std::vector<Vec3>& points, int bits) {
  check_bits(bits);
  const double top = static_cast<double>((1u << bits) - 1u);
  auto q = [top](double v) {
    const double scaled = std::floor((v + 1.0) * 0.5 * top + 0.5);
    return static_cast<std::uint32_t>(std::clamp(scaled, 0.0, top));
  };
  std::vector<GridCoord> out;
  out.reserve(points.size());
  for (const auto& p : points) {
    if (!p.allFinite()) fail(ErrorKind::InvalidInput, "non-finite coordinate");
    out.push_back({q(p.x()), q(p.y()), q(p.z())});
  }
  return out;
}

std::uint64_t hilbert_index(const GridCoord& c, int bits) {
  check_coord(c, bits);
  std::uint32_t x[3] = {c.x, c.y, c.z};
  const std::uint32_t top = 1u << (bits - 1);
  // inverse undo
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 0; i < 3; ++i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        const std::uint32_t t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  // Gray encode
  for (int i = 1; i < 3; ++i) x[i] ^= x[i - 1];
  std::uint32_t t = 0;
  for (std::uint32_t q = top; q > 1; q >>= 1) {
    if (x[2] & q) t ^= q - 1;
  }
  for (auto& v : x) v ^= t;

  std::uint64_t code = 0;
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < 3; ++i) code = (code << 1) | ((x[i] >> b) & 1u);
  }
  return code;
}

GridCoord hilbert_decode(std::uint64_t code, int bits) {
  check_bits(bits);
  std::uint32_t x[3] = {0, 0, 0};
  for (int b = bits - 1; b >= 0; --b) {
    for (int i = 0; i < 3; ++i) {
      const int shift = 3 * b + (2 - i);
      x[i] |= static_cast<std::uint32_t>((code >> shift) & 1u) << b;
    }
  }
  const std::uint32_t limit = 2u << (bits - 1);
  // Gray decode
  std::uint32_t t = x[2] >> 1;
  for (int i = 2; i > 0; --i) x[i] ^= x[i - 1];
  x[0] ^= t;
  // undo excess work
  for (std::uint32_t q = 2; q != limit; q <<= 1) {
    const std::uint32_t p = q - 1;
    for (int i = 2; i >= 0; --i) {
      if (x[i] & q) {
        x[0] ^= p;
      } else {
        t = (x[0] ^ x[i]) & p;
        x[0] ^= t;
        x[i] ^= t;
      }
    }
  }
  return {x[0], x[1], x[2]};
}

std::uint64_t trans_hilbert_index(const GridCoord& c, int bits) {
  return hilbert_index(GridCoord{c.y, c.z, c.x}, bits);
}

std::uint64_t morton_index(const GridCoord& c, int bits) {
  check_coord(c, bits);
  std::uint64_t code = 0;
  for (int b = 0; b < bits; ++b) {
    code |= static_cast<std::uint64_t>((c.x >> b) & 1u) << (3 * b);
    code |= static_cast<std::uint64_t>((c.y >> b) & 1u) << (3 * b + 1);
    code |= static_cast<std::uint64_t>((c.z >> b) & 1u) << (3 * b + 2);
  }
  return code;
}

std::uint64_t trans_morton_index(const GridCoord& c, int bits) {
  return morton_index(GridCoord{c.y, c.z, c.x}, bits);
}

std::uint64_t curve_index(CurveKind kind, const GridCoord& c, int bits) {
  switch (kind) {
    case CurveKind::Hilbert: return hilbert_index(c, bits);
    case CurveKind::TransHilbert: return trans_hilbert_index(c, bits);
    case CurveKind::Morton: return morton_index(c, bits);
    case CurveKind::TransMorton: return trans_morton_index(c, bits);
    case CurveKind::FpsOrder: return 0;
  }
  return 0;
}

// ---------------------------------------------------------------------------

Permutation Permutation::identity(std::size_t n) {
  std::vector<std::uint32_t> fwd(n);
  std::iota(fwd.begin(), fwd.end(), 0u);
  return from_forward(std::move(fwd));
}

Permutation Permutation::from_forward(std::vector<std::uint32_t> forward) {
  Permutation p;
  p.inverse.assign(forward.size(), 0);
  std::vector<bool> seen(forward.size(), false);
  for (std::size_t i = 0; i < forward.size(); ++i) {
    const auto j = forward[i];
    if (j >= forward.size() || seen[j]) fail(ErrorKind::InvalidInput, "not a permutation");
    seen[j] = true;
    p.inverse[j] = static_cast<std::uint32_t>(i);
  }
  p.forward = std::move(forward);
  return p;
}

bool Permutation::is_identity() const {
  for (std::size_t i = 0; i < forward.size(); ++i) {
    if (forward[i] != i) return false;
  }
  return true;
}

Mat Permutation::gather(const Mat& x) const {
  if (static_cast<std::size_t>(x.rows()) != size()) fail(ErrorKind::ShapeError, "permutation size mismatch");
  Mat out(x.rows(), x.cols());
  for (std::size_t i = 0; i < forward.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(forward[i]);
  return out;
}

Mat Permutation::scatter(const Mat& sorted) const {
  if (static_cast<std::size_t>(sorted.rows()) != size()) fail(ErrorKind::ShapeError, "permutation size mismatch");
  Mat out(sorted.rows(), sorted.cols());
  for (std::size_t i = 0; i < forward.size(); ++i) out.row(forward[i]) = sorted.row(static_cast<Eigen::Index>(i));
  return out;
}

Permutation sort_by_curve(const std::vector<Vec3>& points, CurveKind kind, int bits) {
  if (kind == CurveKind::FpsOrder) return Permutation::identity(points.size());
  const auto cells = quantize(points, bits);
  std::vector<std::uint64_t> codes(cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) codes[i] = curve_index(kind, cells[i], bits);
  std::vector<std::uint32_t> order(cells.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(),
                   [&codes](std::uint32_t a, std::uint32_t b) { return codes[a] < codes[b]; });
  return Permutation::from_forward(std::move(order));
}

}  // namespace occtip::curves
