#include <cmath>

#include "occtip/error.hpp"
#include "occtip/tensor.hpp"

namespace occtip {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidMesh: return "InvalidMesh";
    case ErrorKind::DegenerateMesh: return "DegenerateMesh";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::EmptyCloud: return "EmptyCloud";
    case ErrorKind::InvalidInput: return "InvalidInput";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::NumericalError: return "NumericalError";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

FormatError::FormatError(std::size_t offset, const std::string& message)
    : Error(ErrorKind::FormatError, message + " (at byte " + std::to_string(offset) + ")"),
      offset_(offset) {}

NumericalError::NumericalError(std::string where, long step, const std::string& message)
    : Error(ErrorKind::NumericalError,
            where + (step >= 0 ? " step " + std::to_string(step) : std::string()) + ": " +
                message),
      where_(std::move(where)),
      step_(step) {}

void fail(ErrorKind kind, const std::string& message) {
  if (kind == ErrorKind::FormatError) throw FormatError(0, message);
  if (kind == ErrorKind::NumericalError) throw NumericalError("", -1, message);
  throw Error(kind, message);
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  auto splitmix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

void fill_uniform(Mat& m, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

void fill_normal(Mat& m, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
}

bool all_finite(const Mat& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

}  // namespace occtip
