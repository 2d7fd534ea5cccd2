#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

#include "occtip/tensor.hpp"

namespace occtip::store {

using json = nlohmann::json;

inline constexpr char kMagic[4] = {'O', 'C', 'C', 'T'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kAlign = 64;

enum class DType { F32, F64, U32, U64 };

std::string to_string(DType dtype);
DType dtype_from_string(const std::string& name);
std::size_t dtype_size(DType dtype);

struct Tensor {
  std::string name;
  DType dtype = DType::F64;
  std::vector<std::uint64_t> shape;
  std::vector<std::uint8_t> data;  // little-endian

  std::uint64_t numel() const;
};

/// Named tensors plus free-form header fields. Header keys the format owns
/// ("tensors", "payload_crc32", "payload_size") are never stored here.
struct Container {
  std::vector<Tensor> tensors;
  json metadata = json::object();

  const Tensor* find(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  void add(Tensor tensor) { tensors.push_back(std::move(tensor)); }
};

/// Layout: "OCCT" | u32 version | u64 header length | JSON header | zero
/// padding to 64 | payload. Tensor offsets are relative to the payload start
/// and 64-byte aligned. The payload CRC32 lives in the header.
std::vector<std::uint8_t> write_container(const Container& container);
/// Throws FormatError carrying the byte offset of the first inconsistency.
Container read_container(const std::vector<std::uint8_t>& bytes);

void save(const std::string& path, const Container& container);
Container load(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

Tensor from_mat(const std::string& name, const Mat& m, DType dtype = DType::F64);
/// Vectors are stored with shape [n].
Tensor from_vec(const std::string& name, const Vec& v, DType dtype = DType::F64);
Tensor from_u32(const std::string& name, const std::vector<std::uint32_t>& values,
                std::vector<std::uint64_t> shape = {});
Tensor from_u64(const std::string& name, const std::vector<std::uint64_t>& values);

/// Float tensors of rank ≤ 2 as a matrix (rank 1 becomes a 1×n row).
Mat to_mat(const Tensor& t);
Vec to_vec(const Tensor& t);
std::vector<std::uint32_t> to_u32(const Tensor& t);
std::vector<std::uint64_t> to_u64(const Tensor& t);

}  // namespace occtip::store
