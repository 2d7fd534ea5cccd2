#include "occtip/store.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "occtip/error.hpp"

namespace occtip::store {

static_assert(std::endian::native == std::endian::little, "payload is written in host order");

namespace {

constexpr std::size_t kPreamble = 16;  // magic + version + header length

std::size_t align_up(std::size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

template <typename T>
void put(std::vector<std::uint8_t>& out, T value) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
  out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t offset) {
  T value;
  std::memcpy(&value, in.data() + offset, sizeof(T));
  return value;
}

std::uint32_t crc32_of(const std::uint8_t* data, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, data, chunk);
    data += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

bool is_reserved(const std::string& key) {
  return key == "tensors" || key == "payload_crc32" || key == "payload_size";
}

}  // namespace

std::string to_string(DType dtype) {
  switch (dtype) {
    case DType::F32: return "f32";
    case DType::F64: return "f64";
    case DType::U32: return "u32";
    case DType::U64: return "u64";
  }
  return "f64";
}

DType dtype_from_string(const std::string& name) {
  if (name == "f32") return DType::F32;
  if (name == "f64") return DType::F64;
  if (name == "u32") return DType::U32;
  if (name == "u64") return DType::U64;
  fail(ErrorKind::FormatError, "unknown dtype '" + name + "'");
}

std::size_t dtype_size(DType dtype) {
  return dtype == DType::F32 || dtype == DType::U32 ? 4 : 8;
}

std::uint64_t Tensor::numel() const {
  std::uint64_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

const Tensor* Container::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

const Tensor& Container::at(const std::string& name) const {
  const Tensor* t = find(name);
  if (!t) fail(ErrorKind::FormatError, "missing tensor '" + name + "'");
  return *t;
}

std::vector<std::uint8_t> write_container(const Container& container) {
  json header = container.metadata.is_object() ? container.metadata : json::object();
  for (auto it = header.begin(); it != header.end();) {
    it = is_reserved(it.key()) ? header.erase(it) : std::next(it);
  }

  json entries = json::array();
  std::size_t payload_size = 0;
  std::vector<std::size_t> offsets;
  for (const auto& t : container.tensors) {
    if (t.numel() * dtype_size(t.dtype) != t.data.size()) {
      fail(ErrorKind::ShapeError, "tensor '" + t.name + "' shape does not match its byte length");
    }
    const std::size_t offset = align_up(payload_size);
    offsets.push_back(offset);
    entries.push_back({{"name", t.name},
                       {"dtype", to_string(t.dtype)},
                       {"shape", t.shape},
                       {"offset", offset},
                       {"nbytes", t.data.size()}});
    payload_size = offset + t.data.size();
  }

  std::vector<std::uint8_t> payload(payload_size, 0);
  for (std::size_t i = 0; i < container.tensors.size(); ++i) {
    const auto& data = container.tensors[i].data;
    std::copy(data.begin(), data.end(), payload.begin() + static_cast<std::ptrdiff_t>(offsets[i]));
  }
  header["tensors"] = std::move(entries);
  header["payload_size"] = payload_size;
  header["payload_crc32"] = crc32_of(payload.data(), payload.size());
  const std::string text = header.dump();

  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put<std::uint32_t>(out, kVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  out.resize(align_up(out.size()), 0);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Container read_container(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < kPreamble) throw FormatError(bytes.size(), "file shorter than the fixed preamble");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError(0, "magic mismatch");
  const auto version = get<std::uint32_t>(bytes, 4);
  if (version != kVersion) throw FormatError(4, "unsupported version " + std::to_string(version));
  const auto header_len = get<std::uint64_t>(bytes, 8);
  if (header_len > bytes.size() - kPreamble) throw FormatError(8, "header length exceeds file size");

  json header;
  try {
    header = json::parse(bytes.begin() + kPreamble, bytes.begin() + static_cast<std::ptrdiff_t>(kPreamble + header_len));
  } catch (const json::exception& e) {
    throw FormatError(kPreamble, std::string("header is not valid JSON: ") + e.what());
  }
  if (!header.is_object() || !header.contains("tensors") || !header["tensors"].is_array() ||
      !header.contains("payload_size") || !header.contains("payload_crc32")) {
    throw FormatError(kPreamble, "header lacks required fields");
  }

  const std::size_t payload_start = align_up(kPreamble + header_len);
  std::uint64_t payload_size = 0;
  std::uint32_t stored_crc = 0;
  try {
    payload_size = header["payload_size"].get<std::uint64_t>();
    stored_crc = header["payload_crc32"].get<std::uint32_t>();
  } catch (const json::exception&) {
    throw FormatError(kPreamble, "payload size or checksum has the wrong type");
  }
  if (payload_start > bytes.size() || bytes.size() - payload_start < payload_size) {
    throw FormatError(bytes.size(), "payload truncated");
  }
  if (bytes.size() - payload_start > payload_size) {
    throw FormatError(payload_start + payload_size, "trailing bytes after payload");
  }
  const std::uint8_t* payload = bytes.data() + payload_start;
  if (crc32_of(payload, payload_size) != stored_crc) throw FormatError(payload_start, "payload checksum mismatch");

  Container out;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> spans;
  for (const auto& entry : header["tensors"]) {
    Tensor t;
    std::uint64_t offset = 0, nbytes = 0;
    try {
      t.name = entry.at("name").get<std::string>();
      t.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
      t.shape = entry.at("shape").get<std::vector<std::uint64_t>>();
      offset = entry.at("offset").get<std::uint64_t>();
      nbytes = entry.at("nbytes").get<std::uint64_t>();
    } catch (const json::exception& e) {
      throw FormatError(kPreamble, std::string("malformed tensor entry: ") + e.what());
    } catch (const Error& e) {
      throw FormatError(kPreamble, e.what());
    }
    if (t.numel() * dtype_size(t.dtype) != nbytes) {
      throw FormatError(payload_start + offset, "tensor '" + t.name + "' shape does not match its byte length");
    }
    if (offset % kAlign != 0) throw FormatError(payload_start + offset, "tensor '" + t.name + "' is misaligned");
    if (offset > payload_size || nbytes > payload_size - offset) {
      throw FormatError(payload_start + offset, "tensor '" + t.name + "' extends past the payload");
    }
    for (const auto& [lo, hi] : spans) {
      if (offset < hi && lo < offset + nbytes) {
        throw FormatError(payload_start + offset, "tensor '" + t.name + "' overlaps another tensor");
      }
    }
    spans.emplace_back(offset, offset + nbytes);
    t.data.assign(payload + offset, payload + offset + nbytes);
    out.tensors.push_back(std::move(t));
  }

  for (auto it = header.begin(); it != header.end(); ++it) {
    if (!is_reserved(it.key())) out.metadata[it.key()] = it.value();
  }
  return out;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::InvalidInput, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::InvalidInput, "cannot write '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::InvalidInput, "write to '" + path + "' failed");
}

void save(const std::string& path, const Container& container) { write_file(path, write_container(container)); }

Container load(const std::string& path) { return read_container(read_file(path)); }

// ---------------------------------------------------------------------------

namespace {

template <typename T>
void append_as(std::vector<std::uint8_t>& out, T value) {
  put<T>(out, value);
}

template <typename T>
T element(const Tensor& t, std::size_t i) {
  T value;
  std::memcpy(&value, t.data.data() + i * sizeof(T), sizeof(T));
  return value;
}

double float_element(const Tensor& t, std::size_t i) {
  switch (t.dtype) {
    case DType::F32: return element<float>(t, i);
    case DType::F64: return element<double>(t, i);
    default: fail(ErrorKind::FormatError, "tensor '" + t.name + "' is not floating point");
  }
}

}  // namespace

Tensor from_mat(const std::string& name, const Mat& m, DType dtype) {
  Tensor t;
  t.name = name;
  t.dtype = dtype;
  t.shape = {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())};
  t.data.reserve(static_cast<std::size_t>(m.size()) * dtype_size(dtype));
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const double v = m.data()[i];
    if (dtype == DType::F32) {
      append_as<float>(t.data, static_cast<float>(v));
    } else if (dtype == DType::F64) {
      append_as<double>(t.data, v);
    } else {
      fail(ErrorKind::InvalidInput, "matrices are stored as f32 or f64");
    }
  }
  return t;
}

Tensor from_vec(const std::string& name, const Vec& v, DType dtype) {
  Tensor t = from_mat(name, Mat(v.transpose()), dtype);
  t.shape = {static_cast<std::uint64_t>(v.size())};
  return t;
}

Tensor from_u32(const std::string& name, const std::vector<std::uint32_t>& values,
                std::vector<std::uint64_t> shape) {
  Tensor t;
  t.name = name;
  t.dtype = DType::U32;
  t.shape = shape.empty() ? std::vector<std::uint64_t>{values.size()} : std::move(shape);
  for (auto v : values) append_as<std::uint32_t>(t.data, v);
  return t;
}

Tensor from_u64(const std::string& name, const std::vector<std::uint64_t>& values) {
  Tensor t;
  t.name = name;
  t.dtype = DType::U64;
  t.shape = {values.size()};
  for (auto v : values) append_as<std::uint64_t>(t.data, v);
  return t;
}

Mat to_mat(const Tensor& t) {
  if (t.shape.size() > 2) fail(ErrorKind::ShapeError, "tensor '" + t.name + "' has rank > 2");
  const auto rows = t.shape.size() == 2 ? static_cast<Eigen::Index>(t.shape[0]) : 1;
  const auto cols = t.shape.empty() ? 1 : static_cast<Eigen::Index>(t.shape.back());
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = float_element(t, static_cast<std::size_t>(i));
  return m;
}

Vec to_vec(const Tensor& t) {
  Vec v(static_cast<Eigen::Index>(t.numel()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = float_element(t, static_cast<std::size_t>(i));
  return v;
}

std::vector<std::uint32_t> to_u32(const Tensor& t) {
  if (t.dtype != DType::U32) fail(ErrorKind::FormatError, "tensor '" + t.name + "' is not u32");
  std::vector<std::uint32_t> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = element<std::uint32_t>(t, i);
  return out;
}

std::vector<std::uint64_t> to_u64(const Tensor& t) {
  if (t.dtype != DType::U64) fail(ErrorKind::FormatError, "tensor '" + t.name + "' is not u64");
  std::vector<std::uint64_t> out(t.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = element<std::uint64_t>(t, i);
  return out;
}

}  // namespace occtip::store
