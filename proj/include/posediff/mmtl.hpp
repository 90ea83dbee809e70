#pragma once

// MMTL: little-endian binary tensor container.
//   "MMTL" | version u8 = 1 | dtype u8 = 1 (f32) | ndim u8 | dims u32[ndim] | f32 payload (row-major)

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "posediff/tensor.hpp"

namespace posediff::mmtl {

inline constexpr char kMagic[4] = {'M', 'M', 'T', 'L'};
inline constexpr std::uint8_t kVersion = 1;
inline constexpr std::uint8_t kFloat32 = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An n-dimensional float32 record.
struct Record {
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  std::size_t element_count() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                           [](std::size_t a, std::uint32_t b) { return a * b; });
  }

  friend bool operator==(const Record&, const Record&) = default;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(const unsigned char* b) {
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void read_exact(std::istream& is, void* dst, std::size_t n, const char* what) {
  is.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError(std::string("truncated MMTL ") + what);
}

}  // namespace detail

inline void write(std::ostream& os, const Record& rec) {
  if (rec.dims.empty() || rec.dims.size() > 255) throw FormatError("MMTL rank must be 1..255");
  if (rec.element_count() != rec.values.size()) throw FormatError("MMTL payload does not match dims");
  os.write(kMagic, 4);
  const char head[3] = {static_cast<char>(kVersion), static_cast<char>(kFloat32),
                        static_cast<char>(rec.dims.size())};
  os.write(head, 3);
  for (auto d : rec.dims) detail::put_u32(os, d);
  for (float v : rec.values) detail::put_u32(os, std::bit_cast<std::uint32_t>(v));
  if (!os) throw FormatError("MMTL write failed");
}

/// Reads one record; the stream is left positioned after it.
inline Record read(std::istream& is) {
  char magic[4];
  detail::read_exact(is, magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad MMTL magic");
  unsigned char head[3];
  detail::read_exact(is, head, 3, "header");
  if (head[0] != kVersion) throw FormatError("unsupported MMTL version " + std::to_string(head[0]));
  if (head[1] != kFloat32) throw FormatError("unsupported MMTL dtype " + std::to_string(head[1]));
  if (head[2] == 0) throw FormatError("MMTL rank must be >= 1");
  Record rec;
  std::vector<unsigned char> buf(4u * head[2]);
  detail::read_exact(is, buf.data(), buf.size(), "dims");
  for (std::size_t i = 0; i < head[2]; ++i) rec.dims.push_back(detail::get_u32(buf.data() + 4 * i));
  const std::size_t n = rec.element_count();
  buf.resize(4 * n);
  detail::read_exact(is, buf.data(), buf.size(), "payload");
  rec.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) rec.values[i] = std::bit_cast<float>(detail::get_u32(buf.data() + 4 * i));
  return rec;
}

/// Every record in a concatenated MMTL stream.
inline std::vector<Record> read_all(std::istream& is) {
  std::vector<Record> out;
  while (is.peek() != std::char_traits<char>::eof()) out.push_back(read(is));
  return out;
}

inline std::string encode(const Record& rec) {
  std::ostringstream os(std::ios::binary);
  write(os, rec);
  return os.str();
}

inline Record decode(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  Record rec = read(is);
  if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after MMTL record");
  return rec;
}

template <typename T>
Record from_tensor(const Tensor<T>& t) {
  Record rec;
  const auto& s = t.shape();
  rec.dims = {static_cast<std::uint32_t>(s.frames), static_cast<std::uint32_t>(s.channels),
              static_cast<std::uint32_t>(s.height), static_cast<std::uint32_t>(s.width)};
  rec.values.reserve(t.size());
  for (auto v : t.values()) rec.values.push_back(static_cast<float>(v));
  return rec;
}

/// Records of rank <= 4 are left-padded with unit dims to F x C x H x W.
template <typename T>
Tensor<T> to_tensor(const Record& rec) {
  if (rec.dims.size() > 4) throw FormatError("MMTL record rank exceeds 4");
  std::uint32_t d[4] = {1, 1, 1, 1};
  std::copy(rec.dims.begin(), rec.dims.end(), d + (4 - rec.dims.size()));
  Tensor<T> t(Shape4{d[0], d[1], d[2], d[3]});
  for (std::size_t i = 0; i < rec.values.size(); ++i) t[i] = static_cast<T>(rec.values[i]);
  return t;
}

inline void write_file(const std::string& path, const std::vector<Record>& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path + " for writing");
  for (const auto& r : records) write(os, r);
}

inline std::vector<Record> read_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path);
  return read_all(is);
}

}  // namespace posediff::mmtl
