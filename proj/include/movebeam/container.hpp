#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "movebeam/tensor.hpp"

namespace movebeam {

// Binary containers, all little-endian. Two framings share this header style:
//   grid:       16-byte header (magic[4], u32 version, u32 rows, u32 cols)
//               followed by rows*cols row-major float32 values.
//   checkpoint: header (magic[4] "MBCP", u32 version, u32 record count)
//               then per record: u32 name length, name bytes, u8 dtype
//               (0 = f64, 1 = u8), u8 rank, u32 dims[rank], raw values.
// Byte-exact layouts are documented in docs/formats.md.

namespace detail {

inline void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4] = {(unsigned char)(v & 0xFF), (unsigned char)((v >> 8) & 0xFF),
                        (unsigned char)((v >> 16) & 0xFF), (unsigned char)((v >> 24) & 0xFF)};
  os.write((const char*)b, 4);
}

inline uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read((char*)b, 4);
  if (!is) throw std::runtime_error("container: truncated file");
  return (uint32_t)b[0] | ((uint32_t)b[1] << 8) | ((uint32_t)b[2] << 16) | ((uint32_t)b[3] << 24);
}

inline void put_f64(std::ostream& os, double v) {
  uint64_t u = 0;
  std::memcpy(&u, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (unsigned char)((u >> (8 * i)) & 0xFF);
  os.write((const char*)b, 8);
}

inline double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read((char*)b, 8);
  if (!is) throw std::runtime_error("container: truncated file");
  uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= (uint64_t)b[i] << (8 * i);
  double v = 0;
  std::memcpy(&v, &u, 8);
  return v;
}

inline void put_f32(std::ostream& os, float v) {
  uint32_t u = 0;
  std::memcpy(&u, &v, 4);
  put_u32(os, u);
}

inline float get_f32(std::istream& is) {
  uint32_t u = get_u32(is);
  float v = 0;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

struct Grid {
  long rows = 0, cols = 0;
  std::vector<double> values;  // row-major
  double& at(long r, long c) { return values[(size_t)(r * cols + c)]; }
  double at(long r, long c) const { return values[(size_t)(r * cols + c)]; }
};

inline void write_grid(const std::string& path, const char magic[4], const Grid& g) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot write " + path);
  f.write(magic, 4);
  detail::put_u32(f, 1);
  detail::put_u32(f, (uint32_t)g.rows);
  detail::put_u32(f, (uint32_t)g.cols);
  for (double v : g.values) detail::put_f32(f, (float)v);
  if (!f) throw std::runtime_error("container: write failed for " + path);
}

inline Grid read_grid(const std::string& path, const char magic[4]) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot open " + path);
  char m[4];
  f.read(m, 4);
  if (!f || std::memcmp(m, magic, 4) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  uint32_t version = detail::get_u32(f);
  if (version != 1) throw std::runtime_error("container: unsupported version in " + path);
  Grid g;
  g.rows = (long)detail::get_u32(f);
  g.cols = (long)detail::get_u32(f);
  g.values.resize((size_t)(g.rows * g.cols));
  for (auto& v : g.values) v = (double)detail::get_f32(f);
  return g;
}

// One named record in a checkpoint container.
struct Record {
  std::string name;
  uint8_t dtype = 0;  // 0 = f64 tensor, 1 = raw bytes
  Tensor tensor;
  std::vector<uint8_t> bytes;
};

inline void write_records(const std::string& path, const std::vector<Record>& records) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot write " + path);
  f.write("MBCP", 4);
  detail::put_u32(f, 1);
  detail::put_u32(f, (uint32_t)records.size());
  for (const auto& r : records) {
    detail::put_u32(f, (uint32_t)r.name.size());
    f.write(r.name.data(), (std::streamsize)r.name.size());
    f.put((char)r.dtype);
    if (r.dtype == 0) {
      f.put((char)r.tensor.rank());
      for (long i = 0; i < r.tensor.rank(); ++i) detail::put_u32(f, (uint32_t)r.tensor.dim(i));
      for (long i = 0; i < r.tensor.size(); ++i) detail::put_f64(f, r.tensor[i]);
    } else {
      f.put((char)1);
      detail::put_u32(f, (uint32_t)r.bytes.size());
      f.write((const char*)r.bytes.data(), (std::streamsize)r.bytes.size());
    }
  }
  if (!f) throw std::runtime_error("container: write failed for " + path);
}

inline std::vector<Record> read_records(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("container: cannot open " + path);
  char m[4];
  f.read(m, 4);
  if (!f || std::memcmp(m, "MBCP", 4) != 0)
    throw std::runtime_error("container: bad magic in " + path);
  uint32_t version = detail::get_u32(f);
  if (version != 1) throw std::runtime_error("container: unsupported version in " + path);
  uint32_t count = detail::get_u32(f);
  std::vector<Record> records;
  records.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    Record r;
    uint32_t nlen = detail::get_u32(f);
    r.name.resize(nlen);
    f.read(r.name.data(), nlen);
    int dtype = f.get();
    int rank = f.get();
    if (dtype < 0 || rank < 0) throw std::runtime_error("container: truncated file");
    r.dtype = (uint8_t)dtype;
    if (r.dtype == 0) {
      Shape shape((size_t)rank);
      for (auto& d : shape) d = (long)detail::get_u32(f);
      Tensor t(shape);
      for (long j = 0; j < t.size(); ++j) t[j] = detail::get_f64(f);
      r.tensor = std::move(t);
    } else if (r.dtype == 1) {
      uint32_t len = detail::get_u32(f);
      r.bytes.resize(len);
      f.read((char*)r.bytes.data(), len);
      if (!f) throw std::runtime_error("container: truncated file");
    } else {
      throw std::runtime_error("container: unknown dtype in " + path);
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace movebeam
