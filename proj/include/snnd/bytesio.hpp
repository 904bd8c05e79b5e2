#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "snnd/error.hpp"

// Little-endian binary encoding helpers shared by the checkpoint and event
// frame formats. Bytes are assembled explicitly so files are identical across
// platforms; the reader reports the exact offset and byte counts on failure.

namespace snnd::bytesio {

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) {
  out.push_back(v);
}

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string source)
      : data_(data), size_(size), source_(std::move(source)) {}

  std::size_t offset() const { return off_; }

  void require(std::size_t n, const char* what) {
    if (off_ + n > size_)
      throw FormatError(source_ + ": expected " + std::to_string(n) +
                        " bytes for " + what + " at offset " +
                        std::to_string(off_) + ", only " +
                        std::to_string(size_ - off_) + " remain");
  }

  std::uint8_t u8(const char* what) {
    require(1, what);
    return data_[off_++];
  }

  std::uint16_t u16(const char* what) {
    require(2, what);
    std::uint16_t v = static_cast<std::uint16_t>(data_[off_]) |
                      static_cast<std::uint16_t>(data_[off_ + 1]) << 8;
    off_ += 2;
    return v;
  }

  std::uint32_t u32(const char* what) {
    require(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(data_[off_ + i]) << (8 * i);
    off_ += 4;
    return v;
  }

  float f32(const char* what) {
    const std::uint32_t bits = u32(what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }

  double f64(const char* what) {
    require(8, what);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i)
      bits |= static_cast<std::uint64_t>(data_[off_ + i]) << (8 * i);
    off_ += 8;
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  void expect_magic(const char* magic, const char* what) {
    const std::size_t n = std::strlen(magic);
    require(n, what);
    if (std::memcmp(data_ + off_, magic, n) != 0)
      throw FormatError(source_ + ": bad magic at offset " +
                        std::to_string(off_) + ", expected '" + magic + "'");
    off_ += n;
  }

  void expect_end(const char* what) {
    if (off_ != size_)
      throw FormatError(source_ + ": " + std::to_string(size_ - off_) +
                        " trailing bytes after " + what + " at offset " +
                        std::to_string(off_));
  }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t off_ = 0;
  std::string source_;
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return bytes;
}

// Writes via a temporary file plus rename so readers never observe a
// half-written file.
inline void write_file(const std::string& path,
                       const std::vector<std::uint8_t>& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write file: " + tmp);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("short write to " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("cannot move " + tmp + " into place");
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  write_file(path, bytes);
}

}  // namespace snnd::bytesio
