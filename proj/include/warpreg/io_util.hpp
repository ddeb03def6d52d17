#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>

#include "warpreg/errors.hpp"

namespace warpreg {

/// Writes bytes to `path` atomically: write a sibling temp file, then rename.
/// Interrupted runs never leave a truncated artifact at the final path.
inline void atomic_write_file(const std::filesystem::path& path, std::string_view bytes) {
  namespace fs = std::filesystem;
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw IoError("rename failed for: " + path.string());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return buf;
}

/// Little-endian binary serializer backed by an in-memory buffer.
class ByteWriter {
 public:
  void raw(const void* p, size_t n) { buf_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) {
    char b[2] = {char(v & 0xff), char(v >> 8)};
    raw(b, 2);
  }
  void u32(std::uint32_t v) {
    char b[4] = {char(v & 0xff), char((v >> 8) & 0xff), char((v >> 16) & 0xff), char(v >> 24)};
    raw(b, 4);
  }
  void f32(float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    u32(bits);
  }
  void text(std::string_view s) { buf_.append(s); }
  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

/// Little-endian binary reader over a byte buffer; throws FormatError with the
/// current offset on truncation.
class ByteReader {
 public:
  ByteReader(std::string_view buf, std::string name) : buf_(buf), name_(std::move(name)) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }

  void raw(void* p, size_t n) {
    if (remaining() < n) {
      throw FormatError(name_ + ": truncated at byte " + std::to_string(pos_) + " (expected " +
                        std::to_string(n) + " more bytes, have " + std::to_string(remaining()) + ")");
    }
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint16_t u16() {
    unsigned char b[2];
    raw(b, 2);
    return std::uint16_t(b[0] | (b[1] << 8));
  }
  std::uint32_t u32() {
    unsigned char b[4];
    raw(b, 4);
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
  }
  float f32() {
    std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  std::string str(size_t n) {
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

 private:
  std::string_view buf_;
  std::string name_;
  size_t pos_ = 0;
};

}  // namespace warpreg
