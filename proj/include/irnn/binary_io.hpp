#pragma once

// Byte-level helpers shared by the on-disk formats. All multi-byte fields are
// encoded explicitly, so files are portable regardless of host endianness.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace irnn {

/// Malformed or truncated input; `offset` is the byte position where decoding failed.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::uint64_t offset)
      : std::runtime_error(what + " (at byte offset " + std::to_string(offset) + ")"),
        offset_(offset) {}
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::vector<unsigned char> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const unsigned char> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

/// FNV-1a, 64-bit. Used for file checksums in run manifests and parameter fingerprints.
inline std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                             std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

class ByteWriter {
 public:
  void raw(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  void u64_le(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void i64_le(std::int64_t v) { u64_le(static_cast<std::uint64_t>(v)); }
  void f64_le(double v) { u64_le(std::bit_cast<std::uint64_t>(v)); }
  void f64_le(std::span<const double> vs) {
    for (double v : vs) f64_le(v);
  }

  const std::vector<unsigned char>& bytes() const noexcept { return bytes_; }
  std::vector<unsigned char> take() noexcept { return std::move(bytes_); }

 private:
  std::vector<unsigned char> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const unsigned char> bytes) : bytes_(bytes) {}

  std::uint64_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void expect_magic(std::string_view magic, std::string_view what) {
    need(magic.size(), what);
    if (std::memcmp(bytes_.data() + pos_, magic.data(), magic.size()) != 0) {
      throw FormatError(std::string(what) + ": bad magic, expected '" + std::string(magic) + "'",
                        pos_);
    }
    pos_ += magic.size();
  }

  std::uint64_t u64_le(std::string_view what) {
    need(8, what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::int64_t i64_le(std::string_view what) { return static_cast<std::int64_t>(u64_le(what)); }
  double f64_le(std::string_view what) { return std::bit_cast<double>(u64_le(what)); }
  void f64_le(std::span<double> out, std::string_view what) {
    need(out.size() * 8, what);
    for (double& v : out) v = f64_le(what);
  }

  std::uint32_t u32_be(std::string_view what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

  std::span<const unsigned char> bytes(std::size_t n, std::string_view what) {
    need(n, what);
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  void expect_end(std::string_view what) const {
    if (pos_ != bytes_.size()) {
      throw FormatError(std::string(what) + ": " + std::to_string(bytes_.size() - pos_) +
                            " trailing bytes",
                        pos_);
    }
  }

 private:
  void need(std::size_t n, std::string_view what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(std::string(what) + ": truncated, needed " + std::to_string(n) +
                            " bytes, " + std::to_string(bytes_.size() - pos_) + " available",
                        pos_);
    }
  }

  std::span<const unsigned char> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace irnn
