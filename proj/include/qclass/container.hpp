#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <zlib.h>

#include "qclass/error.hpp"

namespace qclass {

/// Little-endian binary encoder.
class ByteWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }

  void put_u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) put_u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void put_u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) put_u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

  void put_string(std::string_view s) {
    put_u32(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  void put_bytes(std::string_view s) { buf_.append(s); }

  void put_doubles(std::span<const double> values) {
    put_u64(values.size());
    for (double v : values) put_f64(v);
  }

  [[nodiscard]] const std::string& bytes() const { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes, std::string_view what = "container")
      : bytes_(bytes), what_(what) {}

  std::uint8_t get_u8() {
    need(1);
    return static_cast<std::uint8_t>(bytes_[pos_++]);
  }

  std::uint32_t get_u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{static_cast<std::uint8_t>(bytes_[pos_++])} << (8 * i);
    return v;
  }

  std::uint64_t get_u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t{static_cast<std::uint8_t>(bytes_[pos_++])} << (8 * i);
    return v;
  }

  double get_f64() { return std::bit_cast<double>(get_u64()); }

  std::string_view get_bytes(std::size_t n) {
    need(n);
    const auto out = bytes_.substr(pos_, n);
    pos_ += n;
    return out;
  }

  std::string get_string() {
    const auto n = get_u32();
    return std::string(get_bytes(n));
  }

  std::vector<double> get_doubles() {
    const auto n = get_u64();
    if (n > remaining() / 8) throw DataError(std::string(what_) + ": truncated tensor");
    std::vector<double> out(n);
    for (auto& v : out) v = get_f64();
    return out;
  }

  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }
  [[nodiscard]] bool done() const { return pos_ == bytes_.size(); }

  void expect_done() const {
    if (!done()) throw DataError(std::string(what_) + ": trailing bytes");
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw DataError(std::string(what_) + ": truncated data");
  }

  std::string_view bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

inline std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

/// Versioned container of named binary sections.
///
/// Layout (all integers little-endian):
///   8 bytes   magic "QCLSBNDL"
///   u32       format version
///   u32       section count
///   per section: u32 name length, name bytes, u64 payload length, payload
///   u32       CRC-32 of every preceding byte
class Container {
 public:
  static constexpr std::string_view magic = "QCLSBNDL";
  static constexpr std::uint32_t current_version = 1;

  void add(std::string name, std::string payload) {
    sections_.emplace_back(std::move(name), std::move(payload));
  }

  [[nodiscard]] const std::string& section(std::string_view name) const {
    for (const auto& [n, p] : sections_) {
      if (n == name) return p;
    }
    throw DataError("container: missing section '" + std::string(name) + "'");
  }

  [[nodiscard]] bool has(std::string_view name) const {
    for (const auto& [n, p] : sections_) {
      if (n == name) return true;
    }
    return false;
  }

  [[nodiscard]] const std::vector<std::pair<std::string, std::string>>& sections() const { return sections_; }

  [[nodiscard]] std::string encode(std::uint32_t version = current_version) const {
    ByteWriter w;
    w.put_bytes(magic);
    w.put_u32(version);
    w.put_u32(static_cast<std::uint32_t>(sections_.size()));
    for (const auto& [name, payload] : sections_) {
      w.put_string(name);
      w.put_u64(payload.size());
      w.put_bytes(payload);
    }
    auto bytes = w.take();
    ByteWriter trailer;
    trailer.put_u32(crc32_of(bytes));
    bytes += trailer.bytes();
    return bytes;
  }

  /// Checks magic, then version, then checksum, then section framing.
  static Container decode(std::string_view bytes) {
    if (bytes.size() < magic.size() + 12 || bytes.substr(0, magic.size()) != magic) {
      throw DataError("container: not a model bundle (bad magic or truncated header)");
    }
    ByteReader header(bytes.substr(magic.size(), 4));
    const auto version = header.get_u32();
    if (version != current_version) {
      throw DataError("container: unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(current_version) + ")");
    }
    const auto body = bytes.substr(0, bytes.size() - 4);
    ByteReader trailer(bytes.substr(bytes.size() - 4));
    if (trailer.get_u32() != crc32_of(body)) throw DataError("container: checksum mismatch");

    ByteReader r(body.substr(magic.size() + 4));
    Container c;
    const auto count = r.get_u32();
    for (std::uint32_t i = 0; i < count; ++i) {
      auto name = r.get_string();
      const auto n = r.get_u64();
      if (n > r.remaining()) throw DataError("container: truncated section '" + name + "'");
      c.add(std::move(name), std::string(r.get_bytes(n)));
    }
    r.expect_done();
    return c;
  }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    const auto bytes = encode();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("failed writing '" + path + "'");
  }

  static Container read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open model bundle '" + path + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode(bytes);
  }

 private:
  std::vector<std::pair<std::string, std::string>> sections_;
};

}  // namespace qclass
