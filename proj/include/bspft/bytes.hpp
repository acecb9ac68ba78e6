#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bspft {

static_assert(std::endian::native == std::endian::little,
              "on-disk and wire formats are little-endian; big-endian hosts are not supported");

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline ByteView as_bytes(std::string_view s) noexcept {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

// Appends little-endian fields to a byte buffer.
class ByteWriter {
 public:
  explicit ByteWriter(Bytes& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }
  void raw(std::string_view s) { raw(as_bytes(s)); }

 private:
  template <typename T>
  void put(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  Bytes& out_;
};

// Bounds-checked little-endian cursor. Every getter returns nullopt once the
// input is exhausted instead of reading past the end.
class ByteReader {
 public:
  explicit ByteReader(ByteView in) : in_(in) {}

  std::optional<std::uint8_t> u8() { return get<std::uint8_t>(); }
  std::optional<std::uint16_t> u16() { return get<std::uint16_t>(); }
  std::optional<std::uint32_t> u32() { return get<std::uint32_t>(); }
  std::optional<std::uint64_t> u64() { return get<std::uint64_t>(); }
  std::optional<double> f64() {
    auto v = get<std::uint64_t>();
    if (!v) return std::nullopt;
    return std::bit_cast<double>(*v);
  }
  std::optional<ByteView> raw(std::size_t n) {
    if (remaining() < n) return std::nullopt;
    ByteView v = in_.subspan(pos_, n);
    pos_ += n;
    return v;
  }

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }

 private:
  template <typename T>
  std::optional<T> get() {
    if (remaining() < sizeof(T)) return std::nullopt;
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(in_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }

  ByteView in_;
  std::size_t pos_ = 0;
};

inline void append_f64s(Bytes& out, std::span<const double> values) {
  ByteWriter w(out);
  for (double v : values) w.f64(v);
}

inline std::vector<double> read_f64s(ByteView in) {
  std::vector<double> out(in.size() / 8);
  std::memcpy(out.data(), in.data(), out.size() * 8);
  return out;
}

}  // namespace bspft
