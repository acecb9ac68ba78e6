#pragma once

#include <array>
#include <cstdint>

#include "bspft/bytes.hpp"

namespace bspft {

namespace detail {

constexpr std::array<std::uint32_t, 256> make_crc32_table() {
  std::array<std::uint32_t, 256> t{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint32_t c = i;
    for (int k = 0; k < 8; ++k) c = (c & 1u) ? (0xEDB88320u ^ (c >> 1)) : (c >> 1);
    t[i] = c;
  }
  return t;
}

inline constexpr std::array<std::uint32_t, 256> kCrc32Table = make_crc32_table();

}  // namespace detail

// CRC-32/ISO-HDLC: polynomial 0x04C11DB7 processed reflected (0xEDB88320),
// init 0xFFFFFFFF, final XOR 0xFFFFFFFF. Check value for "123456789" is 0xCBF43926.
class Crc32 {
 public:
  Crc32& update(ByteView data) noexcept {
    for (std::uint8_t b : data) state_ = detail::kCrc32Table[(state_ ^ b) & 0xFFu] ^ (state_ >> 8);
    return *this;
  }

  std::uint32_t value() const noexcept { return state_ ^ 0xFFFFFFFFu; }

 private:
  std::uint32_t state_ = 0xFFFFFFFFu;
};

inline std::uint32_t crc32(ByteView data) noexcept { return Crc32{}.update(data).value(); }

}  // namespace bspft
