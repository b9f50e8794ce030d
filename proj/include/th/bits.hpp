#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace th::bits {

// Little-endian loads and stores, independent of host byte order.

inline std::uint32_t load_le32(std::span<const std::byte, 4> in) noexcept {
  return static_cast<std::uint32_t>(in[0]) | (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) | (static_cast<std::uint32_t>(in[3]) << 24);
}

inline std::uint64_t load_le64(std::span<const std::byte, 8> in) noexcept {
  return static_cast<std::uint64_t>(load_le32(in.first<4>())) |
         (static_cast<std::uint64_t>(load_le32(in.last<4>())) << 32);
}

inline void store_le32(std::span<std::byte, 4> out, std::uint32_t v) noexcept {
  for (std::size_t i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xFFu);
}

inline void store_le64(std::span<std::byte, 8> out, std::uint64_t v) noexcept {
  store_le32(out.first<4>(), static_cast<std::uint32_t>(v));
  store_le32(out.last<4>(), static_cast<std::uint32_t>(v >> 32));
}

constexpr std::uint64_t mask(unsigned width) noexcept {
  return width >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << width) - 1);
}

}  // namespace th::bits
