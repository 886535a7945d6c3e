#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace softpuf::hex {

inline std::string encode(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (std::uint8_t b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0x0f]);
  }
  return out;
}

// Lowercase only: the on-disk formats are canonical, so "AB" and "ab" must
// not both decode to the same bytes.
inline std::optional<int> nibble(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  return std::nullopt;
}

inline std::optional<std::vector<std::uint8_t>> decode(std::string_view text) {
  if (text.size() % 2 != 0) return std::nullopt;
  std::vector<std::uint8_t> out(text.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto hi = nibble(text[2 * i]);
    auto lo = nibble(text[2 * i + 1]);
    if (!hi || !lo) return std::nullopt;
    out[i] = static_cast<std::uint8_t>((*hi << 4) | *lo);
  }
  return out;
}

inline std::string encode_u64(std::uint64_t v, int digits) {
  std::string out(static_cast<std::size_t>(digits), '0');
  for (int i = digits - 1; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = "0123456789abcdef"[v & 0xf];
  return out;
}

inline std::optional<std::uint64_t> decode_u64(std::string_view text) {
  if (text.empty() || text.size() > 16) return std::nullopt;
  std::uint64_t v = 0;
  for (char c : text) {
    auto n = nibble(c);
    if (!n) return std::nullopt;
    v = (v << 4) | static_cast<std::uint64_t>(*n);
  }
  return v;
}

}  // namespace softpuf::hex
