#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ccl {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Fixed-size 256-bit digest.
struct Hash256
{
    std::array<std::uint8_t, 32> bytes{};

    auto operator<=>(const Hash256&) const = default;

    ByteView view() const { return {bytes.data(), bytes.size()}; }
    std::string hex() const;
    static Hash256 from_hex(std::string_view hex);
    static Hash256 from_bytes(ByteView raw);
};

std::string to_hex(ByteView data);
Bytes from_hex(std::string_view hex);

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }
inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

inline ByteView as_view(const Bytes& b) { return {b.data(), b.size()}; }

} // namespace ccl
