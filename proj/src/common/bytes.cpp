#include "ccl/common/bytes.hpp"
#include "ccl/common/error.hpp"

#include <algorithm>

namespace ccl {

namespace {
constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c)
{
    if (c >= '0' && c <= '9')
        return c - '0';
    if (c >= 'a' && c <= 'f')
        return c - 'a' + 10;
    if (c >= 'A' && c <= 'F')
        return c - 'A' + 10;
    return -1;
}
} // namespace

std::string to_hex(ByteView data)
{
    std::string out;
    out.reserve(data.size() * 2);
    for (auto b : data)
    {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0xf]);
    }
    return out;
}

Bytes from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        throw Error(ErrorCode::Parse, "hex string has odd length");
    Bytes out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
    {
        int hi = hex_value(hex[2 * i]);
        int lo = hex_value(hex[2 * i + 1]);
        if (hi < 0 || lo < 0)
            throw Error(ErrorCode::Parse, "invalid hex digit");
        out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::string Hash256::hex() const { return to_hex(view()); }

Hash256 Hash256::from_hex(std::string_view hex)
{
    return from_bytes(as_view(ccl::from_hex(hex)));
}

Hash256 Hash256::from_bytes(ByteView raw)
{
    if (raw.size() != 32)
        throw Error(ErrorCode::Parse, "expected 32-byte digest, got " + std::to_string(raw.size()));
    Hash256 h;
    std::copy(raw.begin(), raw.end(), h.bytes.begin());
    return h;
}

std::string_view error_code_name(ErrorCode code)
{
    switch (code)
    {
    case ErrorCode::Io: return "io";
    case ErrorCode::Config: return "config";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Decode: return "decode";
    case ErrorCode::NotFound: return "not_found";
    case ErrorCode::NotYetSigned: return "not_yet_signed";
    case ErrorCode::NotLeader: return "not_leader";
    case ErrorCode::Authorization: return "authorization";
    case ErrorCode::Authentication: return "authentication";
    case ErrorCode::Validation: return "validation";
    case ErrorCode::State: return "state";
    case ErrorCode::InsufficientFunds: return "insufficient_funds";
    case ErrorCode::InsufficientAsset: return "insufficient_asset";
    case ErrorCode::Backing: return "backing";
    case ErrorCode::Duplicate: return "duplicate";
    case ErrorCode::ServiceNotOpen: return "service_not_open";
    case ErrorCode::Timeout: return "timeout";
    case ErrorCode::Unavailable: return "unavailable";
    }
    return "unknown";
}

} // namespace ccl
