#include "ccl/common/codec.hpp"

namespace ccl {

std::uint32_t load_u32le(const std::uint8_t* p)
{
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) |
           (std::uint32_t(p[3]) << 24);
}

void store_u32le(std::uint8_t* p, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

Writer& Writer::u32(std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
}

Writer& Writer::u64(std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    return *this;
}

Writer& Writer::bytes(ByteView data)
{
    u32(static_cast<std::uint32_t>(data.size()));
    return raw(data);
}

Writer& Writer::str(std::string_view s)
{
    return bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

void Reader::need(std::size_t n) const
{
    if (remaining() < n)
        throw Error(ErrorCode::Decode, "truncated input: need " + std::to_string(n) + " bytes, have " +
                                           std::to_string(remaining()));
}

std::uint8_t Reader::u8()
{
    need(1);
    return in_[pos_++];
}

std::uint32_t Reader::u32()
{
    need(4);
    auto v = load_u32le(in_.data() + pos_);
    pos_ += 4;
    return v;
}

std::uint64_t Reader::u64()
{
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= std::uint64_t(in_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

ByteView Reader::raw(std::size_t n)
{
    need(n);
    auto v = in_.subspan(pos_, n);
    pos_ += n;
    return v;
}

Bytes Reader::bytes()
{
    auto n = u32();
    auto v = raw(n);
    return Bytes(v.begin(), v.end());
}

std::string Reader::str()
{
    auto n = u32();
    auto v = raw(n);
    return std::string(v.begin(), v.end());
}

Hash256 Reader::hash() { return Hash256::from_bytes(raw(32)); }

void Reader::expect_done() const
{
    if (!done())
        throw Error(ErrorCode::Decode, std::to_string(remaining()) + " trailing bytes");
}

} // namespace ccl
