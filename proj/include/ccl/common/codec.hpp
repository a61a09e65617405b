#pragma once

// Canonical binary encoding shared by ledger entries, receipts, quotes and
// wire frames. All integers are little-endian; variable-length fields carry a
// u32 length prefix.

#include "ccl/common/bytes.hpp"
#include "ccl/common/error.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace ccl {

class Writer
{
  public:
    Writer& u8(std::uint8_t v)
    {
        out_.push_back(v);
        return *this;
    }
    Writer& u32(std::uint32_t v);
    Writer& u64(std::uint64_t v);
    Writer& raw(ByteView data)
    {
        out_.insert(out_.end(), data.begin(), data.end());
        return *this;
    }
    Writer& bytes(ByteView data);
    Writer& str(std::string_view s);
    Writer& hash(const Hash256& h) { return raw(h.view()); }

    const Bytes& buffer() const& { return out_; }
    Bytes take() && { return std::move(out_); }

  private:
    Bytes out_;
};

class Reader
{
  public:
    explicit Reader(ByteView in) : in_(in) {}

    std::uint8_t u8();
    std::uint32_t u32();
    std::uint64_t u64();
    ByteView raw(std::size_t n);
    Bytes bytes();
    std::string str();
    Hash256 hash();

    std::size_t remaining() const { return in_.size() - pos_; }
    bool done() const { return pos_ == in_.size(); }
    /// Throws unless the whole input was consumed.
    void expect_done() const;

  private:
    void need(std::size_t n) const;

    ByteView in_;
    std::size_t pos_ = 0;
};

std::uint32_t load_u32le(const std::uint8_t* p);
void store_u32le(std::uint8_t* p, std::uint32_t v);

} // namespace ccl
