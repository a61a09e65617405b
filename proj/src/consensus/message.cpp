#include "ccl/consensus/message.hpp"
#include "ccl/common/codec.hpp"

namespace ccl::consensus {

namespace {
void write_record(Writer& w, const LogRecord& r)
{
    w.u64(r.term).u8(static_cast<std::uint8_t>(r.kind)).bytes(r.command);
}

LogRecord read_record(Reader& rd)
{
    LogRecord r;
    r.term = rd.u64();
    auto kind = rd.u8();
    if (kind > static_cast<std::uint8_t>(RecordKind::Membership))
        throw Error(ErrorCode::Decode, "unknown log record kind");
    r.kind = static_cast<RecordKind>(kind);
    r.command = rd.bytes();
    return r;
}
} // namespace

std::string_view message_kind_name(MessageKind kind)
{
    switch (kind)
    {
    case MessageKind::RequestVote: return "RequestVote";
    case MessageKind::RequestVoteReply: return "RequestVoteReply";
    case MessageKind::AppendEntries: return "AppendEntries";
    case MessageKind::AppendEntriesReply: return "AppendEntriesReply";
    }
    return "Unknown";
}

Bytes encode_message(const Message& m)
{
    Writer w;
    w.u8(static_cast<std::uint8_t>(m.kind)).str(m.from).str(m.to).u64(m.term);
    switch (m.kind)
    {
    case MessageKind::RequestVote:
        w.u64(m.last_log_index).u64(m.last_log_term);
        break;
    case MessageKind::RequestVoteReply:
        w.u8(m.success ? 1 : 0);
        break;
    case MessageKind::AppendEntries:
        w.u64(m.prev_log_index).u64(m.prev_log_term).u64(m.leader_commit);
        w.u32(static_cast<std::uint32_t>(m.entries.size()));
        for (const auto& e : m.entries)
            write_record(w, e);
        break;
    case MessageKind::AppendEntriesReply:
        w.u8(m.success ? 1 : 0).u64(m.match_index);
        break;
    }
    return std::move(w).take();
}

Message decode_message(ByteView bytes)
{
    Reader rd(bytes);
    Message m;
    auto kind = rd.u8();
    if (kind > static_cast<std::uint8_t>(MessageKind::AppendEntriesReply))
        throw Error(ErrorCode::Decode, "unknown message kind");
    m.kind = static_cast<MessageKind>(kind);
    m.from = rd.str();
    m.to = rd.str();
    m.term = rd.u64();
    switch (m.kind)
    {
    case MessageKind::RequestVote:
        m.last_log_index = rd.u64();
        m.last_log_term = rd.u64();
        break;
    case MessageKind::RequestVoteReply:
        m.success = rd.u8() != 0;
        break;
    case MessageKind::AppendEntries: {
        m.prev_log_index = rd.u64();
        m.prev_log_term = rd.u64();
        m.leader_commit = rd.u64();
        auto n = rd.u32();
        if (n > rd.remaining())
            throw Error(ErrorCode::Decode, "entry count exceeds frame");
        m.entries.reserve(n);
        for (std::uint32_t i = 0; i < n; ++i)
            m.entries.push_back(read_record(rd));
        break;
    }
    case MessageKind::AppendEntriesReply:
        m.success = rd.u8() != 0;
        m.match_index = rd.u64();
        break;
    }
    rd.expect_done();
    return m;
}

Bytes encode_log_record(const LogRecord& r)
{
    Writer w;
    write_record(w, r);
    return std::move(w).take();
}

LogRecord decode_log_record(ByteView bytes)
{
    Reader rd(bytes);
    auto r = read_record(rd);
    rd.expect_done();
    return r;
}

Bytes encode_membership(const MembershipChange& m)
{
    Writer w;
    w.u32(static_cast<std::uint32_t>(m.members.size()));
    for (const auto& id : m.members)
        w.str(id);
    w.bytes(m.app_data);
    return std::move(w).take();
}

MembershipChange decode_membership(ByteView bytes)
{
    Reader rd(bytes);
    MembershipChange m;
    auto n = rd.u32();
    if (n > rd.remaining())
        throw Error(ErrorCode::Decode, "member count exceeds payload");
    for (std::uint32_t i = 0; i < n; ++i)
        m.members.push_back(rd.str());
    m.app_data = rd.bytes();
    rd.expect_done();
    return m;
}

} // namespace ccl::consensus
