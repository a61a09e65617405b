#pragma once

#include "ccl/common/bytes.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace ccl::consensus {

using NodeId = std::string;

enum class RecordKind : std::uint8_t
{
    Command = 0,
    Noop = 1,       // appended by every new leader
    Membership = 2, // full cluster configuration; takes effect when appended
};

struct LogRecord
{
    std::uint64_t term = 0;
    RecordKind kind = RecordKind::Command;
    Bytes command;

    bool operator==(const LogRecord&) const = default;
};

enum class MessageKind : std::uint8_t
{
    RequestVote = 0,
    RequestVoteReply = 1,
    AppendEntries = 2,
    AppendEntriesReply = 3,
};

std::string_view message_kind_name(MessageKind kind);

struct Message
{
    NodeId from;
    NodeId to;
    MessageKind kind = MessageKind::AppendEntries;
    std::uint64_t term = 0;

    // RequestVote: candidate's last log position.
    std::uint64_t last_log_index = 0;
    std::uint64_t last_log_term = 0;

    // AppendEntries.
    std::uint64_t prev_log_index = 0;
    std::uint64_t prev_log_term = 0;
    std::uint64_t leader_commit = 0;
    std::vector<LogRecord> entries;

    // Replies. For AppendEntriesReply, match_index is the last replicated
    // index on success and a retry hint on failure.
    bool success = false;
    std::uint64_t match_index = 0;

    bool operator==(const Message&) const = default;
};

/// kind(u8) ‖ from(str) ‖ to(str) ‖ term(u64) ‖ kind-specific fields.
Bytes encode_message(const Message& m);
Message decode_message(ByteView bytes);

Bytes encode_log_record(const LogRecord& r);
LogRecord decode_log_record(ByteView bytes);

/// Membership record payload: member ids plus opaque application data.
struct MembershipChange
{
    std::vector<NodeId> members;
    Bytes app_data;
};

Bytes encode_membership(const MembershipChange& m);
MembershipChange decode_membership(ByteView bytes);

} // namespace ccl::consensus
