#pragma once

// Standard Raft (no pre-vote, no joint consensus). Each RaftNode is a
// single-threaded state machine driven by tick() and handle(); the caller
// transmits the returned messages. Persistent state is written through
// RaftStorage before any message is returned.

#include "ccl/common/error.hpp"
#include "ccl/consensus/message.hpp"
#include "ccl/consensus/storage.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <vector>

namespace ccl::consensus {

enum class Role : std::uint8_t
{
    Follower,
    Candidate,
    Leader,
};

std::string_view role_name(Role role);

struct RaftConfig
{
    NodeId id;
    /// Used while the log carries no Membership record.
    std::vector<NodeId> bootstrap_members;
    std::uint64_t election_timeout_min = 10;
    std::uint64_t election_timeout_max = 20;
    std::uint64_t heartbeat_interval = 2;
    std::size_t max_entries_per_message = 512;
    std::uint64_t seed = 0;
};

class NotLeader : public Error
{
  public:
    explicit NotLeader(std::optional<NodeId> hint)
        : Error(ErrorCode::NotLeader, "not the leader" + (hint ? "; try " + *hint : std::string{})),
          leader_hint(std::move(hint))
    {
    }
    std::optional<NodeId> leader_hint;
};

struct CommittedRecord
{
    std::uint64_t index = 0;
    LogRecord record;
};

class RaftNode
{
  public:
    RaftNode(RaftConfig config, RaftStorage& storage);

    std::vector<Message> tick(std::uint64_t now_ticks);
    std::vector<Message> handle(const Message& msg);

    /// Appends to the leader's log; replication happens on replicate()/tick().
    std::uint64_t propose(Bytes command);
    /// Single-server configuration change; at most one may be uncommitted.
    std::uint64_t propose_membership(const MembershipChange& change);
    /// Leader: AppendEntries for every peer with unsent entries.
    std::vector<Message> replicate();

    /// Records in (last_applied, commit_index], advancing last_applied.
    std::vector<CommittedRecord> take_committed();
    /// After a restart, marks a prefix already applied by the host.
    void restore_applied(std::uint64_t index);

    const NodeId& id() const { return config_.id; }
    Role role() const { return role_; }
    std::uint64_t current_term() const { return hard_.term; }
    const std::optional<NodeId>& voted_for() const { return hard_.voted_for; }
    const std::vector<LogRecord>& log() const { return log_; }
    std::uint64_t last_index() const { return log_.size(); }
    std::uint64_t commit_index() const { return commit_index_; }
    std::uint64_t last_applied() const { return last_applied_; }
    const std::optional<NodeId>& leader_hint() const { return leader_hint_; }
    const std::vector<NodeId>& members() const { return members_; }
    bool is_member() const;
    std::uint64_t match_index(const NodeId& peer) const;

  private:
    std::uint64_t term_at(std::uint64_t index) const;
    std::uint64_t random_timeout();
    void reset_election_timer();
    void become_follower(std::uint64_t term);
    void become_leader();
    void persist_hard_state();
    void append_local(LogRecord record);
    void recompute_members();
    void advance_commit();
    std::size_t quorum() const { return members_.size() / 2 + 1; }
    Message append_entries_for(const NodeId& peer);
    std::vector<Message> start_election();

    void on_request_vote(const Message& m, std::vector<Message>& out);
    void on_request_vote_reply(const Message& m, std::vector<Message>& out);
    void on_append_entries(const Message& m, std::vector<Message>& out);
    void on_append_entries_reply(const Message& m, std::vector<Message>& out);

    RaftConfig config_;
    RaftStorage& storage_;
    std::mt19937_64 rng_;

    HardState hard_;
    std::vector<LogRecord> log_;
    Role role_ = Role::Follower;
    std::uint64_t commit_index_ = 0;
    std::uint64_t last_applied_ = 0;
    std::optional<NodeId> leader_hint_;
    std::vector<NodeId> members_;

    std::uint64_t now_ = 0;
    std::optional<std::uint64_t> election_deadline_;
    std::uint64_t next_heartbeat_ = 0;
    std::set<NodeId> votes_;
    std::map<NodeId, std::uint64_t> next_index_;
    std::map<NodeId, std::uint64_t> match_index_;
};

} // namespace ccl::consensus
