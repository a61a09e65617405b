#include "ccl/consensus/raft.hpp"

#include <algorithm>
#include <functional>

namespace ccl::consensus {

std::string_view role_name(Role role)
{
    switch (role)
    {
    case Role::Follower: return "Follower";
    case Role::Candidate: return "Candidate";
    case Role::Leader: return "Leader";
    }
    return "Unknown";
}

RaftNode::RaftNode(RaftConfig config, RaftStorage& storage)
    : config_(std::move(config)), storage_(storage),
      rng_(config_.seed ^ std::hash<std::string>{}(config_.id))
{
    if (config_.election_timeout_min == 0 || config_.election_timeout_max < config_.election_timeout_min)
        throw Error(ErrorCode::Config, "invalid election timeout range");
    hard_ = storage_.hard_state();
    log_ = storage_.log();
    recompute_members();
}

bool RaftNode::is_member() const
{
    return std::find(members_.begin(), members_.end(), config_.id) != members_.end();
}

std::uint64_t RaftNode::match_index(const NodeId& peer) const
{
    auto it = match_index_.find(peer);
    return it == match_index_.end() ? 0 : it->second;
}

std::uint64_t RaftNode::term_at(std::uint64_t index) const
{
    if (index == 0 || index > log_.size())
        return 0;
    return log_[index - 1].term;
}

std::uint64_t RaftNode::random_timeout()
{
    std::uniform_int_distribution<std::uint64_t> dist(config_.election_timeout_min, config_.election_timeout_max);
    return dist(rng_);
}

void RaftNode::reset_election_timer() { election_deadline_ = now_ + random_timeout(); }

void RaftNode::persist_hard_state() { storage_.save_hard_state(hard_); }

void RaftNode::recompute_members()
{
    members_ = config_.bootstrap_members;
    for (auto it = log_.rbegin(); it != log_.rend(); ++it)
        if (it->kind == RecordKind::Membership)
        {
            members_ = decode_membership(it->command).members;
            break;
        }
    if (role_ == Role::Leader)
        for (const auto& peer : members_)
            if (peer != config_.id && !next_index_.contains(peer))
            {
                next_index_[peer] = 1;
                match_index_[peer] = 0;
            }
}

void RaftNode::append_local(LogRecord record)
{
    log_.push_back(std::move(record));
    storage_.write_log(log_.size(), std::span(log_).last(1));
    if (log_.back().kind == RecordKind::Membership)
        recompute_members();
}

void RaftNode::become_follower(std::uint64_t term)
{
    if (term > hard_.term)
    {
        hard_.term = term;
        hard_.voted_for.reset();
        persist_hard_state();
        leader_hint_.reset();
    }
    role_ = Role::Follower;
    votes_.clear();
}

std::vector<Message> RaftNode::start_election()
{
    role_ = Role::Candidate;
    hard_.term += 1;
    hard_.voted_for = config_.id;
    persist_hard_state();
    leader_hint_.reset();
    votes_ = {config_.id};
    reset_election_timer();
    std::vector<Message> out;
    if (votes_.size() >= quorum())
    {
        become_leader();
        return replicate();
    }
    for (const auto& peer : members_)
    {
        if (peer == config_.id)
            continue;
        Message m;
        m.from = config_.id;
        m.to = peer;
        m.kind = MessageKind::RequestVote;
        m.term = hard_.term;
        m.last_log_index = last_index();
        m.last_log_term = term_at(last_index());
        out.push_back(std::move(m));
    }
    return out;
}

void RaftNode::become_leader()
{
    role_ = Role::Leader;
    leader_hint_ = config_.id;
    votes_.clear();
    next_index_.clear();
    match_index_.clear();
    for (const auto& peer : members_)
        if (peer != config_.id)
        {
            next_index_[peer] = log_.size() + 1;
            match_index_[peer] = 0;
        }
    next_heartbeat_ = now_ + config_.heartbeat_interval;
    append_local({hard_.term, RecordKind::Noop, {}});
    advance_commit();
}

std::vector<Message> RaftNode::tick(std::uint64_t now_ticks)
{
    now_ = std::max(now_, now_ticks);
    if (!election_deadline_)
        reset_election_timer();
    std::vector<Message> out;
    if (role_ == Role::Leader)
    {
        if (now_ >= next_heartbeat_)
        {
            next_heartbeat_ = now_ + config_.heartbeat_interval;
            for (const auto& peer : members_)
            {
                if (peer == config_.id)
                    continue;
                // Retransmit anything not yet acknowledged.
                auto& next = next_index_[peer];
                next = std::min(next, match_index_[peer] + 1);
                out.push_back(append_entries_for(peer));
            }
        }
        return out;
    }
    if (is_member() && now_ >= *election_deadline_)
        return start_election();
    return out;
}

Message RaftNode::append_entries_for(const NodeId& peer)
{
    auto& next = next_index_[peer];
    next = std::clamp<std::uint64_t>(next, 1, log_.size() + 1);
    Message m;
    m.from = config_.id;
    m.to = peer;
    m.kind = MessageKind::AppendEntries;
    m.term = hard_.term;
    m.prev_log_index = next - 1;
    m.prev_log_term = term_at(next - 1);
    m.leader_commit = commit_index_;
    auto end = std::min<std::uint64_t>(log_.size(), next - 1 + config_.max_entries_per_message);
    m.entries.assign(log_.begin() + static_cast<std::ptrdiff_t>(next - 1),
                     log_.begin() + static_cast<std::ptrdiff_t>(end));
    next = end + 1;
    return m;
}

std::vector<Message> RaftNode::replicate()
{
    std::vector<Message> out;
    if (role_ != Role::Leader)
        return out;
    for (const auto& peer : members_)
    {
        if (peer == config_.id)
            continue;
        if (next_index_[peer] <= log_.size())
            out.push_back(append_entries_for(peer));
    }
    return out;
}

std::uint64_t RaftNode::propose(Bytes command)
{
    if (role_ != Role::Leader)
        throw NotLeader(leader_hint_);
    append_local({hard_.term, RecordKind::Command, std::move(command)});
    advance_commit();
    return log_.size();
}

std::uint64_t RaftNode::propose_membership(const MembershipChange& change)
{
    if (role_ != Role::Leader)
        throw NotLeader(leader_hint_);
    for (std::uint64_t i = commit_index_ + 1; i <= log_.size(); ++i)
        if (log_[i - 1].kind == RecordKind::Membership)
            throw Error(ErrorCode::State, "a membership change is already in progress");
    std::set<NodeId> current(members_.begin(), members_.end());
    std::set<NodeId> next(change.members.begin(), change.members.end());
    if (next.size() != change.members.size())
        throw Error(ErrorCode::Validation, "duplicate member ids");
    std::vector<NodeId> diff;
    std::set_symmetric_difference(current.begin(), current.end(), next.begin(), next.end(),
                                  std::back_inserter(diff));
    if (diff.size() != 1)
        throw Error(ErrorCode::Validation, "membership changes must add or remove exactly one node");
    append_local({hard_.term, RecordKind::Membership, encode_membership(change)});
    advance_commit();
    return log_.size();
}

void RaftNode::advance_commit()
{
    if (role_ != Role::Leader)
        return;
    bool self_votes = is_member();
    for (auto n = log_.size(); n > commit_index_; --n)
    {
        if (term_at(n) != hard_.term)
            break;
        std::size_t count = self_votes ? 1 : 0;
        for (const auto& peer : members_)
            if (peer != config_.id && match_index(peer) >= n)
                ++count;
        if (count >= quorum())
        {
            commit_index_ = n;
            break;
        }
    }
    if (!self_votes)
    {
        // Step down once our own removal is committed.
        for (std::uint64_t i = log_.size(); i > 0; --i)
            if (log_[i - 1].kind == RecordKind::Membership)
            {
                if (i <= commit_index_)
                    role_ = Role::Follower;
                break;
            }
    }
}

std::vector<Message> RaftNode::handle(const Message& m)
{
    std::vector<Message> out;
    if (m.to != config_.id)
        return out;
    if (m.term > hard_.term)
        become_follower(m.term);
    switch (m.kind)
    {
    case MessageKind::RequestVote: on_request_vote(m, out); break;
    case MessageKind::RequestVoteReply: on_request_vote_reply(m, out); break;
    case MessageKind::AppendEntries: on_append_entries(m, out); break;
    case MessageKind::AppendEntriesReply: on_append_entries_reply(m, out); break;
    }
    return out;
}

void RaftNode::on_request_vote(const Message& m, std::vector<Message>& out)
{
    auto my_last_term = term_at(last_index());
    bool up_to_date = m.last_log_term > my_last_term ||
                      (m.last_log_term == my_last_term && m.last_log_index >= last_index());
    bool grant = m.term == hard_.term && (!hard_.voted_for || *hard_.voted_for == m.from) && up_to_date;
    if (grant)
    {
        hard_.voted_for = m.from;
        persist_hard_state();
        reset_election_timer();
    }
    Message reply;
    reply.from = config_.id;
    reply.to = m.from;
    reply.kind = MessageKind::RequestVoteReply;
    reply.term = hard_.term;
    reply.success = grant;
    out.push_back(std::move(reply));
}

void RaftNode::on_request_vote_reply(const Message& m, std::vector<Message>& out)
{
    if (role_ != Role::Candidate || m.term != hard_.term || !m.success)
        return;
    if (std::find(members_.begin(), members_.end(), m.from) == members_.end())
        return;
    votes_.insert(m.from);
    if (votes_.size() >= quorum())
    {
        become_leader();
        auto msgs = replicate();
        out.insert(out.end(), std::make_move_iterator(msgs.begin()), std::make_move_iterator(msgs.end()));
    }
}

void RaftNode::on_append_entries(const Message& m, std::vector<Message>& out)
{
    Message reply;
    reply.from = config_.id;
    reply.to = m.from;
    reply.kind = MessageKind::AppendEntriesReply;
    reply.term = hard_.term;
    if (m.term < hard_.term)
    {
        reply.success = false;
        out.push_back(std::move(reply));
        return;
    }
    if (role_ != Role::Follower)
        become_follower(m.term);
    leader_hint_ = m.from;
    reset_election_timer();

    if (m.prev_log_index > last_index())
    {
        reply.success = false;
        reply.match_index = last_index();
        out.push_back(std::move(reply));
        return;
    }
    if (term_at(m.prev_log_index) != m.prev_log_term)
    {
        // Skip back over the whole conflicting term, never below the commit point.
        auto conflict_term = term_at(m.prev_log_index);
        auto idx = m.prev_log_index;
        while (idx > commit_index_ + 1 && term_at(idx - 1) == conflict_term)
            --idx;
        reply.success = false;
        reply.match_index = idx - 1;
        out.push_back(std::move(reply));
        return;
    }

    std::size_t i = 0;
    for (; i < m.entries.size(); ++i)
    {
        auto index = m.prev_log_index + 1 + i;
        if (index > last_index() || term_at(index) != m.entries[i].term)
            break;
    }
    if (i < m.entries.size())
    {
        auto first = m.prev_log_index + 1 + i;
        bool truncated_membership = false;
        for (auto k = first; k <= last_index(); ++k)
            truncated_membership |= log_[k - 1].kind == RecordKind::Membership;
        log_.resize(first - 1);
        log_.insert(log_.end(), m.entries.begin() + static_cast<std::ptrdiff_t>(i), m.entries.end());
        storage_.write_log(first, std::span(log_).subspan(first - 1));
        bool new_membership = std::any_of(m.entries.begin() + static_cast<std::ptrdiff_t>(i), m.entries.end(),
                                          [](const LogRecord& r) { return r.kind == RecordKind::Membership; });
        if (truncated_membership || new_membership)
            recompute_members();
    }
    auto last_new = m.prev_log_index + m.entries.size();
    if (m.leader_commit > commit_index_)
        commit_index_ = std::max(commit_index_, std::min(m.leader_commit, last_new));
    reply.success = true;
    reply.match_index = last_new;
    out.push_back(std::move(reply));
}

void RaftNode::on_append_entries_reply(const Message& m, std::vector<Message>& out)
{
    if (role_ != Role::Leader || m.term != hard_.term || !next_index_.contains(m.from))
        return;
    auto& match = match_index_[m.from];
    auto& next = next_index_[m.from];
    if (m.success)
    {
        match = std::max(match, std::min(m.match_index, last_index()));
        next = std::max(next, match + 1);
        advance_commit();
        if (role_ == Role::Leader && next <= last_index())
            out.push_back(append_entries_for(m.from));
    }
    else
    {
        next = std::max(match + 1, std::min(m.match_index + 1, last_index() + 1));
        out.push_back(append_entries_for(m.from));
    }
}

std::vector<CommittedRecord> RaftNode::take_committed()
{
    std::vector<CommittedRecord> out;
    while (last_applied_ < commit_index_)
    {
        ++last_applied_;
        out.push_back({last_applied_, log_[last_applied_ - 1]});
    }
    return out;
}

void RaftNode::restore_applied(std::uint64_t index)
{
    index = std::min<std::uint64_t>(index, log_.size());
    commit_index_ = std::max(commit_index_, index);
    last_applied_ = index;
}

} // namespace ccl::consensus
