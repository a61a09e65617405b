#include "ccl/consensus/sim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <memory>
#include <queue>
#include <set>

namespace ccl::consensus {

std::size_t Trace::leader_count(std::uint64_t term) const { return leaders_by_term.count(term); }

std::size_t Trace::committed_commands() const
{
    std::set<Bytes> distinct;
    for (const auto& [index, record] : committed)
        if (record.kind == RecordKind::Command)
            distinct.insert(record.command);
    return distinct.size();
}

std::string Trace::to_json_lines() const
{
    std::string out;
    for (const auto& e : events)
    {
        nlohmann::json j{{"tick", e.tick}, {"type", e.type}, {"node", e.node}, {"detail", e.detail}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<NodeId> default_node_ids(std::size_t cluster_size)
{
    std::vector<NodeId> ids;
    for (std::size_t i = 0; i < cluster_size; ++i)
        ids.push_back("n" + std::to_string(i));
    return ids;
}

namespace {

struct InFlight
{
    std::uint64_t deliver_tick;
    std::uint64_t seq;
    Message msg;

    bool operator>(const InFlight& o) const
    {
        return deliver_tick != o.deliver_tick ? deliver_tick > o.deliver_tick : seq > o.seq;
    }
};

struct SimNode
{
    NodeId id;
    MemoryStorage storage;
    std::unique_ptr<RaftNode> raft;
    std::uint64_t incarnation = 0;
    Role last_role = Role::Follower;
    std::set<Bytes> applied_set;
    std::vector<Bytes> applied;
};

// A client re-submits an uncommitted command whenever it sees a new leader
// (id, term); a leader never loses entries within its own term.
struct PendingCommand
{
    Bytes command;
    std::optional<std::pair<NodeId, std::uint64_t>> proposed_to;
};

class Simulator
{
  public:
    Simulator(std::size_t n, const SimNetConfig& net, const SimOptions& opts)
        : net_(net), opts_(opts), rng_(net.seed), ids_(default_node_ids(n))
    {
        for (const auto& id : ids_)
        {
            auto node = std::make_unique<SimNode>();
            node->id = id;
            nodes_.push_back(std::move(node));
        }
        for (auto& node : nodes_)
            boot(*node);
    }

    Trace run(std::vector<WorkloadEvent> workload, std::uint64_t max_ticks)
    {
        std::stable_sort(workload.begin(), workload.end(),
                         [](const auto& a, const auto& b) { return a.tick < b.tick; });
        std::uint64_t last_event_tick = workload.empty() ? 0 : workload.back().tick;
        std::size_t next_event = 0;
        std::optional<std::uint64_t> done_at;

        for (tick_ = 0; tick_ <= max_ticks; ++tick_)
        {
            for (const auto& w : net_.partitions)
            {
                if (w.start_tick == tick_)
                    log_event("partition_start", "", join(w.group));
                if (w.end_tick == tick_)
                    log_event("partition_end", "", join(w.group));
            }
            while (next_event < workload.size() && workload[next_event].tick <= tick_)
                apply_event(workload[next_event++]);
            if (opts_.liveness_probe_tick && *opts_.liveness_probe_tick == tick_)
            {
                probe_ = to_bytes("__liveness_probe__");
                pending_.push_back({*probe_, std::nullopt});
                log_event("probe", "", "");
            }

            deliver();
            for (auto& node : nodes_)
                if (node->raft)
                    send_all(node->raft->tick(tick_));
            drive_clients();
            for (auto& node : nodes_)
                if (node->raft)
                    collect(*node);
            check_leaders();
            if (tick_ % 50 == 0)
                check_log_matching();

            bool workload_done = !trace_.leaders_by_term.empty() && next_event == workload.size() &&
                                 tick_ >= last_event_tick &&
                                 all_committed() &&
                                 (!opts_.liveness_probe_tick || trace_.liveness_ticks.has_value());
            if (workload_done && !done_at)
                done_at = tick_;
            if (done_at && tick_ >= *done_at + opts_.settle_ticks)
                break;
        }
        trace_.timed_out = !done_at;
        trace_.ticks = std::min(tick_, max_ticks);
        check_log_matching();
        for (auto& node : nodes_)
        {
            NodeFinalState s;
            s.id = node->id;
            s.alive = node->raft != nullptr;
            s.applied = node->applied;
            if (node->raft)
            {
                s.role = node->raft->role();
                s.term = node->raft->current_term();
                s.commit_index = node->raft->commit_index();
                s.last_applied = node->raft->last_applied();
                s.log = node->raft->log();
            }
            else
            {
                s.term = node->storage.hard_state().term;
                s.log = node->storage.log();
            }
            trace_.nodes.push_back(std::move(s));
        }
        return std::move(trace_);
    }

  private:
    static std::string join(const std::vector<NodeId>& ids)
    {
        std::string s;
        for (const auto& id : ids)
            s += (s.empty() ? "" : ",") + id;
        return s;
    }

    void log_event(std::string type, NodeId node, std::string detail)
    {
        trace_.events.push_back({tick_, std::move(type), std::move(node), std::move(detail)});
    }

    void violation(std::string what)
    {
        log_event("violation", "", what);
        trace_.violations.push_back("tick " + std::to_string(tick_) + ": " + std::move(what));
    }

    void boot(SimNode& node)
    {
        RaftConfig cfg;
        cfg.id = node.id;
        cfg.bootstrap_members = ids_;
        cfg.election_timeout_min = opts_.election_timeout_min;
        cfg.election_timeout_max = opts_.election_timeout_max;
        cfg.heartbeat_interval = opts_.heartbeat_interval;
        cfg.seed = net_.seed * 1000003 + node.incarnation;
        node.raft = std::make_unique<RaftNode>(cfg, node.storage);
        node.last_role = Role::Follower;
        node.applied.clear();
        node.applied_set.clear();
    }

    SimNode* find(const NodeId& id)
    {
        for (auto& n : nodes_)
            if (n->id == id)
                return n.get();
        return nullptr;
    }

    bool connected(const NodeId& a, const NodeId& b) const
    {
        for (const auto& w : net_.partitions)
        {
            if (tick_ < w.start_tick || tick_ >= w.end_tick)
                continue;
            bool ia = std::find(w.group.begin(), w.group.end(), a) != w.group.end();
            bool ib = std::find(w.group.begin(), w.group.end(), b) != w.group.end();
            if (ia != ib)
                return false;
        }
        return true;
    }

    void send_all(std::vector<Message> msgs)
    {
        for (auto& m : msgs)
        {
            ++trace_.messages_sent;
            bool drops_active = !net_.drops_end_tick || tick_ < *net_.drops_end_tick;
            double roll = std::uniform_real_distribution<double>(0.0, 1.0)(rng_);
            if (!connected(m.from, m.to) || (drops_active && roll < net_.drop_probability))
            {
                ++trace_.messages_dropped;
                continue;
            }
            auto delay = 1 + rng_() % std::max<std::uint64_t>(1, net_.delay_range);
            in_flight_.push({tick_ + delay, seq_++, std::move(m)});
        }
    }

    void deliver()
    {
        while (!in_flight_.empty() && in_flight_.top().deliver_tick <= tick_)
        {
            auto f = in_flight_.top();
            in_flight_.pop();
            auto* dest = find(f.msg.to);
            if (!dest || !dest->raft || !connected(f.msg.from, f.msg.to))
            {
                ++trace_.messages_dropped;
                continue;
            }
            send_all(dest->raft->handle(f.msg));
            collect(*dest);
        }
    }

    void apply_event(const WorkloadEvent& e)
    {
        switch (e.op)
        {
        case WorkloadOp::Propose:
            pending_.push_back({e.command, std::nullopt});
            log_event("propose", "", to_string(e.command));
            break;
        case WorkloadOp::Crash:
            if (auto* n = find(e.node); n && n->raft)
            {
                n->raft.reset();
                log_event("crash", e.node, "");
            }
            break;
        case WorkloadOp::Restart:
            if (auto* n = find(e.node); n && !n->raft)
            {
                ++n->incarnation;
                boot(*n);
                log_event("restart", e.node, "");
            }
            break;
        }
    }

    SimNode* current_leader()
    {
        SimNode* best = nullptr;
        for (auto& n : nodes_)
            if (n->raft && n->raft->role() == Role::Leader &&
                (!best || n->raft->current_term() > best->raft->current_term()))
                best = n.get();
        return best;
    }

    void drive_clients()
    {
        auto* leader = current_leader();
        if (!leader)
            return;
        bool proposed = false;
        std::pair<NodeId, std::uint64_t> target{leader->id, leader->raft->current_term()};
        for (auto& p : pending_)
        {
            if (committed_cmds_.contains(p.command) || p.proposed_to == target)
                continue;
            leader->raft->propose(p.command);
            p.proposed_to = target;
            proposed = true;
        }
        std::erase_if(pending_, [&](const PendingCommand& p) { return committed_cmds_.contains(p.command); });
        if (proposed)
        {
            send_all(leader->raft->replicate());
            collect(*leader);
        }
    }

    void collect(SimNode& node)
    {
        auto role = node.raft->role();
        if (role != node.last_role)
        {
            node.last_role = role;
            if (role == Role::Leader)
            {
                log_event("leader", node.id, "term " + std::to_string(node.raft->current_term()));
                check_leader_completeness(node);
            }
        }
        auto committed = node.raft->take_committed();
        if (!committed.empty())
            trace_.commit_advances.emplace_back(tick_, node.id, committed.back().index);
        for (auto& c : committed)
        {
            auto [it, inserted] = trace_.committed.try_emplace(c.index, c.record);
            if (inserted)
            {
                if (c.record.kind == RecordKind::Command)
                {
                    committed_cmds_.insert(c.record.command);
                    if (probe_ && c.record.command == *probe_ && !trace_.liveness_ticks)
                        trace_.liveness_ticks = tick_ - *opts_.liveness_probe_tick;
                }
                log_event("commit", node.id, std::to_string(c.index));
            }
            else if (!(it->second == c.record))
            {
                violation("node " + node.id + " applied a different record at index " + std::to_string(c.index));
            }
            if (c.record.kind == RecordKind::Command && node.applied_set.insert(c.record.command).second)
                node.applied.push_back(c.record.command);
        }
    }

    void check_leader_completeness(SimNode& node)
    {
        const auto& log = node.raft->log();
        for (const auto& [index, record] : trace_.committed)
            if (index > log.size() || !(log[index - 1] == record))
            {
                violation("leader " + node.id + " of term " + std::to_string(node.raft->current_term()) +
                          " is missing committed index " + std::to_string(index));
                return;
            }
    }

    void check_leaders()
    {
        for (auto& n : nodes_)
        {
            if (!n->raft || n->raft->role() != Role::Leader)
                continue;
            auto [it, inserted] = trace_.leaders_by_term.try_emplace(n->raft->current_term(), n->id);
            if (!inserted && it->second != n->id)
                violation("two leaders in term " + std::to_string(it->first) + ": " + it->second + " and " + n->id);
        }
    }

    void check_log_matching()
    {
        std::vector<std::vector<LogRecord>> logs;
        for (auto& n : nodes_)
            logs.push_back(n->raft ? n->raft->log() : n->storage.log());
        for (std::size_t a = 0; a < logs.size(); ++a)
            for (std::size_t b = a + 1; b < logs.size(); ++b)
            {
                auto len = std::min(logs[a].size(), logs[b].size());
                std::size_t last_same_term = 0;
                for (std::size_t i = len; i > 0; --i)
                    if (logs[a][i - 1].term == logs[b][i - 1].term)
                    {
                        last_same_term = i;
                        break;
                    }
                for (std::size_t i = 0; i < last_same_term; ++i)
                    if (!(logs[a][i] == logs[b][i]))
                    {
                        violation("log matching broken between " + ids_[a] + " and " + ids_[b] + " at index " +
                                  std::to_string(i + 1));
                        return;
                    }
            }
    }

    bool all_committed() const
    {
        return std::all_of(pending_.begin(), pending_.end(),
                           [&](const PendingCommand& p) { return committed_cmds_.contains(p.command); });
    }

    SimNetConfig net_;
    SimOptions opts_;
    std::mt19937_64 rng_;
    std::vector<NodeId> ids_;
    std::vector<std::unique_ptr<SimNode>> nodes_;
    std::priority_queue<InFlight, std::vector<InFlight>, std::greater<>> in_flight_;
    std::uint64_t seq_ = 0;
    std::uint64_t tick_ = 0;
    std::vector<PendingCommand> pending_;
    std::set<Bytes> committed_cmds_;
    std::optional<Bytes> probe_;
    Trace trace_;
};

} // namespace

Trace run_simulation(std::size_t cluster_size, const SimNetConfig& net, std::vector<WorkloadEvent> workload,
                     std::uint64_t max_ticks, const SimOptions& options)
{
    if (cluster_size == 0)
        throw Error(ErrorCode::Config, "cluster_size must be at least 1");
    Simulator sim(cluster_size, net, options);
    return sim.run(std::move(workload), max_ticks);
}

FaultPlan generate_fault_plan(std::uint64_t seed, std::size_t n, std::size_t proposals, double max_drop,
                              std::uint64_t faults_end)
{
    std::mt19937_64 rng(seed);
    auto uniform = [&](std::uint64_t lo, std::uint64_t hi) {
        return std::uniform_int_distribution<std::uint64_t>(lo, hi)(rng);
    };
    FaultPlan plan;
    plan.faults_end = faults_end;
    plan.net.seed = seed;
    plan.net.drop_probability = std::uniform_real_distribution<double>(0.0, max_drop)(rng);
    plan.net.delay_range = uniform(1, 3);
    plan.net.drops_end_tick = faults_end;
    auto ids = default_node_ids(n);

    // One partition episode.
    if (n > 1)
    {
        PartitionWindow w;
        w.start_tick = uniform(50, faults_end / 2);
        w.end_tick = std::min(faults_end, w.start_tick + uniform(50, 200));
        auto side = uniform(1, n - 1);
        auto shuffled = ids;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        w.group.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(side));
        std::sort(w.group.begin(), w.group.end());
        plan.net.partitions.push_back(std::move(w));
    }

    // Non-overlapping crash episodes, each of a minority subset.
    std::size_t minority = (n - 1) / 2;
    std::uint64_t t = uniform(20, 120);
    while (minority > 0 && t + 40 < faults_end)
    {
        auto count = uniform(1, minority);
        auto shuffled = ids;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        auto restart = std::min(faults_end, t + uniform(20, 150));
        for (std::size_t i = 0; i < count; ++i)
        {
            plan.workload.push_back({t, WorkloadOp::Crash, shuffled[i], {}});
            plan.workload.push_back({restart, WorkloadOp::Restart, shuffled[i], {}});
        }
        t = restart + uniform(10, 150);
    }

    for (std::size_t i = 0; i < proposals; ++i)
    {
        auto tick = uniform(1, faults_end + 100);
        plan.workload.push_back(
            {tick, WorkloadOp::Propose, {}, to_bytes("s" + std::to_string(seed) + "-c" + std::to_string(i))});
    }
    std::stable_sort(plan.workload.begin(), plan.workload.end(),
                     [](const auto& a, const auto& b) { return a.tick < b.tick; });
    return plan;
}

} // namespace ccl::consensus
