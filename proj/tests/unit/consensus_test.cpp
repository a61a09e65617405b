#include "ccl/consensus/raft.hpp"
#include "ccl/consensus/sim.hpp"
#include "../support/checks.hpp"
#include "../support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <deque>
#include <random>
#include <set>
#include <sstream>

using namespace ccl;
using namespace ccl::consensus;

namespace {

RaftConfig config_for(const NodeId& id, std::vector<NodeId> members, std::uint64_t seed = 1)
{
    RaftConfig c;
    c.id = id;
    c.bootstrap_members = std::move(members);
    c.seed = seed;
    return c;
}

// Hand-driven cluster: messages only move when the test says so.
struct ManualCluster
{
    std::vector<NodeId> ids;
    std::map<NodeId, MemoryStorage> storage;
    std::map<NodeId, std::unique_ptr<RaftNode>> nodes;
    std::deque<Message> queue;

    explicit ManualCluster(std::size_t n)
    {
        ids = default_node_ids(n);
        for (const auto& id : ids)
            nodes[id] = std::make_unique<RaftNode>(config_for(id, ids), storage[id]);
    }

    void push(std::vector<Message> msgs)
    {
        for (auto& m : msgs)
            queue.push_back(std::move(m));
    }

    // Delivers queued messages; `allow` filters by (from, to).
    template <typename Pred>
    void pump(Pred allow)
    {
        for (int guard = 0; guard < 10000 && !queue.empty(); ++guard)
        {
            auto m = queue.front();
            queue.pop_front();
            if (!allow(m))
                continue;
            push(nodes.at(m.to)->handle(m));
        }
    }
    void pump()
    {
        pump([](const Message&) { return true; });
    }

    std::uint64_t now = 0;

    void advance(std::uint64_t to)
    {
        for (; now <= to; ++now)
        {
            for (const auto& id : ids)
                push(nodes.at(id)->tick(now));
            pump();
        }
    }

    // Ticks every node on a shared clock until someone leads.
    RaftNode& elect()
    {
        for (int guard = 0; guard < 1000; ++guard)
        {
            for (const auto& id : ids)
                if (nodes.at(id)->role() == Role::Leader)
                    return *nodes.at(id);
            advance(now);
        }
        throw std::runtime_error("no leader");
    }

    std::vector<NodeId> followers_of(const RaftNode& leader) const
    {
        std::vector<NodeId> out;
        for (const auto& id : ids)
            if (id != leader.id())
                out.push_back(id);
        return out;
    }
};

} // namespace

TEST(Raft, SingleNodeBecomesLeaderOfTermOne)
{
    MemoryStorage st;
    RaftNode n(config_for("a", {"a"}), st);
    std::uint64_t t = 0;
    for (; n.role() != Role::Leader && t < 100; ++t)
        n.tick(t);
    EXPECT_EQ(n.role(), Role::Leader);
    EXPECT_EQ(n.current_term(), 1u);
    EXPECT_GE(t, 10u);
    EXPECT_LE(t, 21u);
}

TEST(Raft, FreshHeartbeatMeansNoOutput)
{
    ManualCluster c(3);
    auto& leader = c.elect();
    c.advance(c.now + 3);
    auto& follower = *c.nodes[c.followers_of(leader)[0]];
    EXPECT_EQ(follower.role(), Role::Follower);
    EXPECT_TRUE(follower.tick(c.now).empty());
}

TEST(Raft, StaleAppendEntriesRejectedWithCurrentTerm)
{
    MemoryStorage st;
    st.save_hard_state({5, std::nullopt});
    RaftNode n(config_for("b", {"a", "b", "c"}), st);
    Message m;
    m.from = "a";
    m.to = "b";
    m.kind = MessageKind::AppendEntries;
    m.term = 3;
    auto out = n.handle(m);
    ASSERT_EQ(out.size(), 1u);
    EXPECT_FALSE(out[0].success);
    EXPECT_EQ(out[0].term, 5u);
}

TEST(Raft, OneVotePerTerm)
{
    MemoryStorage st;
    RaftNode n(config_for("b", {"a", "b", "c"}), st);
    Message rv;
    rv.from = "a";
    rv.to = "b";
    rv.kind = MessageKind::RequestVote;
    rv.term = 1;
    auto first = n.handle(rv);
    ASSERT_TRUE(first.at(0).success);
    rv.from = "c";
    auto second = n.handle(rv);
    EXPECT_FALSE(second.at(0).success);
    EXPECT_EQ(st.hard_state().voted_for, NodeId("a"));
}

TEST(Raft, VoteDeniedToStaleLog)
{
    MemoryStorage st;
    st.write_log(1, std::vector<LogRecord>{{2, RecordKind::Noop, {}}});
    st.save_hard_state({2, std::nullopt});
    RaftNode n(config_for("b", {"a", "b", "c"}), st);
    Message rv;
    rv.from = "a";
    rv.to = "b";
    rv.kind = MessageKind::RequestVote;
    rv.term = 3;
    rv.last_log_index = 5;
    rv.last_log_term = 1;
    EXPECT_FALSE(n.handle(rv).at(0).success);
}

// Quorum arithmetic: 3 of 5 commits, 2 of 5 does not.
TEST(Raft, FiveNodeQuorum)
{
    for (int followers : {1, 2})
    {
        ManualCluster c(5);
        auto& leader = c.elect();
        c.advance(c.now + 3);
        auto base = leader.commit_index();
        auto idx = leader.propose(to_bytes("x"));
        std::set<NodeId> reachable{leader.id()};
        auto others = c.followers_of(leader);
        for (int i = 0; i < followers; ++i)
            reachable.insert(others[i]);
        c.push(leader.replicate());
        c.pump([&](const Message& m) { return reachable.contains(m.to) && reachable.contains(m.from); });
        if (followers == 2)
            EXPECT_EQ(leader.commit_index(), idx);
        else
            EXPECT_EQ(leader.commit_index(), base);
    }
}

TEST(Raft, ProposeOnFollowerIsNotLeaderWithHint)
{
    ManualCluster c(3);
    auto& leader = c.elect();
    c.advance(c.now + 3);
    try
    {
        c.nodes[c.followers_of(leader)[1]]->propose(to_bytes("x"));
        FAIL();
    }
    catch (const NotLeader& e)
    {
        EXPECT_EQ(e.code(), ErrorCode::NotLeader);
        EXPECT_EQ(e.leader_hint, leader.id());
    }
}

TEST(Raft, SingleNodeProposeCommitsAfterNextTick)
{
    MemoryStorage st;
    RaftNode n(config_for("a", {"a"}), st);
    std::uint64_t t = 0;
    while (n.role() != Role::Leader)
        n.tick(t++);
    n.take_committed();
    auto idx = n.propose(to_bytes("cmd"));
    n.tick(t);
    auto applied = n.take_committed();
    ASSERT_EQ(applied.size(), 1u);
    EXPECT_EQ(applied[0].index, idx);
    EXPECT_EQ(to_string(applied[0].record.command), "cmd");
}

TEST(Raft, CommitIndexNeverExceedsLog)
{
    MemoryStorage st;
    RaftNode n(config_for("b", {"a", "b"}), st);
    Message ae;
    ae.from = "a";
    ae.to = "b";
    ae.kind = MessageKind::AppendEntries;
    ae.term = 1;
    ae.leader_commit = 50;
    ae.entries = {{1, RecordKind::Command, to_bytes("x")}};
    n.handle(ae);
    EXPECT_EQ(n.commit_index(), 1u);
    EXPECT_LE(n.last_applied(), n.commit_index());
}

TEST(Raft, ConflictingSuffixIsReplaced)
{
    MemoryStorage st;
    st.write_log(1, std::vector<LogRecord>{{1, RecordKind::Command, to_bytes("a")},
                                           {1, RecordKind::Command, to_bytes("stale")}});
    st.save_hard_state({1, std::nullopt});
    RaftNode n(config_for("b", {"a", "b", "c"}), st);
    Message ae;
    ae.from = "a";
    ae.to = "b";
    ae.kind = MessageKind::AppendEntries;
    ae.term = 2;
    ae.prev_log_index = 1;
    ae.prev_log_term = 1;
    ae.entries = {{2, RecordKind::Command, to_bytes("fresh")}};
    auto out = n.handle(ae);
    ASSERT_TRUE(out.at(0).success);
    ASSERT_EQ(n.log().size(), 2u);
    EXPECT_EQ(to_string(n.log()[1].command), "fresh");
    EXPECT_EQ(st.log(), n.log());
}

TEST(Raft, AddAndRemoveOneServer)
{
    ManualCluster c(3);
    auto& leader = c.elect();
    c.advance(c.now + 3);
    // Adding two at once is rejected.
    EXPECT_THROW(leader.propose_membership({{"n0", "n1", "n2", "n3", "n4"}, {}}), Error);

    c.storage["n3"];
    c.nodes["n3"] = std::make_unique<RaftNode>(config_for("n3", {}), c.storage["n3"]);
    std::vector<NodeId> grown = c.ids;
    grown.push_back("n3");
    auto idx = leader.propose_membership({grown, to_bytes("join n3")});
    EXPECT_EQ(leader.members().size(), 4u);
    // A second change while the first is uncommitted is rejected.
    EXPECT_THROW(leader.propose_membership({c.ids, {}}), Error);
    c.push(leader.replicate());
    c.pump();
    EXPECT_GE(leader.commit_index(), idx);
    EXPECT_EQ(c.nodes["n3"]->log(), leader.log());
    EXPECT_TRUE(c.nodes["n3"]->is_member());

    auto removed = c.followers_of(leader)[0];
    std::vector<NodeId> shrunk;
    for (const auto& id : grown)
        if (id != removed)
            shrunk.push_back(id);
    c.ids.push_back("n3");
    auto rm = leader.propose_membership({shrunk, {}});
    c.push(leader.replicate());
    c.pump([&](const Message& m) { return m.to != removed; });
    EXPECT_GE(leader.commit_index(), rm);
    EXPECT_EQ(leader.members(), shrunk);
    EXPECT_EQ(c.nodes["n3"]->members(), shrunk);
}

TEST(Raft, FileStorageSurvivesRestart)
{
    test::TempDir dir;
    {
        FileStorage st(dir.path());
        st.save_hard_state({7, NodeId("x")});
        st.write_log(1, std::vector<LogRecord>{{1, RecordKind::Noop, {}}, {3, RecordKind::Command, to_bytes("a")},
                                               {3, RecordKind::Command, to_bytes("b")}});
        st.write_log(3, std::vector<LogRecord>{{7, RecordKind::Command, to_bytes("c")}});
    }
    FileStorage st(dir.path());
    EXPECT_EQ(st.hard_state().term, 7u);
    EXPECT_EQ(st.hard_state().voted_for, NodeId("x"));
    ASSERT_EQ(st.log().size(), 3u);
    EXPECT_EQ(to_string(st.log()[2].command), "c");
    st.write_log(2, {});
    FileStorage again(dir.path());
    EXPECT_EQ(again.log().size(), 1u);
}

TEST(Message, EncodingRoundTripsRandomMessages)
{
    std::mt19937_64 rng(3);
    for (int i = 0; i < 500; ++i)
    {
        Message m;
        m.kind = static_cast<MessageKind>(rng() % 4);
        m.from = "n" + std::to_string(rng() % 9);
        m.to = "n" + std::to_string(rng() % 9);
        m.term = rng() % 1000;
        switch (m.kind)
        {
        case MessageKind::RequestVote:
            m.last_log_index = rng();
            m.last_log_term = rng();
            break;
        case MessageKind::RequestVoteReply: m.success = rng() % 2; break;
        case MessageKind::AppendEntries:
            m.prev_log_index = rng();
            m.prev_log_term = rng();
            m.leader_commit = rng();
            for (auto k = rng() % 4; k > 0; --k)
                m.entries.push_back({rng() % 10, static_cast<RecordKind>(rng() % 3), to_bytes(std::to_string(rng()))});
            break;
        case MessageKind::AppendEntriesReply:
            m.success = rng() % 2;
            m.match_index = rng();
            break;
        }
        ASSERT_EQ(decode_message(as_view(encode_message(m))), m);
    }
    EXPECT_THROW(decode_message(as_view(Bytes{9, 0, 0})), Error);
}

// ---------------------------------------------------------------- simulator

TEST(Sim, ThreeNodesElectOneLeaderQuickly)
{
    SimNetConfig net;
    net.seed = 42;
    auto trace = run_simulation(3, net, {}, 200);
    EXPECT_TRUE(trace.violations.empty());
    ASSERT_EQ(trace.leaders_by_term.size(), 1u);
    std::optional<std::uint64_t> first_leader_tick;
    for (const auto& e : trace.events)
        if (e.type == "leader")
        {
            first_leader_tick = e.tick;
            break;
        }
    ASSERT_TRUE(first_leader_tick);
    EXPECT_LE(*first_leader_tick, 10u * 20u);
}

TEST(Sim, SameSeedSameTrace)
{
    auto plan = generate_fault_plan(7, 5, 50);
    auto a = run_simulation(5, plan.net, plan.workload, 3000);
    auto b = run_simulation(5, plan.net, plan.workload, 3000);
    EXPECT_EQ(a.to_json_lines(), b.to_json_lines());
    EXPECT_EQ(a.messages_sent, b.messages_sent);
}

TEST(Sim, SingleNodeThreeProposals)
{
    std::vector<WorkloadEvent> w;
    for (int i = 0; i < 3; ++i)
        w.push_back({5, WorkloadOp::Propose, {}, to_bytes("p" + std::to_string(i))});
    auto trace = run_simulation(1, {}, w, 500);
    EXPECT_FALSE(trace.timed_out);
    EXPECT_EQ(trace.committed_commands(), 3u);
}

TEST(Sim, TimeoutReturnsPartialTrace)
{
    std::vector<WorkloadEvent> w{{5, WorkloadOp::Propose, {}, to_bytes("x")},
                                 {6, WorkloadOp::Crash, "n0", {}},
                                 {6, WorkloadOp::Crash, "n1", {}}};
    auto trace = run_simulation(3, {}, w, 300);
    EXPECT_TRUE(trace.timed_out);
    EXPECT_EQ(trace.nodes.size(), 3u);
}

TEST(Sim, ThousandProposalsUnderDropsAppliedExactlyOnceInOrder)
{
    SimNetConfig net;
    net.seed = 11;
    net.drop_probability = 0.05;
    net.delay_range = 2;
    std::vector<WorkloadEvent> w;
    for (int i = 0; i < 1000; ++i)
        w.push_back({static_cast<std::uint64_t>(30 + i / 4), WorkloadOp::Propose, {}, to_bytes("c" + std::to_string(i))});
    auto trace = run_simulation(3, net, w, 20000, {.settle_ticks = 100});
    ASSERT_FALSE(trace.timed_out);
    EXPECT_TRUE(trace.violations.empty());

    // Multiset oracle: each command exactly once on every node.
    for (const auto& node : trace.nodes)
    {
        std::map<std::string, int> counts;
        for (const auto& c : node.applied)
            ++counts[to_string(c)];
        ASSERT_EQ(counts.size(), 1000u) << node.id;
        for (const auto& [cmd, n] : counts)
            ASSERT_EQ(n, 1) << cmd;
        EXPECT_EQ(node.applied, trace.nodes[0].applied);
    }
    // First commit of every command, grouped by record term, follows proposal order.
    std::map<std::uint64_t, std::vector<int>> by_term;
    std::set<Bytes> seen;
    for (const auto& [index, rec] : trace.committed)
        if (rec.kind == RecordKind::Command && seen.insert(rec.command).second)
            by_term[rec.term].push_back(std::stoi(to_string(rec.command).substr(1)));
    for (const auto& [term, seq] : by_term)
        EXPECT_TRUE(std::is_sorted(seq.begin(), seq.end())) << "term " << term;
}

TEST(Sim, CommittedEntrySurvivesLeaderCrash)
{
    std::vector<WorkloadEvent> w;
    for (int i = 0; i < 10; ++i)
        w.push_back({static_cast<std::uint64_t>(40 + 5 * i), WorkloadOp::Propose, {}, to_bytes("c" + std::to_string(i))});
    SimNetConfig net;
    net.seed = 5;
    auto probe = run_simulation(3, net, w, 2000);
    // Find when the fifth command committed and who led.
    std::uint64_t commit_tick = 0;
    std::uint64_t fifth_index = 0;
    for (const auto& [idx, rec] : probe.committed)
        if (rec.command == to_bytes("c4"))
            fifth_index = idx;
    ASSERT_GT(fifth_index, 0u);
    for (const auto& e : probe.events)
        if (e.type == "commit" && e.detail == std::to_string(fifth_index))
        {
            commit_tick = e.tick;
            break;
        }
    NodeId leader;
    for (const auto& e : probe.events)
        if (e.type == "leader" && e.tick <= commit_tick)
            leader = e.node;

    w.push_back({commit_tick + 1, WorkloadOp::Crash, leader, {}});
    auto trace = run_simulation(3, net, w, 4000);
    ASSERT_FALSE(trace.timed_out);
    EXPECT_TRUE(trace.violations.empty());
    bool checked = false;
    for (const auto& n : trace.nodes)
        if (n.alive && n.role == Role::Leader)
        {
            EXPECT_NE(n.id, leader);
            ASSERT_GE(n.log.size(), fifth_index);
            EXPECT_EQ(n.log[fifth_index - 1].command, to_bytes("c4"));
            checked = true;
        }
    EXPECT_TRUE(checked);
}

TEST(Sim, MinorityPartitionCommitsNothing)
{
    SimNetConfig net;
    net.seed = 21;
    PartitionWindow w{200, 600, {"n0", "n1"}};
    net.partitions.push_back(w);
    std::vector<WorkloadEvent> load;
    for (int i = 0; i < 60; ++i)
        load.push_back({static_cast<std::uint64_t>(50 + 10 * i), WorkloadOp::Propose, {}, to_bytes("c" + std::to_string(i))});
    auto trace = run_simulation(5, net, load, 5000);
    ASSERT_FALSE(trace.timed_out);
    EXPECT_TRUE(trace.violations.empty());
    bool majority_committed = false;
    for (const auto& [tick, node, index] : trace.commit_advances)
    {
        if (tick <= w.start_tick || tick >= w.end_tick)
            continue;
        bool minority = node == "n0" || node == "n1";
        EXPECT_FALSE(minority) << node << " advanced at tick " << tick;
        majority_committed |= !minority;
    }
    EXPECT_TRUE(majority_committed);
}

TEST(SimProperty, SafetyAndLivenessAcrossSeededFaultTraces)
{
    auto r = test::check_consensus_traces(1, 40);
    EXPECT_TRUE(r.safety.ok) << r.safety.detail;
    EXPECT_TRUE(r.liveness.ok) << r.liveness.detail;
}

TEST(Sim, TraceExportsJsonLines)
{
    std::vector<WorkloadEvent> w{{5, WorkloadOp::Propose, {}, to_bytes("x")}};
    auto trace = run_simulation(1, {}, w, 500);
    std::istringstream in(trace.to_json_lines());
    std::string line;
    int n = 0;
    while (std::getline(in, line))
    {
        auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.contains("tick"));
        ++n;
    }
    EXPECT_EQ(n, static_cast<int>(trace.events.size()));
}
