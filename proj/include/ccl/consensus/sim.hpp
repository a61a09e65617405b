#pragma once

// Deterministic, single-threaded cluster simulator with a logical clock.
// Same seed + config + workload => identical trace.

#include "ccl/consensus/raft.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace ccl::consensus {

struct PartitionWindow
{
    std::uint64_t start_tick = 0;
    std::uint64_t end_tick = 0; // exclusive
    /// Isolated from every node outside the group while active.
    std::vector<NodeId> group;
};

struct SimNetConfig
{
    std::uint64_t seed = 0;
    double drop_probability = 0.0;
    /// Each message is delivered 1..delay_range ticks after sending.
    std::uint64_t delay_range = 1;
    std::vector<PartitionWindow> partitions;
    /// Random drops stop at this tick; unset means never.
    std::optional<std::uint64_t> drops_end_tick;
};

enum class WorkloadOp
{
    Propose,
    Crash,
    Restart,
};

struct WorkloadEvent
{
    std::uint64_t tick = 0;
    WorkloadOp op = WorkloadOp::Propose;
    NodeId node;   // Crash/Restart target
    Bytes command; // Propose payload; must be unique per event
};

struct SimOptions
{
    std::uint64_t election_timeout_min = 10;
    std::uint64_t election_timeout_max = 20;
    std::uint64_t heartbeat_interval = 2;
    /// When set, a probe command is submitted at this tick and the time until
    /// it commits is reported as `liveness_ticks`.
    std::optional<std::uint64_t> liveness_probe_tick;
    /// Extra ticks to run after the workload completes.
    std::uint64_t settle_ticks = 0;
};

struct TraceEvent
{
    std::uint64_t tick = 0;
    std::string type;
    NodeId node;
    std::string detail;
};

struct NodeFinalState
{
    NodeId id;
    bool alive = true;
    Role role = Role::Follower;
    std::uint64_t term = 0;
    std::uint64_t commit_index = 0;
    std::uint64_t last_applied = 0;
    std::vector<LogRecord> log;
    /// Distinct commands in application order (duplicates from retries skipped).
    std::vector<Bytes> applied;
};

struct Trace
{
    bool timed_out = false;
    std::uint64_t ticks = 0;
    std::vector<TraceEvent> events;
    std::vector<NodeFinalState> nodes;
    /// Safety violations detected while running; empty for a correct run.
    std::vector<std::string> violations;
    /// Global committed log: index -> record.
    std::map<std::uint64_t, LogRecord> committed;
    std::map<std::uint64_t, NodeId> leaders_by_term;
    std::optional<std::uint64_t> liveness_ticks;
    std::uint64_t messages_sent = 0;
    std::uint64_t messages_dropped = 0;
    /// (tick, node, new commit point) whenever a node applies new records.
    std::vector<std::tuple<std::uint64_t, NodeId, std::uint64_t>> commit_advances;

    std::size_t leader_count(std::uint64_t term) const;
    /// Distinct commands committed (retried duplicates and no-op/membership records excluded).
    std::size_t committed_commands() const;
    /// JSON-lines export of `events`.
    std::string to_json_lines() const;
};

std::vector<NodeId> default_node_ids(std::size_t cluster_size);

Trace run_simulation(std::size_t cluster_size, const SimNetConfig& net, std::vector<WorkloadEvent> workload,
                     std::uint64_t max_ticks, const SimOptions& options = {});

/// Randomised fault plan: drops up to `max_drop`, crashes/restarts of
/// minority subsets and one partition episode, all ending at `faults_end`.
struct FaultPlan
{
    SimNetConfig net;
    std::vector<WorkloadEvent> workload;
    std::uint64_t faults_end = 0;
};

FaultPlan generate_fault_plan(std::uint64_t seed, std::size_t cluster_size, std::size_t proposals,
                              double max_drop = 0.2, std::uint64_t faults_end = 600);

} // namespace ccl::consensus
