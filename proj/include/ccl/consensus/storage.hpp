#pragma once

#include "ccl/consensus/message.hpp"

#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

namespace ccl::consensus {

struct HardState
{
    std::uint64_t term = 0;
    std::optional<NodeId> voted_for;

    bool operator==(const HardState&) const = default;
};

/// Durable Raft state. Every call returns only once the data is persisted.
class RaftStorage
{
  public:
    virtual ~RaftStorage() = default;

    virtual void save_hard_state(const HardState& hs) = 0;
    /// Replaces the log suffix starting at `first_index` (1-based) with `records`.
    virtual void write_log(std::uint64_t first_index, std::span<const LogRecord> records) = 0;

    virtual HardState hard_state() const = 0;
    virtual std::vector<LogRecord> log() const = 0;
};

/// In-memory storage; outlives node instances in the simulator so that a
/// "crash" loses only volatile state.
class MemoryStorage final : public RaftStorage
{
  public:
    void save_hard_state(const HardState& hs) override { hard_ = hs; }
    void write_log(std::uint64_t first_index, std::span<const LogRecord> records) override;
    HardState hard_state() const override { return hard_; }
    std::vector<LogRecord> log() const override { return log_; }

  private:
    HardState hard_;
    std::vector<LogRecord> log_;
};

/// File-backed storage: `raft.state` (rewritten atomically) and `raft.log`
/// (append-only frames of `[u64 index][record]`, suffix rewrites append
/// superseding frames).
class FileStorage final : public RaftStorage
{
  public:
    explicit FileStorage(std::filesystem::path dir);

    void save_hard_state(const HardState& hs) override;
    void write_log(std::uint64_t first_index, std::span<const LogRecord> records) override;
    HardState hard_state() const override { return hard_; }
    std::vector<LogRecord> log() const override { return log_; }

  private:
    void load();

    std::filesystem::path dir_;
    std::ofstream log_out_;
    HardState hard_;
    std::vector<LogRecord> log_;
};

} // namespace ccl::consensus
