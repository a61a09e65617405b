#pragma once

// Deterministic replicated state machine of a node: a RaftNode whose committed
// commands are applied to governance, settlement and the Merkle ledger.
// Single-threaded; the runtime serialises all calls through its mailbox.

#include "ccl/consensus/raft.hpp"
#include "ccl/consensus/storage.hpp"
#include "ccl/governance/governance.hpp"
#include "ccl/ledger/ledger.hpp"
#include "ccl/settlement/app.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <set>

namespace ccl::node {

using nlohmann::json;

/// Service secrets shared by every admitted node; persisted only in sealed form.
struct Secrets
{
    crypto::SymmetricKey data_key{};
    std::array<std::uint8_t, 32> service_seed{};

    crypto::KeyPair service_key() const { return crypto::KeyPair::from_seed({service_seed.data(), service_seed.size()}); }
    static Secrets generate();
};

Bytes encode_secrets(const Secrets& s);
Secrets decode_secrets(ByteView b);

enum class CrashPoint
{
    BeforeExecute,
    BetweenLegs,
    AfterExecute,
    AfterLedgerAppend,
    AfterApplyRecord,
};

struct CoreOptions
{
    std::filesystem::path ledger_path;
    std::filesystem::path data_dir;
    bool confidential = true;
    consensus::RaftConfig raft;
    Secrets secrets;
    /// Open existing state instead of creating it.
    bool recover = false;
    /// Test hook; throwing from it simulates a process crash at that point.
    std::function<void(CrashPoint)> crash_hook;
};

struct ApplyResult
{
    std::uint64_t index = 0;
    bool ok = true;
    ErrorCode code = ErrorCode::State;
    std::string message;
    json result;
    /// First ledger entry written by the command.
    std::optional<std::uint64_t> seqno;
    /// Committed command bytes, to match against what a client proposed.
    Bytes command;
};

/// Commands carried in Raft Command records (compact JSON):
///   {"type":"genesis","genesis":{...}}
///   {"type":"gov_propose","signer","action","signature"}
///   {"type":"gov_vote","signer","proposal_id","ballot","signature"}
///   {"type":"app","path","signer","body","signature"}
///   {"type":"sign"}
/// In confidential mode command records are 0x01 ‖ AEAD(data key, json), so
/// the persisted consensus log never holds request plaintext.
/// Membership records carry {"type":"join","quote","node_address","rpc_address"} as app data.
Bytes encode_command(const json& command);

class NodeCore
{
  public:
    explicit NodeCore(CoreOptions options);

    const consensus::NodeId& id() const { return raft_->id(); }
    const consensus::RaftNode& raft() const { return *raft_; }

    std::vector<consensus::Message> tick(std::uint64_t now);
    std::vector<consensus::Message> handle(const consensus::Message& m);
    /// Leader only; throws consensus::NotLeader. Returns the log index.
    std::uint64_t propose(const json& command);
    /// Leader pre-check against committed governance, then a single-server
    /// membership change carrying the join. Returns the decision and, when
    /// admitted, the log index of the membership record.
    std::pair<governance::JoinDecision, std::optional<std::uint64_t>> propose_join(const governance::JoinRequest& req);
    std::vector<consensus::Message> replicate() { return raft_->replicate(); }

    std::vector<ApplyResult> apply_committed();

    /// Proposes a sign command when the leader has unsigned entries and no sign pending.
    void maybe_propose_sign();

    const governance::Governance& governance() const { return gov_; }
    const settlement::Settlement* settlement() const { return settlement_ ? &*settlement_ : nullptr; }
    const ledger::Ledger& ledger() const { return *ledger_; }
    bool confidential() const { return options_.confidential; }
    const crypto::PublicKey& service_identity() const { return service_identity_; }

    /// Signed application read (/app/balance, /app/asset).
    json query_app(const settlement::AppRequest& r) const;
    /// Signed transaction read: /app/tx {seqno}. Operators are always refused.
    json read_tx(const std::string& signer, const json& body, const crypto::Signature& sig) const;
    json status() const;
    json service_json() const;

  private:
    ApplyResult apply_record(std::uint64_t index, const consensus::LogRecord& rec, bool replay);
    void apply_command(const json& cmd, bool replay, ApplyResult& out);
    void apply_join(const json& data, bool replay, ApplyResult& out);
    void write_governance(const std::vector<json>& records, bool replay, ApplyResult& out);
    void after_governance_outcome(const governance::Outcome& o);
    void crash(CrashPoint p, bool replay) const;
    Bytes open_command(ByteView record) const;
    void recover_state();
    void append_applied(std::uint64_t index);
    governance::Governance::PolicyValidator policy_validator();

    CoreOptions options_;
    std::unique_ptr<consensus::FileStorage> storage_;
    std::unique_ptr<consensus::RaftNode> raft_;
    std::optional<ledger::Ledger> ledger_;
    governance::Governance gov_;
    std::optional<settlement::Settlement> settlement_;
    std::set<Hash256> seen_requests_;
    crypto::PublicKey service_identity_;
    std::ofstream applied_out_;
    std::optional<std::uint64_t> sign_pending_;
};

} // namespace ccl::node
