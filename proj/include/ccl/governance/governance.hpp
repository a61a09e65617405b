#pragma once

#include "ccl/crypto/crypto.hpp"
#include "ccl/enclave/enclave.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace ccl::governance {

using MemberId = std::string;
using ProposalId = std::uint64_t;
using nlohmann::json;

enum class MemberStatus
{
    Active,
    Retired,
};

struct Member
{
    MemberId id;
    crypto::PublicKey public_key;
    MemberStatus status = MemberStatus::Active;

    bool operator==(const Member&) const = default;
};

enum class ActionKind
{
    AddMember,
    RetireMember,
    AddTrustedMeasurement,
    RemoveTrustedMeasurement,
    TransitionServiceToOpen,
    SetConstitution,
    RegisterAppPolicy,
};

std::string_view action_name(ActionKind k);
ActionKind action_from_name(std::string_view name);

/// Args per kind:
///   AddMember {member_id, public_key}       RetireMember {member_id}
///   Add/RemoveTrustedMeasurement {measurement}
///   TransitionServiceToOpen {}              SetConstitution {resolve: {numerator, denominator}}
///   RegisterAppPolicy {policy: object}
struct Action
{
    ActionKind kind = ActionKind::AddMember;
    json args = json::object();

    bool operator==(const Action&) const = default;
};

json action_to_json(const Action& a);
Action action_from_json(const json& j);

enum class Ballot
{
    Yes,
    No,
};

enum class ProposalState
{
    Pending,
    Accepted,
    Rejected,
    Applied,
};

std::string_view state_name(ProposalState s);

struct Proposal
{
    ProposalId id = 0;
    MemberId proposer;
    Action action;
    std::map<MemberId, Ballot> ballots;
    ProposalState state = ProposalState::Pending;

    bool operator==(const Proposal&) const = default;
};

/// Accept when yes * denominator > active * numerator.
struct ResolveRule
{
    std::uint32_t numerator = 1;
    std::uint32_t denominator = 2;

    bool operator==(const ResolveRule&) const = default;
    bool accepts(std::size_t yes, std::size_t active) const;
};

struct Constitution
{
    std::uint64_t version = 1;
    ResolveRule resolve;

    bool operator==(const Constitution&) const = default;
};

json constitution_to_json(const Constitution& c);
/// Parses a constitution file body; missing fields take defaults. Version is always reset to 1.
Constitution constitution_from_file_json(const json& j);

enum class Phase
{
    Opening,
    Open,
};

struct ServiceStatus
{
    Phase phase = Phase::Opening;
    crypto::PublicKey service_identity;
    std::set<enclave::Measurement> trusted_measurements;
    std::vector<enclave::TrustedPlatform> trusted_platforms;

    bool operator==(const ServiceStatus&) const = default;
};

/// A consensus node admitted to the service, identified by its operator key.
struct NodeInfo
{
    std::string node_id;
    crypto::PublicKey identity;
    enclave::Measurement measurement;
    std::string platform_id;
    std::string node_address;
    std::string rpc_address;

    bool operator==(const NodeInfo&) const = default;
};

/// Node ids are the first 16 hex characters of the node identity key.
std::string node_id_for(const crypto::PublicKey& identity);

struct Genesis
{
    Constitution constitution;
    std::vector<Member> members;
    crypto::PublicKey service_identity;
    std::vector<enclave::Measurement> trusted_measurements;
    std::vector<enclave::TrustedPlatform> trusted_platforms;
    NodeInfo first_node;
    bool attestation = true;
};

struct Outcome
{
    ProposalId proposal_id = 0;
    ProposalState state = ProposalState::Pending;
    /// Ledger records produced by this command, in order.
    std::vector<json> records;
    std::optional<std::string> warning;
};

struct JoinRequest
{
    enclave::AttestationQuote quote;
    std::string node_address;
    std::string rpc_address;
};

struct JoinDecision
{
    bool admitted = false;
    enclave::QuoteVerdict reason = enclave::QuoteVerdict::Accept;
    std::optional<NodeInfo> node;
    std::vector<json> records;
};

Bytes proposal_signing_bytes(const Action& a);
Bytes ballot_signing_bytes(ProposalId id, Ballot b);

/// Governance state machine. Every mutation happens through a command that
/// returns the ledger records describing it; replaying those records through
/// `replay` re-executes the commands and reproduces the state.
class Governance
{
  public:
    using PolicyValidator = std::function<void(const json&)>;

    explicit Governance(PolicyValidator validator = {});

    std::vector<json> init(const Genesis& g);

    /// Throws Authorization, Authentication, Validation (message carries the rule id).
    Outcome submit_proposal(const MemberId& member, const Action& action, const crypto::Signature& sig);
    /// Throws Authorization, Authentication, NotFound, State.
    Outcome vote(const MemberId& member, ProposalId id, Ballot ballot, const crypto::Signature& sig);

    /// With attestation disabled only the measurement is checked against the trusted set.
    JoinDecision process_join_request(const JoinRequest& req);

    /// Re-executes the commands named by the records. Throws Validation if a
    /// recorded outcome differs from the re-executed one.
    static Governance replay(std::span<const json> records, PolicyValidator validator = {});

    bool initialized() const { return initialized_; }
    bool attestation() const { return attestation_; }
    const Constitution& constitution() const { return constitution_; }
    const std::map<MemberId, Member>& members() const { return members_; }
    std::size_t active_members() const;
    const std::map<ProposalId, Proposal>& proposals() const { return proposals_; }
    const Proposal& proposal(ProposalId id) const;
    const ServiceStatus& service() const { return service_; }
    const std::map<std::string, NodeInfo>& nodes() const { return nodes_; }
    const std::optional<json>& app_policy() const { return app_policy_; }
    std::uint64_t app_policy_version() const { return app_policy_version_; }
    std::vector<std::uint64_t> constitution_history() const { return constitution_history_; }

    /// Field-for-field snapshot used for equivalence checks.
    json snapshot() const;

  private:
    void validate(const Action& a) const;
    json apply_effects(const Action& a, std::optional<std::string>& warning);
    void require_active(const MemberId& m) const;

    PolicyValidator validator_;
    bool initialized_ = false;
    bool attestation_ = true;
    Constitution constitution_;
    std::vector<std::uint64_t> constitution_history_;
    std::map<MemberId, Member> members_;
    std::map<ProposalId, Proposal> proposals_;
    ProposalId next_proposal_ = 1;
    ServiceStatus service_;
    std::map<std::string, NodeInfo> nodes_;
    std::optional<json> app_policy_;
    std::uint64_t app_policy_version_ = 0;
};

json genesis_to_json(const Genesis& g);
Genesis genesis_from_json(const json& j);
json node_info_to_json(const NodeInfo& n);
NodeInfo node_info_from_json(const json& j);

} // namespace ccl::governance
