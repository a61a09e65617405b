#include "ccl/governance/governance.hpp"
#include "ccl/common/error.hpp"
#include "ccl/common/signing.hpp"

#include <algorithm>

namespace ccl::governance {

namespace {

constexpr std::string_view kActionNames[] = {
    "AddMember",         "RetireMember",    "AddTrustedMeasurement", "RemoveTrustedMeasurement",
    "TransitionServiceToOpen", "SetConstitution", "RegisterAppPolicy",
};

[[noreturn]] void invalid(std::string_view rule, std::string_view detail)
{
    throw Error(ErrorCode::Validation, std::string(rule) + ": " + std::string(detail));
}

std::string require_string(const json& args, const char* field, std::string_view rule)
{
    if (!args.contains(field) || !args[field].is_string() || args[field].get<std::string>().empty())
        invalid(rule, std::string("field '") + field + "' must be a non-empty string");
    return args[field].get<std::string>();
}

enclave::Measurement parse_measurement(const json& args)
{
    auto hex = require_string(args, "measurement", "measurement.digest_32_bytes");
    Bytes raw;
    try
    {
        raw = from_hex(hex);
    }
    catch (const std::exception&)
    {
        invalid("measurement.digest_32_bytes", "not hex");
    }
    if (raw.size() != 32)
        invalid("measurement.digest_32_bytes", "digest is " + std::to_string(raw.size()) + " bytes");
    return {Hash256::from_bytes(as_view(raw))};
}

crypto::PublicKey parse_key(const json& args, const char* field, std::string_view rule)
{
    auto hex = require_string(args, field, rule);
    try
    {
        return crypto::PublicKey::from_hex(hex);
    }
    catch (const std::exception&)
    {
        invalid(rule, std::string("field '") + field + "' must be a 32-byte hex key");
    }
}

std::string_view ballot_name(Ballot b) { return b == Ballot::Yes ? "yes" : "no"; }

Ballot ballot_from_name(std::string_view s)
{
    if (s == "yes")
        return Ballot::Yes;
    if (s == "no")
        return Ballot::No;
    throw Error(ErrorCode::Parse, "ballot must be 'yes' or 'no'");
}

std::string_view member_status_name(MemberStatus s) { return s == MemberStatus::Active ? "Active" : "Retired"; }

json member_to_json(const Member& m)
{
    return {{"id", m.id}, {"public_key", m.public_key.hex()}, {"status", member_status_name(m.status)}};
}

Member member_from_json(const json& j)
{
    Member m;
    m.id = j.at("id").get<std::string>();
    m.public_key = crypto::PublicKey::from_hex(j.at("public_key").get<std::string>());
    m.status = j.value("status", "Active") == "Active" ? MemberStatus::Active : MemberStatus::Retired;
    return m;
}

json platform_to_json(const enclave::TrustedPlatform& p) { return {{"id", p.id}, {"public_key", p.key.hex()}}; }

enclave::TrustedPlatform platform_from_json(const json& j)
{
    return {j.at("id").get<std::string>(), crypto::PublicKey::from_hex(j.at("public_key").get<std::string>())};
}

} // namespace

json genesis_to_json(const Genesis& g)
{
    json members = json::array();
    for (const auto& m : g.members)
        members.push_back(member_to_json(m));
    json measurements = json::array();
    for (const auto& m : g.trusted_measurements)
        measurements.push_back(m.hex());
    json platforms = json::array();
    for (const auto& p : g.trusted_platforms)
        platforms.push_back(platform_to_json(p));
    return {{"type", "genesis"},
            {"constitution", constitution_to_json(g.constitution)},
            {"members", members},
            {"service_identity", g.service_identity.hex()},
            {"trusted_measurements", measurements},
            {"trusted_platforms", platforms},
            {"node", node_info_to_json(g.first_node)},
            {"attestation", g.attestation}};
}

Genesis genesis_from_json(const json& j)
{
    Genesis g;
    const auto& c = j.at("constitution");
    g.constitution.version = c.at("version").get<std::uint64_t>();
    g.constitution.resolve.numerator = c.at("resolve").at("numerator").get<std::uint32_t>();
    g.constitution.resolve.denominator = c.at("resolve").at("denominator").get<std::uint32_t>();
    for (const auto& m : j.at("members"))
        g.members.push_back(member_from_json(m));
    g.service_identity = crypto::PublicKey::from_hex(j.at("service_identity").get<std::string>());
    for (const auto& m : j.at("trusted_measurements"))
        g.trusted_measurements.push_back({Hash256::from_hex(m.get<std::string>())});
    for (const auto& p : j.at("trusted_platforms"))
        g.trusted_platforms.push_back(platform_from_json(p));
    g.first_node = node_info_from_json(j.at("node"));
    g.attestation = j.at("attestation").get<bool>();
    return g;
}

namespace {

void check_resolve(const json& r)
{
    if (!r.is_object() || !r.contains("numerator") || !r.contains("denominator") ||
        !r["numerator"].is_number_integer() || !r["denominator"].is_number_integer() ||
        r["numerator"].get<std::int64_t>() < 0 || r["denominator"].get<std::int64_t>() < 0)
        invalid("constitution.resolve_shape", "resolve needs unsigned numerator and denominator");
    auto num = r["numerator"].get<std::uint64_t>();
    auto den = r["denominator"].get<std::uint64_t>();
    if (den == 0 || num >= den || den > 1'000'000)
        invalid("constitution.resolve_fraction", "require 0 <= numerator < denominator <= 1000000");
}

} // namespace

std::string_view action_name(ActionKind k) { return kActionNames[static_cast<std::size_t>(k)]; }

ActionKind action_from_name(std::string_view name)
{
    for (std::size_t i = 0; i < std::size(kActionNames); ++i)
        if (kActionNames[i] == name)
            return static_cast<ActionKind>(i);
    throw Error(ErrorCode::Validation, "action.known_kind: unknown action '" + std::string(name) + "'");
}

json action_to_json(const Action& a) { return {{"kind", action_name(a.kind)}, {"args", a.args}}; }

Action action_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw Error(ErrorCode::Parse, "action needs a string 'kind'");
    Action a;
    a.kind = action_from_name(j["kind"].get<std::string>());
    a.args = j.value("args", json::object());
    if (!a.args.is_object())
        throw Error(ErrorCode::Parse, "action 'args' must be an object");
    return a;
}

std::string_view state_name(ProposalState s)
{
    switch (s)
    {
    case ProposalState::Pending: return "Pending";
    case ProposalState::Accepted: return "Accepted";
    case ProposalState::Rejected: return "Rejected";
    case ProposalState::Applied: return "Applied";
    }
    return "Unknown";
}

bool ResolveRule::accepts(std::size_t yes, std::size_t active) const
{
    return active > 0 && static_cast<std::uint64_t>(yes) * denominator > static_cast<std::uint64_t>(active) * numerator;
}

json constitution_to_json(const Constitution& c)
{
    return {{"version", c.version},
            {"resolve", {{"numerator", c.resolve.numerator}, {"denominator", c.resolve.denominator}}}};
}

Constitution constitution_from_file_json(const json& j)
{
    Constitution c;
    if (!j.is_object())
        throw Error(ErrorCode::Config, "constitution: expected a JSON object");
    if (j.contains("resolve"))
    {
        try
        {
            check_resolve(j["resolve"]);
        }
        catch (const Error& e)
        {
            throw Error(ErrorCode::Config, std::string("constitution.resolve: ") + e.what());
        }
        c.resolve.numerator = j["resolve"]["numerator"].get<std::uint32_t>();
        c.resolve.denominator = j["resolve"]["denominator"].get<std::uint32_t>();
    }
    return c;
}

std::string node_id_for(const crypto::PublicKey& identity) { return identity.hex().substr(0, 16); }

json node_info_to_json(const NodeInfo& n)
{
    return {{"node_id", n.node_id},         {"identity", n.identity.hex()},
            {"measurement", n.measurement.hex()}, {"platform_id", n.platform_id},
            {"node_address", n.node_address},     {"rpc_address", n.rpc_address}};
}

NodeInfo node_info_from_json(const json& j)
{
    NodeInfo n;
    n.node_id = j.at("node_id").get<std::string>();
    n.identity = crypto::PublicKey::from_hex(j.at("identity").get<std::string>());
    n.measurement.digest = Hash256::from_hex(j.at("measurement").get<std::string>());
    n.platform_id = j.at("platform_id").get<std::string>();
    n.node_address = j.at("node_address").get<std::string>();
    n.rpc_address = j.at("rpc_address").get<std::string>();
    return n;
}

Bytes proposal_signing_bytes(const Action& a)
{
    return request_signing_bytes("/gov/proposals", json{{"action", action_to_json(a)}});
}

Bytes ballot_signing_bytes(ProposalId id, Ballot b)
{
    return request_signing_bytes("/gov/proposals/" + std::to_string(id) + "/ballots",
                                 json{{"ballot", ballot_name(b)}});
}

Governance::Governance(PolicyValidator validator) : validator_(std::move(validator)) {}

std::vector<json> Governance::init(const Genesis& g)
{
    if (initialized_)
        throw Error(ErrorCode::State, "governance already initialized");
    if (g.members.empty())
        throw Error(ErrorCode::Config, "initial_members: at least one member required");
    if (g.constitution.version != 1)
        throw Error(ErrorCode::Config, "genesis constitution must be version 1");
    check_resolve(constitution_to_json(g.constitution)["resolve"]);
    std::map<MemberId, Member> members;
    for (const auto& m : g.members)
    {
        if (m.id.empty() || !members.emplace(m.id, m).second)
            throw Error(ErrorCode::Config, "initial_members: duplicate or empty id '" + m.id + "'");
        if (m.id == g.first_node.node_id || m.public_key == g.first_node.identity)
            throw Error(ErrorCode::Config, "initial_members: operator identity cannot be a member");
    }
    constitution_ = g.constitution;
    constitution_history_ = {g.constitution.version};
    members_ = std::move(members);
    service_.service_identity = g.service_identity;
    service_.trusted_measurements = {g.trusted_measurements.begin(), g.trusted_measurements.end()};
    service_.trusted_platforms = g.trusted_platforms;
    nodes_[g.first_node.node_id] = g.first_node;
    attestation_ = g.attestation;
    initialized_ = true;
    return {genesis_to_json(g)};
}

std::size_t Governance::active_members() const
{
    return static_cast<std::size_t>(std::count_if(members_.begin(), members_.end(), [](const auto& kv) {
        return kv.second.status == MemberStatus::Active;
    }));
}

const Proposal& Governance::proposal(ProposalId id) const
{
    auto it = proposals_.find(id);
    if (it == proposals_.end())
        throw Error(ErrorCode::NotFound, "unknown proposal " + std::to_string(id));
    return it->second;
}

void Governance::require_active(const MemberId& m) const
{
    if (!initialized_)
        throw Error(ErrorCode::State, "governance not initialized");
    auto it = members_.find(m);
    if (it == members_.end())
        throw Error(ErrorCode::Authorization, "unknown member '" + m + "'");
    if (it->second.status != MemberStatus::Active)
        throw Error(ErrorCode::Authorization, "member '" + m + "' is retired");
}

void Governance::validate(const Action& a) const
{
    const auto& args = a.args;
    switch (a.kind)
    {
    case ActionKind::AddMember: {
        auto id = require_string(args, "member_id", "add_member.id");
        auto key = parse_key(args, "public_key", "add_member.public_key");
        if (members_.contains(id))
            invalid("add_member.unique_id", "member '" + id + "' already exists");
        for (const auto& [mid, m] : members_)
            if (m.public_key == key)
                invalid("add_member.unique_key", "key already registered to '" + mid + "'");
        for (const auto& [nid, n] : nodes_)
            if (nid == id || n.identity == key)
                invalid("add_member.not_operator", "operators cannot be members");
        break;
    }
    case ActionKind::RetireMember: {
        auto id = require_string(args, "member_id", "retire_member.id");
        auto it = members_.find(id);
        if (it == members_.end() || it->second.status != MemberStatus::Active)
            invalid("retire_member.active", "member '" + id + "' is not active");
        if (active_members() <= 1)
            invalid("retire_member.keeps_one_active", "cannot retire the last active member");
        break;
    }
    case ActionKind::AddTrustedMeasurement: parse_measurement(args); break;
    case ActionKind::RemoveTrustedMeasurement: {
        auto m = parse_measurement(args);
        if (!service_.trusted_measurements.contains(m))
            invalid("measurement.present", "measurement is not trusted");
        break;
    }
    case ActionKind::TransitionServiceToOpen: break;
    case ActionKind::SetConstitution:
        if (!args.contains("resolve"))
            invalid("constitution.resolve_shape", "missing 'resolve'");
        check_resolve(args["resolve"]);
        break;
    case ActionKind::RegisterAppPolicy:
        if (!args.contains("policy") || !args["policy"].is_object())
            invalid("app_policy.object", "'policy' must be an object");
        if (validator_)
        {
            try
            {
                validator_(args["policy"]);
            }
            catch (const Error& e)
            {
                invalid("app_policy.valid", e.what());
            }
        }
        break;
    }
}

json Governance::apply_effects(const Action& a, std::optional<std::string>& warning)
{
    const auto& args = a.args;
    switch (a.kind)
    {
    case ActionKind::AddMember: {
        Member m{args["member_id"].get<std::string>(), crypto::PublicKey::from_hex(args["public_key"].get<std::string>()),
                 MemberStatus::Active};
        members_[m.id] = m;
        return {{"member", member_to_json(m)}};
    }
    case ActionKind::RetireMember: {
        auto& m = members_.at(args["member_id"].get<std::string>());
        m.status = MemberStatus::Retired;
        return {{"member", member_to_json(m)}};
    }
    case ActionKind::AddTrustedMeasurement: {
        auto m = parse_measurement(args);
        service_.trusted_measurements.insert(m);
        return {{"trusted_measurement", m.hex()}};
    }
    case ActionKind::RemoveTrustedMeasurement: {
        auto m = parse_measurement(args);
        service_.trusted_measurements.erase(m);
        return {{"removed_measurement", m.hex()}};
    }
    case ActionKind::TransitionServiceToOpen:
        if (service_.phase == Phase::Open)
        {
            warning = "service already open";
            return {{"phase", "Open"}, {"warning", *warning}};
        }
        service_.phase = Phase::Open;
        return {{"phase", "Open"}};
    case ActionKind::SetConstitution: {
        constitution_.version += 1;
        constitution_.resolve.numerator = args["resolve"]["numerator"].get<std::uint32_t>();
        constitution_.resolve.denominator = args["resolve"]["denominator"].get<std::uint32_t>();
        constitution_history_.push_back(constitution_.version);
        return {{"constitution", constitution_to_json(constitution_)}};
    }
    case ActionKind::RegisterAppPolicy:
        app_policy_ = args["policy"];
        app_policy_version_ += 1;
        return {{"app_policy_version", app_policy_version_}};
    }
    return json::object();
}

Outcome Governance::submit_proposal(const MemberId& member, const Action& action, const crypto::Signature& sig)
{
    require_active(member);
    if (!crypto::verify(members_.at(member).public_key, as_view(proposal_signing_bytes(action)), sig))
        throw Error(ErrorCode::Authentication, "proposal signature does not verify for '" + member + "'");
    validate(action);
    Proposal p;
    p.id = next_proposal_++;
    p.proposer = member;
    p.action = action;
    proposals_[p.id] = p;
    Outcome out;
    out.proposal_id = p.id;
    out.state = ProposalState::Pending;
    out.records.push_back({{"type", "proposal"},
                           {"proposal_id", p.id},
                           {"proposer", member},
                           {"action", action_to_json(action)},
                           {"signature", crypto::signature_hex(sig)}});
    return out;
}

Outcome Governance::vote(const MemberId& member, ProposalId id, Ballot ballot, const crypto::Signature& sig)
{
    require_active(member);
    auto it = proposals_.find(id);
    if (it == proposals_.end())
        throw Error(ErrorCode::NotFound, "unknown proposal " + std::to_string(id));
    if (!crypto::verify(members_.at(member).public_key, as_view(ballot_signing_bytes(id, ballot)), sig))
        throw Error(ErrorCode::Authentication, "ballot signature does not verify for '" + member + "'");
    auto& p = it->second;
    if (p.state != ProposalState::Pending)
        throw Error(ErrorCode::State, "proposal " + std::to_string(id) + " is " + std::string(state_name(p.state)));

    Outcome out;
    out.proposal_id = id;
    out.records.push_back({{"type", "ballot"},
                           {"proposal_id", id},
                           {"member", member},
                           {"ballot", ballot_name(ballot)},
                           {"signature", crypto::signature_hex(sig)}});
    p.ballots[member] = ballot;

    std::size_t yes = 0, no = 0;
    for (const auto& [mid, b] : p.ballots)
    {
        if (members_.at(mid).status != MemberStatus::Active)
            continue;
        (b == Ballot::Yes ? yes : no) += 1;
    }
    auto active = active_members();
    json tally = {{"yes", yes}, {"no", no}, {"active", active}};
    const auto& rule = constitution_.resolve;
    if (rule.accepts(yes, active))
    {
        // Effects may fail validation if state moved since submission; the proposal is then rejected.
        try
        {
            validate(p.action);
        }
        catch (const Error& e)
        {
            p.state = ProposalState::Rejected;
            out.records.push_back({{"type", "outcome"},
                                   {"proposal_id", id},
                                   {"state", "Rejected"},
                                   {"tally", tally},
                                   {"reason", e.what()}});
            out.state = p.state;
            return out;
        }
        p.state = ProposalState::Accepted;
        auto effect = apply_effects(p.action, out.warning);
        p.state = ProposalState::Applied;
        out.records.push_back(
            {{"type", "outcome"}, {"proposal_id", id}, {"state", "Applied"}, {"tally", tally}, {"effect", effect}});
    }
    else if (!rule.accepts(active - no, active))
    {
        p.state = ProposalState::Rejected;
        out.records.push_back({{"type", "outcome"}, {"proposal_id", id}, {"state", "Rejected"}, {"tally", tally}});
    }
    out.state = p.state;
    return out;
}

JoinDecision Governance::process_join_request(const JoinRequest& req)
{
    if (!initialized_)
        throw Error(ErrorCode::State, "governance not initialized");
    JoinDecision d;
    std::vector<enclave::Measurement> trusted(service_.trusted_measurements.begin(),
                                              service_.trusted_measurements.end());
    if (attestation_)
        d.reason = enclave::verify_quote(req.quote, trusted, service_.trusted_platforms);
    else
        d.reason = service_.trusted_measurements.contains(req.quote.measurement) ? enclave::QuoteVerdict::Accept
                                                                                 : enclave::QuoteVerdict::UntrustedCode;
    if (d.reason != enclave::QuoteVerdict::Accept)
        return d;
    NodeInfo n;
    n.identity = req.quote.node_identity;
    n.node_id = node_id_for(n.identity);
    n.measurement = req.quote.measurement;
    n.platform_id = req.quote.platform_id;
    n.node_address = req.node_address;
    n.rpc_address = req.rpc_address;
    for (const auto& [mid, m] : members_)
        if (m.public_key == n.identity || mid == n.node_id)
        {
            d.reason = enclave::QuoteVerdict::UntrustedCode;
            return d;
        }
    nodes_[n.node_id] = n;
    d.admitted = true;
    d.node = n;
    d.records.push_back({{"type", "node_join"},
                         {"node", node_info_to_json(n)},
                         {"quote", to_hex(as_view(enclave::encode_quote(req.quote)))}});
    return d;
}

Governance Governance::replay(std::span<const json> records, PolicyValidator validator)
{
    Governance g(std::move(validator));
    auto expect = [&](std::size_t& i, const std::vector<json>& produced) {
        for (const auto& r : produced)
        {
            if (i >= records.size() || records[i] != r)
                throw Error(ErrorCode::Validation,
                            "replay diverged at governance record " + std::to_string(i) + ": expected " + r.dump());
            ++i;
        }
    };
    std::size_t i = 0;
    while (i < records.size())
    {
        const auto& rec = records[i];
        auto type = rec.at("type").get<std::string>();
        if (type == "genesis")
        {
            expect(i, g.init(genesis_from_json(rec)));
        }
        else if (type == "proposal")
        {
            auto out = g.submit_proposal(rec.at("proposer").get<std::string>(), action_from_json(rec.at("action")),
                                         crypto::signature_from_hex(rec.at("signature").get<std::string>()));
            expect(i, out.records);
        }
        else if (type == "ballot")
        {
            auto out = g.vote(rec.at("member").get<std::string>(), rec.at("proposal_id").get<ProposalId>(),
                              ballot_from_name(rec.at("ballot").get<std::string>()),
                              crypto::signature_from_hex(rec.at("signature").get<std::string>()));
            expect(i, out.records);
        }
        else if (type == "node_join")
        {
            auto n = node_info_from_json(rec.at("node"));
            JoinRequest req{enclave::decode_quote(as_view(from_hex(rec.at("quote").get<std::string>()))),
                            n.node_address, n.rpc_address};
            auto d = g.process_join_request(req);
            if (!d.admitted)
                throw Error(ErrorCode::Validation, "replay: recorded join is not admissible");
            expect(i, d.records);
        }
        else
        {
            throw Error(ErrorCode::Validation, "replay: unexpected record type '" + type + "'");
        }
    }
    return g;
}

json Governance::snapshot() const
{
    json members = json::object();
    for (const auto& [id, m] : members_)
        members[id] = member_to_json(m);
    json proposals = json::object();
    for (const auto& [id, p] : proposals_)
    {
        json ballots = json::object();
        for (const auto& [mid, b] : p.ballots)
            ballots[mid] = ballot_name(b);
        proposals[std::to_string(id)] = {{"proposer", p.proposer},
                                         {"action", action_to_json(p.action)},
                                         {"ballots", ballots},
                                         {"state", state_name(p.state)}};
    }
    json measurements = json::array();
    for (const auto& m : service_.trusted_measurements)
        measurements.push_back(m.hex());
    json platforms = json::array();
    for (const auto& p : service_.trusted_platforms)
        platforms.push_back(platform_to_json(p));
    json nodes = json::object();
    for (const auto& [id, n] : nodes_)
        nodes[id] = node_info_to_json(n);
    return {{"initialized", initialized_},
            {"attestation", attestation_},
            {"constitution", constitution_to_json(constitution_)},
            {"constitution_history", constitution_history_},
            {"members", members},
            {"proposals", proposals},
            {"next_proposal", next_proposal_},
            {"phase", service_.phase == Phase::Open ? "Open" : "Opening"},
            {"service_identity", service_.service_identity.hex()},
            {"trusted_measurements", measurements},
            {"trusted_platforms", platforms},
            {"nodes", nodes},
            {"app_policy", app_policy_ ? *app_policy_ : json()},
            {"app_policy_version", app_policy_version_}};
}

} // namespace ccl::governance
