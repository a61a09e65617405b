#include "ccl/node/core.hpp"
#include "ccl/common/codec.hpp"
#include "ccl/common/signing.hpp"

#include <spdlog/spdlog.h>

namespace ccl::node {

namespace fs = std::filesystem;
using consensus::LogRecord;
using consensus::RecordKind;

namespace {

constexpr const char* kAppliedLog = "applied.log";
constexpr std::size_t kAppliedFrame = 16;
constexpr std::uint8_t kSealedCommand = 0x01;
constexpr const char* kCommandContext = "ccl-command-v1";

json parse_json(ByteView bytes)
{
    return json::parse(bytes.begin(), bytes.end());
}

Hash256 request_digest(const settlement::AppRequest& r)
{
    crypto::Sha256 h;
    h.update(as_view(request_signing_bytes(r.path, r.body)));
    h.update(as_view(to_bytes(r.signer)));
    return h.finish();
}

std::optional<crypto::PublicKey> member_key(const governance::Governance& g, const std::string& id)
{
    auto it = g.members().find(id);
    if (it == g.members().end() || it->second.status != governance::MemberStatus::Active)
        return std::nullopt;
    return it->second.public_key;
}

} // namespace

Secrets Secrets::generate()
{
    Secrets s;
    s.data_key = crypto::random_key();
    auto seed = crypto::random_bytes(32);
    std::copy(seed.begin(), seed.end(), s.service_seed.begin());
    return s;
}

Bytes encode_secrets(const Secrets& s)
{
    Writer w;
    w.raw({s.data_key.data(), s.data_key.size()}).raw({s.service_seed.data(), s.service_seed.size()});
    return std::move(w).take();
}

Secrets decode_secrets(ByteView b)
{
    Reader r(b);
    Secrets s;
    auto key = r.raw(32);
    auto seed = r.raw(32);
    r.expect_done();
    std::copy(key.begin(), key.end(), s.data_key.begin());
    std::copy(seed.begin(), seed.end(), s.service_seed.begin());
    return s;
}

Bytes encode_command(const json& command) { return to_bytes(command.dump()); }

NodeCore::NodeCore(CoreOptions options) : options_(std::move(options)), gov_(policy_validator())
{
    fs::create_directories(options_.data_dir);
    if (!options_.recover && fs::exists(options_.data_dir / "raft"))
        throw Error(ErrorCode::Config, "consensus state already exists in '" + options_.data_dir.string() +
                                           "'; refusing to overwrite");
    storage_ = std::make_unique<consensus::FileStorage>(options_.data_dir / "raft");
    raft_ = std::make_unique<consensus::RaftNode>(options_.raft, *storage_);
    service_identity_ = options_.secrets.service_key().public_key();

    ledger::LedgerOptions lopts;
    lopts.encrypt_private = options_.confidential;
    if (options_.recover)
        ledger_.emplace(ledger::Ledger::open(options_.ledger_path, lopts));
    else
        ledger_.emplace(ledger::Ledger::create(options_.ledger_path, lopts));
    ledger_->set_data_key(options_.secrets.data_key);
    ledger_->set_signer(options_.secrets.service_key());

    if (options_.recover)
        recover_state();
    applied_out_.open(options_.data_dir / kAppliedLog, std::ios::binary | std::ios::app);
    if (!applied_out_)
        throw Error(ErrorCode::Io, "cannot open applied log in '" + options_.data_dir.string() + "'");
}

governance::Governance::PolicyValidator NodeCore::policy_validator()
{
    return [this](const json& j) {
        auto p = settlement::parse_policy(j);
        if (settlement_)
            settlement::check_policy_extends(settlement_->policy(), p);
    };
}

void NodeCore::recover_state()
{
    std::uint64_t applied_index = 0;
    std::uint64_t ledger_entries = 0;
    auto applied_path = options_.data_dir / kAppliedLog;
    if (fs::exists(applied_path))
    {
        auto bytes = ledger::read_file(applied_path);
        auto complete = bytes.size() / kAppliedFrame;
        if (complete > 0)
        {
            Reader r(ByteView(bytes).subspan((complete - 1) * kAppliedFrame, kAppliedFrame));
            applied_index = r.u64();
            ledger_entries = r.u64();
        }
        if (bytes.size() != complete * kAppliedFrame)
            fs::resize_file(applied_path, complete * kAppliedFrame);
    }
    if (ledger_entries > ledger_->size())
        throw Error(ErrorCode::State, "ledger is shorter than the applied log records");
    ledger_->truncate(ledger_entries);
    const auto& log = raft_->log();
    if (applied_index > log.size())
        throw Error(ErrorCode::State, "applied log is ahead of the consensus log");
    for (std::uint64_t i = 1; i <= applied_index; ++i)
        apply_record(i, log[i - 1], true);
    raft_->restore_applied(applied_index);
    spdlog::info("node {} recovered: applied index {}, {} ledger entries", id(), applied_index, ledger_entries);
}

std::vector<consensus::Message> NodeCore::tick(std::uint64_t now) { return raft_->tick(now); }

std::vector<consensus::Message> NodeCore::handle(const consensus::Message& m) { return raft_->handle(m); }

std::uint64_t NodeCore::propose(const json& command)
{
    auto plain = encode_command(command);
    if (!options_.confidential)
        return raft_->propose(std::move(plain));
    Bytes wrapped{kSealedCommand};
    auto sealed = crypto::aead_encrypt_deterministic(options_.secrets.data_key, as_view(plain), as_view(to_bytes(kCommandContext)));
    wrapped.insert(wrapped.end(), sealed.begin(), sealed.end());
    return raft_->propose(std::move(wrapped));
}

Bytes NodeCore::open_command(ByteView record) const
{
    if (!record.empty() && record[0] == kSealedCommand)
        return crypto::aead_decrypt(options_.secrets.data_key, record.subspan(1), as_view(to_bytes(kCommandContext)));
    return Bytes(record.begin(), record.end());
}

std::pair<governance::JoinDecision, std::optional<std::uint64_t>>
NodeCore::propose_join(const governance::JoinRequest& req)
{
    if (raft_->role() != consensus::Role::Leader)
        throw consensus::NotLeader(raft_->leader_hint());
    auto scratch = gov_;
    auto decision = scratch.process_join_request(req);
    if (!decision.admitted)
        return {decision, std::nullopt};
    consensus::MembershipChange change;
    change.members = raft_->members();
    if (std::find(change.members.begin(), change.members.end(), decision.node->node_id) != change.members.end())
        throw Error(ErrorCode::Duplicate, "node " + decision.node->node_id + " is already a member");
    change.members.push_back(decision.node->node_id);
    json data = {{"type", "join"},
                 {"quote", to_hex(as_view(enclave::encode_quote(req.quote)))},
                 {"node_address", req.node_address},
                 {"rpc_address", req.rpc_address}};
    change.app_data = encode_command(data);
    auto index = raft_->propose_membership(change);
    return {decision, index};
}

void NodeCore::maybe_propose_sign()
{
    if (raft_->role() != consensus::Role::Leader || ledger_->unsigned_count() == 0)
        return;
    if (sign_pending_ && *sign_pending_ > raft_->last_applied())
        return;
    sign_pending_ = propose(json{{"type", "sign"}});
}

std::vector<ApplyResult> NodeCore::apply_committed()
{
    std::vector<ApplyResult> out;
    for (auto& c : raft_->take_committed())
        out.push_back(apply_record(c.index, c.record, false));
    return out;
}

void NodeCore::crash(CrashPoint p, bool replay) const
{
    if (!replay && options_.crash_hook)
        options_.crash_hook(p);
}

void NodeCore::append_applied(std::uint64_t index)
{
    Writer w;
    w.u64(index).u64(ledger_->size());
    applied_out_.write(reinterpret_cast<const char*>(w.buffer().data()), static_cast<std::streamsize>(w.buffer().size()));
    applied_out_.flush();
    if (!applied_out_)
        throw Error(ErrorCode::Io, "failed to write applied log");
}

ApplyResult NodeCore::apply_record(std::uint64_t index, const LogRecord& rec, bool replay)
{
    ApplyResult out;
    out.index = index;
    out.command.clear();
    crash(CrashPoint::BeforeExecute, replay);
    try
    {
        if (rec.kind == RecordKind::Command)
        {
            out.command = open_command(as_view(rec.command));
            apply_command(parse_json(as_view(out.command)), replay, out);
        }
        else if (rec.kind == RecordKind::Membership)
        {
            auto change = consensus::decode_membership(as_view(rec.command));
            out.command = change.app_data;
            if (!change.app_data.empty())
                apply_join(parse_json(as_view(change.app_data)), replay, out);
        }
    }
    catch (const Error& e)
    {
        out.ok = false;
        out.code = e.code();
        out.message = e.what();
    }
    catch (const json::exception& e)
    {
        out.ok = false;
        out.code = ErrorCode::Parse;
        out.message = e.what();
    }
    if (!replay)
    {
        crash(CrashPoint::AfterLedgerAppend, replay);
        append_applied(index);
        crash(CrashPoint::AfterApplyRecord, replay);
    }
    return out;
}

void NodeCore::write_governance(const std::vector<json>& records, bool replay, ApplyResult& out)
{
    crash(CrashPoint::AfterExecute, replay);
    if (replay)
        return;
    for (const auto& r : records)
    {
        auto res = ledger_->append(ledger::EntryKind::Governance, ledger::Privacy::Public, as_view(to_bytes(r.dump())));
        if (!out.seqno)
            out.seqno = res.seqno;
    }
}

void NodeCore::after_governance_outcome(const governance::Outcome& o)
{
    if (o.state != governance::ProposalState::Applied)
        return;
    const auto& p = gov_.proposal(o.proposal_id);
    if (p.action.kind != governance::ActionKind::RegisterAppPolicy)
        return;
    auto policy = settlement::parse_policy(p.action.args["policy"]);
    if (settlement_)
        settlement_->update_policy(std::move(policy));
    else
        settlement_.emplace(std::move(policy));
}

void NodeCore::apply_command(const json& cmd, bool replay, ApplyResult& out)
{
    auto type = cmd.at("type").get<std::string>();
    if (type == "genesis")
    {
        auto records = gov_.init(governance::genesis_from_json(cmd.at("genesis")));
        if (gov_.service().service_identity != service_identity_)
            throw Error(ErrorCode::State, "genesis service identity differs from this node's service key");
        write_governance(records, replay, out);
        out.result = {{"service_identity", service_identity_.hex()}};
    }
    else if (type == "gov_propose")
    {
        auto outcome = gov_.submit_proposal(cmd.at("signer").get<std::string>(),
                                            governance::action_from_json(cmd.at("action")),
                                            crypto::signature_from_hex(cmd.at("signature").get<std::string>()));
        write_governance(outcome.records, replay, out);
        out.result = {{"proposal_id", outcome.proposal_id}, {"state", governance::state_name(outcome.state)}};
    }
    else if (type == "gov_vote")
    {
        auto ballot_str = cmd.at("ballot").get<std::string>();
        if (ballot_str != "yes" && ballot_str != "no")
            throw Error(ErrorCode::Validation, "ballot must be 'yes' or 'no'");
        auto outcome = gov_.vote(cmd.at("signer").get<std::string>(), cmd.at("proposal_id").get<std::uint64_t>(),
                                 ballot_str == "yes" ? governance::Ballot::Yes : governance::Ballot::No,
                                 crypto::signature_from_hex(cmd.at("signature").get<std::string>()));
        after_governance_outcome(outcome);
        write_governance(outcome.records, replay, out);
        out.result = {{"proposal_id", outcome.proposal_id}, {"state", governance::state_name(outcome.state)}};
        if (outcome.warning)
            out.result["warning"] = *outcome.warning;
    }
    else if (type == "app")
    {
        if (!gov_.initialized() || gov_.service().phase != governance::Phase::Open)
            throw Error(ErrorCode::ServiceNotOpen, "service is not open");
        if (!settlement_)
            throw Error(ErrorCode::State, "no application policy registered");
        settlement::AppRequest req{cmd.at("path").get<std::string>(), cmd.at("signer").get<std::string>(),
                                   cmd.at("body"), crypto::signature_from_hex(cmd.at("signature").get<std::string>())};
        auto digest = request_digest(req);
        if (seen_requests_.contains(digest))
            throw Error(ErrorCode::Duplicate, "request already executed");
        auto outcome = settlement::execute(*settlement_, req, [&] { crash(CrashPoint::BetweenLegs, replay); });
        seen_requests_.insert(digest);
        crash(CrashPoint::AfterExecute, replay);
        out.result = outcome.result;
        if (!replay)
        {
            json entry = {{"type", "app"},
                          {"path", req.path},
                          {"signer", req.signer},
                          {"body", req.body},
                          {"signature", cmd.at("signature")},
                          {"result", outcome.result},
                          {"parties", outcome.parties}};
            auto privacy = outcome.private_payload ? ledger::Privacy::Private : ledger::Privacy::Public;
            out.seqno = ledger_->append(ledger::EntryKind::App, privacy, as_view(to_bytes(entry.dump()))).seqno;
        }
    }
    else if (type == "sign")
    {
        if (!replay)
            if (auto seqno = ledger_->sign())
                out.seqno = *seqno;
    }
    else
    {
        throw Error(ErrorCode::Parse, "unknown command type '" + type + "'");
    }
}

void NodeCore::apply_join(const json& data, bool replay, ApplyResult& out)
{
    if (data.at("type") != "join")
        throw Error(ErrorCode::Parse, "membership record without a join");
    governance::JoinRequest req{enclave::decode_quote(as_view(from_hex(data.at("quote").get<std::string>()))),
                                data.at("node_address").get<std::string>(), data.at("rpc_address").get<std::string>()};
    auto decision = gov_.process_join_request(req);
    if (!decision.admitted)
    {
        // The membership record is already in effect; record the anomaly without a ledger entry.
        spdlog::warn("committed join for {} no longer admissible: {}", governance::node_id_for(req.quote.node_identity),
                     enclave::verdict_name(decision.reason));
        throw Error(ErrorCode::Authorization,
                    "join denied: " + std::string(enclave::verdict_name(decision.reason)));
    }
    write_governance(decision.records, replay, out);
    out.result = {{"node", governance::node_info_to_json(*decision.node)}};
}

json NodeCore::query_app(const settlement::AppRequest& r) const
{
    if (!settlement_)
        throw Error(ErrorCode::State, "no application policy registered");
    if (gov_.nodes().contains(r.signer))
        throw Error(ErrorCode::Authorization, "operators have no application read privileges");
    return settlement::query(*settlement_, r);
}

json NodeCore::read_tx(const std::string& signer, const json& body, const crypto::Signature& sig) const
{
    auto msg = request_signing_bytes("/app/tx", body);
    if (auto it = gov_.nodes().find(signer); it != gov_.nodes().end())
    {
        // Operators authenticate but never read transactions.
        throw Error(ErrorCode::Authorization, "operator identities have no read privileges");
    }
    std::optional<crypto::PublicKey> key;
    bool central_bank = false;
    if (settlement_)
        if (auto* p = settlement_->policy().find(signer))
        {
            key = p->public_key;
            central_bank = p->role == settlement::Role::CentralBank;
        }
    bool member = false;
    if (!key)
    {
        key = member_key(gov_, signer);
        member = key.has_value();
    }
    if (!key)
        throw Error(ErrorCode::Authorization, "unknown signer '" + signer + "'");
    if (!crypto::verify(*key, as_view(msg), sig))
        throw Error(ErrorCode::Authentication, "request signature does not verify for '" + signer + "'");
    if (!body.contains("seqno") || !body["seqno"].is_number_unsigned())
        throw Error(ErrorCode::Validation, "field 'seqno' must be a non-negative integer");
    auto seqno = body["seqno"].get<std::uint64_t>();
    if (seqno >= ledger_->size())
        throw Error(ErrorCode::NotFound, "no entry with seqno " + std::to_string(seqno));
    const auto& e = ledger_->entry(seqno);
    json out = {{"seqno", seqno}, {"kind", ledger::kind_name(e.kind)},
                {"privacy", e.privacy == ledger::Privacy::Private ? "private" : "public"}};
    if (e.kind == ledger::EntryKind::Signature)
    {
        out["payload_hex"] = to_hex(as_view(e.payload));
        return out;
    }
    auto payload = parse_json(as_view(ledger_->plaintext(seqno)));
    if (e.kind == ledger::EntryKind::App)
    {
        bool party = false;
        for (const auto& p : payload.value("parties", json::array()))
            party = party || p == signer;
        bool allowed = e.privacy == ledger::Privacy::Public ? (party || central_bank || member) : (party || central_bank);
        if (!allowed)
            throw Error(ErrorCode::Authorization, "'" + signer + "' is not a party to entry " + std::to_string(seqno));
    }
    out["payload"] = payload;
    return out;
}

json NodeCore::service_json() const
{
    const auto& s = gov_.service();
    json measurements = json::array();
    for (const auto& m : s.trusted_measurements)
        measurements.push_back(m.hex());
    json members = json::array();
    for (const auto& [id, m] : gov_.members())
        members.push_back({{"id", id}, {"status", m.status == governance::MemberStatus::Active ? "Active" : "Retired"}});
    return {{"phase", s.phase == governance::Phase::Open ? "Open" : "Opening"},
            {"service_identity", service_identity_.hex()},
            {"trusted_measurements", measurements},
            {"constitution_version", gov_.constitution().version},
            {"members", members},
            {"app_policy_version", gov_.app_policy_version()}};
}

json NodeCore::status() const
{
    json nodes = json::object();
    for (const auto& [nid, n] : gov_.nodes())
        nodes[nid] = {{"node_address", n.node_address}, {"rpc_address", n.rpc_address}};
    json out = {{"node_id", id()},
                {"role", consensus::role_name(raft_->role())},
                {"term", raft_->current_term()},
                {"commit_index", raft_->commit_index()},
                {"last_applied", raft_->last_applied()},
                {"consensus_members", raft_->members()},
                {"nodes", nodes},
                {"ledger_entries", ledger_->size()},
                {"ledger_signed", ledger_->signed_size()},
                {"ledger_bytes", ledger_->file_bytes()},
                {"confidential_mode", options_.confidential},
                {"service_identity", service_identity_.hex()},
                {"initialized", gov_.initialized()}};
    if (raft_->role() == consensus::Role::Leader)
        out["leader"] = id();
    else if (raft_->leader_hint())
        out["leader"] = *raft_->leader_hint();
    if (out.contains("leader"))
        if (auto it = gov_.nodes().find(out["leader"].get<std::string>()); it != gov_.nodes().end())
            out["leader_rpc"] = it->second.rpc_address;
    if (gov_.initialized())
        out["phase"] = gov_.service().phase == governance::Phase::Open ? "Open" : "Opening";
    return out;
}

} // namespace ccl::node
