#include "ccl/node/node.hpp"
#include "ccl/node/client.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <fstream>
#include <regex>

namespace ccl::node {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

constexpr const char* kIdentityFile = "identity.sealed";
constexpr const char* kSecretsFile = "secrets.sealed";
constexpr const char* kNodeFile = "node.json";
constexpr const char* kServiceKeyFile = "service_identity.pub";
constexpr std::uint64_t kSignEveryTicks = 10;

json read_json_file(const fs::path& p, const std::string& what)
{
    std::ifstream in(p);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read " + what + " '" + p.string() + "'");
    try
    {
        return json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw Error(ErrorCode::Parse, what + " '" + p.string() + "': " + e.what());
    }
}

void write_file(const fs::path& p, ByteView data)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out)
        throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
}

void write_sealed(const fs::path& p, ByteView data, const enclave::Measurement& m, const enclave::Platform& platform)
{
    write_file(p, as_view(enclave::encode_sealed(enclave::seal(data, m, platform))));
}

Bytes read_sealed(const fs::path& p, const enclave::Measurement& m, const enclave::Platform& platform)
{
    return enclave::unseal(enclave::decode_sealed(as_view(ledger::read_file(p))), m, platform);
}

Response ok_response(const ApplyResult& r)
{
    if (!r.ok)
        return error_response(Error(r.code, r.message));
    json body = {{"result", r.result}, {"index", r.index}};
    if (r.seqno)
        body["seqno"] = *r.seqno;
    return {200, body};
}

Response redirect(const NodeCore& core)
{
    auto s = core.status();
    json err = {{"code", "NotLeader"}, {"message", "not the leader"}};
    if (s.contains("leader") && s["leader"] != core.id())
        err["leader"] = s["leader"];
    if (s.contains("leader_rpc") && s.contains("leader") && s["leader"] != core.id())
        err["leader_rpc"] = s["leader_rpc"];
    return {http_status(ErrorCode::NotLeader), {{"error", err}}};
}

json proposal_json(const governance::Proposal& p)
{
    json ballots = json::object();
    for (const auto& [m, b] : p.ballots)
        ballots[m] = b == governance::Ballot::Yes ? "yes" : "no";
    return {{"id", p.id},
            {"proposer", p.proposer},
            {"action", governance::action_to_json(p.action)},
            {"ballots", ballots},
            {"state", governance::state_name(p.state)}};
}

struct Envelope
{
    std::string signer;
    json body;
    std::string signature;
};

Envelope parse_envelope(const json& j)
{
    if (!j.is_object())
        throw Error(ErrorCode::Parse, "request must be a JSON object {signer, body, signature}");
    if (!j.contains("signer") || !j["signer"].is_string())
        throw Error(ErrorCode::Parse, "request.signer must be a string");
    if (!j.contains("body") || !j["body"].is_object())
        throw Error(ErrorCode::Parse, "request.body must be an object");
    if (!j.contains("signature") || !j["signature"].is_string())
        throw Error(ErrorCode::Parse, "request.signature must be a hex string");
    return {j["signer"].get<std::string>(), j["body"], j["signature"].get<std::string>()};
}

crypto::Signature parse_signature(const std::string& hex)
{
    try
    {
        return crypto::signature_from_hex(hex);
    }
    catch (const Error& e)
    {
        throw Error(ErrorCode::Parse, std::string("request.signature: ") + e.what());
    }
}

std::optional<std::uint64_t> parse_u64(const std::string& s)
{
    if (s.empty() || s.size() > 19 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return std::nullopt;
    return std::stoull(s);
}

} // namespace

int http_status(ErrorCode code)
{
    switch (code)
    {
    case ErrorCode::Parse:
    case ErrorCode::Validation:
    case ErrorCode::Decode:
    case ErrorCode::Config:
        return 400;
    case ErrorCode::Authentication:
        return 401;
    case ErrorCode::Authorization:
        return 403;
    case ErrorCode::NotFound:
        return 404;
    case ErrorCode::NotLeader:
        return 307;
    case ErrorCode::State:
    case ErrorCode::Duplicate:
    case ErrorCode::ServiceNotOpen:
    case ErrorCode::InsufficientFunds:
    case ErrorCode::InsufficientAsset:
    case ErrorCode::Backing:
        return 409;
    case ErrorCode::NotYetSigned:
        return 202;
    case ErrorCode::Timeout:
    case ErrorCode::Unavailable:
        return 503;
    case ErrorCode::Io:
        return 500;
    }
    return 500;
}

Response error_response(const Error& e)
{
    return {http_status(e.code()), {{"error", {{"code", error_code_name(e.code())}, {"message", e.what()}}}}};
}

enclave::Platform platform_for(const std::string& platform_id)
{
    return enclave::Platform::from_label(platform_id, platform_id);
}

enclave::Measurement measurement_for_blob(const fs::path& code_blob_path)
{
    if (!fs::exists(code_blob_path))
        throw Error(ErrorCode::Config, "code blob '" + code_blob_path.string() + "' does not exist");
    auto blob = ledger::read_file(code_blob_path);
    return enclave::measure(as_view(enclave::node_code_blob(to_string(as_view(blob)), kBuildId)));
}

// ---- registry ----

namespace {
std::mutex registry_mu;
std::map<std::string, Node*>& registry()
{
    static std::map<std::string, Node*> r;
    return r;
}
} // namespace

void LocalRegistry::add(const std::string& rpc, Node* node)
{
    std::lock_guard lock(registry_mu);
    registry()[rpc] = node;
}

void LocalRegistry::remove(const std::string& rpc, Node* node)
{
    std::lock_guard lock(registry_mu);
    if (auto it = registry().find(rpc); it != registry().end() && it->second == node)
        registry().erase(it);
}

Node* LocalRegistry::find(const std::string& rpc)
{
    std::lock_guard lock(registry_mu);
    auto it = registry().find(rpc);
    return it == registry().end() ? nullptr : it->second;
}

// ---- lifecycle ----

Node::Node(NodeConfig config, NodeOptions options, crypto::KeyPair identity, Secrets secrets)
    : config_(std::move(config)), options_(std::move(options)), identity_(std::move(identity)),
      secrets_(secrets), id_(governance::node_id_for(identity_.public_key())),
      platform_(platform_for(config_.enclave.platform_id)),
      measurement_(measurement_for_blob(config_.enclave.code_blob_path))
{
}

Node::~Node() { stop(); }

std::unique_ptr<Node> Node::launch(const NodeConfig& config, NodeOptions options)
{
    crypto::init();
    if (config.transport == TransportKind::Loopback && !options.hub)
        throw Error(ErrorCode::Config, "loopback transport needs a hub");
    auto data_dir = config.resolved_data_dir();
    auto platform = platform_for(config.enclave.platform_id);
    auto measurement = measurement_for_blob(config.enclave.code_blob_path);

    CoreOptions core;
    core.ledger_path = config.ledger_path();
    core.data_dir = data_dir;
    core.crash_hook = options.crash_hook;
    core.raft.election_timeout_min = 30;
    core.raft.election_timeout_max = 60;
    core.raft.heartbeat_interval = 5;

    if (options.recover)
    {
        if (!fs::exists(data_dir / kNodeFile))
            throw Error(ErrorCode::Config, "no node state in '" + data_dir.string() + "' to recover");
        auto meta = read_json_file(data_dir / kNodeFile, "node state");
        auto identity = crypto::KeyPair::from_seed(as_view(read_sealed(data_dir / kIdentityFile, measurement, platform)));
        auto secrets = decode_secrets(as_view(read_sealed(data_dir / kSecretsFile, measurement, platform)));
        std::unique_ptr<Node> node(new Node(config, options, identity, secrets));
        core.recover = true;
        core.confidential = meta.at("confidential_mode").get<bool>();
        core.secrets = secrets;
        core.raft.id = node->id_;
        core.raft.seed = options.seed ^ std::hash<std::string>{}(node->id_);
        if (meta.at("command") == "start")
            core.raft.bootstrap_members = {node->id_};
        node->boot(std::move(core), {});
        return node;
    }

    if (fs::exists(config.ledger_path()))
        throw Error(ErrorCode::Config, "ledger '" + config.ledger_path() + "' already exists; refusing to overwrite");
    fs::create_directories(data_dir);
    auto identity = crypto::KeyPair::generate();
    auto node_id = governance::node_id_for(identity.public_key());

    if (config.command == Command::Start)
    {
        auto secrets = Secrets::generate();
        std::unique_ptr<Node> node(new Node(config, options, identity, secrets));
        write_sealed(data_dir / kIdentityFile, as_view(identity.seed()), measurement, platform);
        write_sealed(data_dir / kSecretsFile, as_view(encode_secrets(secrets)), measurement, platform);
        auto service_key = secrets.service_key().public_key().hex();
        write_file(data_dir / kServiceKeyFile, as_view(to_bytes(service_key + "\n")));
        write_file(data_dir / kNodeFile,
                   as_view(to_bytes(json{{"node_id", node_id}, {"command", "start"}, {"confidential_mode", config.confidential_mode}}.dump())));

        governance::Genesis g;
        g.constitution = governance::constitution_from_file_json(read_json_file(config.start->constitution_path, "constitution"));
        for (const auto& m : config.start->initial_members)
        {
            try
            {
                g.members.push_back({m.id, crypto::PublicKey::from_hex(m.public_key), governance::MemberStatus::Active});
            }
            catch (const Error& e)
            {
                throw Error(ErrorCode::Config, "config.start.initial_members: member '" + m.id + "': " + e.what());
            }
        }
        g.service_identity = secrets.service_key().public_key();
        g.trusted_measurements = {measurement};
        auto platform_ids = config.enclave.trusted_platform_ids;
        if (platform_ids.empty())
            platform_ids = {config.enclave.platform_id};
        for (const auto& pid : platform_ids)
            g.trusted_platforms.push_back({pid, platform_for(pid).public_key()});
        g.first_node = {node_id, identity.public_key(), measurement, platform.id(), config.node_address(), config.rpc_address()};
        g.attestation = config.confidential_mode;

        core.confidential = config.confidential_mode;
        core.secrets = secrets;
        core.raft.id = node_id;
        core.raft.bootstrap_members = {node_id};
        core.raft.seed = options.seed ^ std::hash<std::string>{}(node_id);
        node->boot(std::move(core), {});
        if (!node->wait_for([](const json& s) { return s.value("role", "") == "Leader"; }, 10s))
            throw Error(ErrorCode::Timeout, "node did not become leader of its 1-node cluster");
        auto r = node->submit({{"type", "genesis"}, {"genesis", governance::genesis_to_json(g)}}, true);
        if (r.status != 200)
            throw Error(ErrorCode::State, "genesis failed: " + r.body.dump());
        spdlog::info("node {} started service {} (phase Opening)", node_id, service_key);
        return node;
    }

    // Join
    auto q = enclave::quote(measurement, identity.public_key(), platform);
    json req = {{"quote", to_hex(as_view(enclave::encode_quote(q)))},
                {"node_address", config.node_address()},
                {"rpc_address", config.rpc_address()}};
    Client client(config.join->target_rpc_address, config.transport);
    Response resp;
    auto delay = 100ms;
    for (int attempt = 0;; ++attempt)
    {
        try
        {
            resp = client.post("/node/join", req);
            if (resp.status != 503 && resp.status != 307)
                break;
        }
        catch (const Error& e)
        {
            if (e.code() != ErrorCode::Unavailable && e.code() != ErrorCode::Timeout)
                throw;
            resp = error_response(e);
        }
        if (attempt >= 7)
            throw Error(ErrorCode::Unavailable, "join target " + config.join->target_rpc_address +
                                                    " unreachable after retries: " + resp.body.dump());
        std::this_thread::sleep_for(delay);
        delay = std::min<std::chrono::milliseconds>(delay * 2, 2000ms);
    }
    if (resp.status == 403)
        throw Error(ErrorCode::Authorization,
                    "join denied: " + resp.body.value("reason", resp.body.contains("error") ? resp.body["error"].value("message", "") : ""));
    if (resp.status != 200)
        throw Error(ErrorCode::State, "join failed (" + std::to_string(resp.status) + "): " + resp.body.dump());

    Secrets secrets;
    try
    {
        secrets = decode_secrets(as_view(identity.box_open(as_view(from_hex(resp.body.at("secrets").get<std::string>())))));
    }
    catch (const std::exception& e)
    {
        throw Error(ErrorCode::Authentication, std::string("cannot open service secrets from join response: ") + e.what());
    }
    bool confidential = resp.body.at("confidential_mode").get<bool>();
    std::unique_ptr<Node> node(new Node(config, options, identity, secrets));
    write_sealed(data_dir / kIdentityFile, as_view(identity.seed()), measurement, platform);
    write_sealed(data_dir / kSecretsFile, as_view(encode_secrets(secrets)), measurement, platform);
    write_file(data_dir / kServiceKeyFile, as_view(to_bytes(secrets.service_key().public_key().hex() + "\n")));
    write_file(data_dir / kNodeFile,
               as_view(to_bytes(json{{"node_id", node_id}, {"command", "join"}, {"confidential_mode", confidential}}.dump())));

    std::vector<std::pair<std::string, std::string>> peers;
    for (const auto& [nid, n] : resp.body.at("nodes").items())
        peers.emplace_back(nid, n.at("node_address").get<std::string>());
    core.confidential = confidential;
    core.secrets = secrets;
    core.raft.id = node_id;
    core.raft.seed = options.seed ^ std::hash<std::string>{}(node_id);
    node->boot(std::move(core), peers);
    spdlog::info("node {} admitted; catching up", node_id);
    return node;
}

void Node::boot(CoreOptions core, const std::vector<std::pair<std::string, std::string>>& peers)
{
    core_ = std::make_unique<NodeCore>(std::move(core));
    if (config_.transport == TransportKind::Loopback)
        transport_ = std::make_unique<LoopbackTransport>(*options_.hub, id_);
    else
        transport_ = std::make_unique<TcpTransport>(id_, config_.node_address());
    {
        std::lock_guard lock(mu_);
        running_ = true;
        epoch_ = std::chrono::steady_clock::now();
    }
    transport_->start([this](consensus::Message m) {
        post([this, m = std::move(m)] { send_all(core_->handle(m)); });
    });
    for (const auto& [nid, addr] : peers)
        transport_->set_peer(nid, addr);
    sync_peers();
    core_thread_ = std::thread([this] { run(); });
    LocalRegistry::add(config_.rpc_address(), this);
    if (options_.serve_http && config_.transport == TransportKind::Tcp)
        start_http();
}

void Node::stop()
{
    LocalRegistry::remove(config_.rpc_address(), this);
    if (http_)
    {
        http_->stop();
        if (http_thread_.joinable())
            http_thread_.join();
        http_.reset();
    }
    if (transport_)
        transport_->stop();
    {
        std::lock_guard lock(mu_);
        running_ = false;
        mailbox_.clear();
    }
    cv_.notify_all();
    if (core_thread_.joinable())
        core_thread_.join();
    pending_.clear();
}

void Node::post(std::function<void()> fn)
{
    {
        std::lock_guard lock(mu_);
        if (!running_)
            return;
        mailbox_.push_back(std::move(fn));
    }
    cv_.notify_one();
}

void Node::run()
{
    const std::chrono::milliseconds tick_len(std::max<std::uint32_t>(config_.tick_ms, 1));
    std::uint64_t last_tick = 0;
    std::unique_lock lock(mu_);
    while (running_)
    {
        cv_.wait_until(lock, epoch_ + tick_len * (last_tick + 1), [&] { return !mailbox_.empty() || !running_; });
        if (!running_)
            break;
        auto batch = std::move(mailbox_);
        mailbox_.clear();
        lock.unlock();
        try
        {
            for (auto& fn : batch)
                fn();
            auto now = static_cast<std::uint64_t>((std::chrono::steady_clock::now() - epoch_) / tick_len);
            if (now > last_tick)
            {
                last_tick = now;
                send_all(core_->tick(now));
                if (now - last_sign_tick_ >= kSignEveryTicks)
                {
                    last_sign_tick_ = now;
                    core_->maybe_propose_sign();
                }
            }
            if (core_->raft().role() == consensus::Role::Leader)
                send_all(core_->replicate());
            on_applied(core_->apply_committed());
        }
        catch (const std::exception& e)
        {
            // Treated as a process crash: the node stops and must be recovered.
            spdlog::error("node {} halted: {}", id_, e.what());
            lock.lock();
            running_ = false;
            mailbox_.clear();
            pending_.clear();
            break;
        }
        lock.lock();
    }
}

void Node::send_all(const std::vector<consensus::Message>& msgs)
{
    for (const auto& m : msgs)
        transport_->send(m);
}

void Node::on_applied(std::vector<ApplyResult> results)
{
    bool membership = false;
    for (auto& r : results)
    {
        if (r.result.is_object() && r.result.contains("node"))
            membership = true;
        auto it = pending_.find(r.index);
        if (it == pending_.end())
            continue;
        if (it->second.command == r.command)
            it->second.promise.set_value(std::move(r));
        else
        {
            ApplyResult lost;
            lost.index = r.index;
            lost.ok = false;
            lost.code = ErrorCode::Unavailable;
            lost.message = "request was superseded by a leader change; retry";
            it->second.promise.set_value(std::move(lost));
        }
        pending_.erase(it);
    }
    // Entries overwritten by a new leader never reach apply; fail them once passed.
    auto applied = core_->raft().last_applied();
    for (auto it = pending_.begin(); it != pending_.end() && it->first <= applied;)
    {
        ApplyResult lost;
        lost.index = it->first;
        lost.ok = false;
        lost.code = ErrorCode::Unavailable;
        lost.message = "request was superseded by a leader change; retry";
        it->second.promise.set_value(std::move(lost));
        it = pending_.erase(it);
    }
    if (membership)
        sync_peers();
}

void Node::sync_peers()
{
    for (const auto& [nid, n] : core_->governance().nodes())
        if (nid != id_)
            transport_->set_peer(nid, n.node_address);
}

Response Node::submit(const json& command, bool wait)
{
    using Prepared = std::pair<std::optional<Response>, std::future<ApplyResult>>;
    Prepared prepared;
    try
    {
        prepared = on_core([&](NodeCore& c) -> Prepared {
            try
            {
                auto index = c.propose(command);
                Pending p{encode_command(command), {}};
                auto fut = p.promise.get_future();
                pending_.emplace(index, std::move(p));
                if (!wait)
                    return Prepared(Response{202, {{"index", index}}}, std::move(fut));
                return Prepared(std::nullopt, std::move(fut));
            }
            catch (const consensus::NotLeader&)
            {
                return Prepared(redirect(c), std::future<ApplyResult>());
            }
        });
    }
    catch (const std::future_error&)
    {
        return error_response(Error(ErrorCode::Unavailable, "node is stopping"));
    }
    if (prepared.first)
        return *prepared.first;
    if (prepared.second.wait_for(options_.request_timeout) != std::future_status::ready)
        return error_response(Error(ErrorCode::Timeout, "request not committed within the timeout"));
    try
    {
        return ok_response(prepared.second.get());
    }
    catch (const std::future_error&)
    {
        return error_response(Error(ErrorCode::Unavailable, "node stopped before the request committed"));
    }
}

Response Node::handle_join(const json& body)
{
    if (!body.is_object() || !body.contains("quote") || !body["quote"].is_string())
        throw Error(ErrorCode::Parse, "join.quote must be a hex string");
    for (const char* f : {"node_address", "rpc_address"})
        if (!body.contains(f) || !body[f].is_string() || !valid_address(body[f].get<std::string>()))
            throw Error(ErrorCode::Parse, std::string("join.") + f + " must be host:port");
    governance::JoinRequest req{enclave::decode_quote(as_view(from_hex(body["quote"].get<std::string>()))),
                                body["node_address"].get<std::string>(), body["rpc_address"].get<std::string>()};
    return on_core([&](NodeCore& c) -> Response {
        try
        {
            auto [decision, index] = c.propose_join(req);
            if (!decision.admitted)
            {
                auto reason = std::string(enclave::verdict_name(decision.reason));
                spdlog::warn("join denied for {}: {}", governance::node_id_for(req.quote.node_identity), reason);
                return Response{403, {{"admitted", false},
                                       {"reason", reason},
                                       {"error", {{"code", error_code_name(ErrorCode::Authorization)}, {"message", "join denied: " + reason}}}}};
            }
            transport_->set_peer(decision.node->node_id, req.node_address);
            // The joiner must be running to acknowledge its own membership record,
            // so admission is answered once the record is proposed.
            json nodes = json::object();
            for (const auto& [nid, n] : c.governance().nodes())
                nodes[nid] = {{"node_address", n.node_address}, {"rpc_address", n.rpc_address}};
            nodes[decision.node->node_id] = {{"node_address", req.node_address}, {"rpc_address", req.rpc_address}};
            auto sealed = crypto::box_seal(req.quote.node_identity, as_view(encode_secrets(secrets_)));
            spdlog::info("admitting node {} at log index {}", decision.node->node_id, *index);
            return Response{200,
                            {{"admitted", true},
                             {"node_id", decision.node->node_id},
                             {"index", *index},
                             {"secrets", to_hex(as_view(sealed))},
                             {"confidential_mode", c.confidential()},
                             {"service_identity", c.service_identity().hex()},
                             {"nodes", nodes}}};
        }
        catch (const consensus::NotLeader&)
        {
            return redirect(c);
        }
        catch (const Error& e)
        {
            if (e.code() != ErrorCode::State)
                throw;
            // Another membership change is uncommitted; the joiner retries.
            return error_response(Error(ErrorCode::Unavailable, e.what()));
        }
    });
}

json Node::status()
{
    return on_core([](NodeCore& c) { return c.status(); });
}

bool Node::running()
{
    std::lock_guard lock(mu_);
    return running_;
}

bool Node::wait_for(const std::function<bool(const json&)>& pred, std::chrono::milliseconds timeout)
{
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true)
    {
        try
        {
            if (pred(status()))
                return true;
        }
        catch (const std::future_error&)
        {
            return false;
        }
        if (std::chrono::steady_clock::now() >= deadline)
            return false;
        std::this_thread::sleep_for(10ms);
    }
}

Response Node::call(const std::string& method, const std::string& path, const json& body)
{
    try
    {
        {
            std::lock_guard lock(mu_);
            if (!running_)
                return error_response(Error(ErrorCode::Unavailable, "node is not running"));
        }
        return dispatch(method, path, body);
    }
    catch (const Error& e)
    {
        return error_response(e);
    }
    catch (const json::exception& e)
    {
        return error_response(Error(ErrorCode::Parse, e.what()));
    }
    catch (const std::future_error&)
    {
        return error_response(Error(ErrorCode::Unavailable, "node is stopping"));
    }
    catch (const std::exception& e)
    {
        return {500, {{"error", {{"code", "Internal"}, {"message", e.what()}}}}};
    }
}

Response Node::dispatch(const std::string& method, const std::string& path, const json& body)
{
    static const std::regex proposal_re(R"(^/gov/proposals/([0-9]+)$)");
    static const std::regex ballot_re(R"(^/gov/proposals/([0-9]+)/ballots$)");
    static const std::regex receipt_re(R"(^/node/receipt/([0-9]+)$)");
    std::smatch m;

    if (method == "GET")
    {
        if (path == "/node/status")
            return {200, status()};
        if (path == "/gov/service")
            return {200, on_core([](NodeCore& c) { return c.service_json(); })};
        if (std::regex_match(path, m, proposal_re))
        {
            auto id = parse_u64(m[1].str());
            if (!id)
                throw Error(ErrorCode::Parse, "proposal id out of range");
            return on_core([&](NodeCore& c) -> Response { return {200, proposal_json(c.governance().proposal(*id))}; });
        }
        if (std::regex_match(path, m, receipt_re))
        {
            auto seqno = parse_u64(m[1].str());
            if (!seqno)
                throw Error(ErrorCode::Parse, "seqno out of range");
            return on_core([&](NodeCore& c) -> Response {
                if (*seqno >= c.ledger().size())
                    throw Error(ErrorCode::NotFound, "no entry with seqno " + std::to_string(*seqno));
                auto receipt = c.ledger().get_receipt(*seqno);
                return {200,
                        {{"seqno", *seqno},
                         {"receipt", to_hex(as_view(ledger::encode_receipt(receipt)))},
                         {"service_identity", c.service_identity().hex()}}};
            });
        }
        throw Error(ErrorCode::NotFound, "no route GET " + path);
    }
    if (method != "POST")
        throw Error(ErrorCode::NotFound, "unsupported method " + method);

    if (path == "/node/join")
        return handle_join(body);
    if (path == "/gov/proposals")
    {
        auto env = parse_envelope(body);
        if (!env.body.contains("action"))
            throw Error(ErrorCode::Parse, "request.body.action is required");
        parse_signature(env.signature);
        governance::action_from_json(env.body["action"]);
        return submit({{"type", "gov_propose"},
                       {"signer", env.signer},
                       {"action", env.body["action"]},
                       {"signature", env.signature}},
                      true);
    }
    if (std::regex_match(path, m, ballot_re))
    {
        auto id = parse_u64(m[1].str());
        if (!id)
            throw Error(ErrorCode::Parse, "proposal id out of range");
        auto env = parse_envelope(body);
        if (!env.body.contains("ballot") || !env.body["ballot"].is_string())
            throw Error(ErrorCode::Parse, "request.body.ballot must be 'yes' or 'no'");
        parse_signature(env.signature);
        return submit({{"type", "gov_vote"},
                       {"signer", env.signer},
                       {"proposal_id", *id},
                       {"ballot", env.body["ballot"]},
                       {"signature", env.signature}},
                      true);
    }
    if (path == "/app/tx")
    {
        auto env = parse_envelope(body);
        auto sig = parse_signature(env.signature);
        return {200, on_core([&](NodeCore& c) { return c.read_tx(env.signer, env.body, sig); })};
    }
    if (settlement::is_read_path(path))
    {
        auto env = parse_envelope(body);
        settlement::AppRequest r{path, env.signer, env.body, parse_signature(env.signature)};
        return {200, on_core([&](NodeCore& c) {
                    if (!c.settlement())
                        throw Error(ErrorCode::ServiceNotOpen, "no application policy registered");
                    return c.query_app(r);
                })};
    }
    if (settlement::is_write_path(path))
    {
        auto env = parse_envelope(body);
        parse_signature(env.signature);
        return submit({{"type", "app"}, {"path", path}, {"signer", env.signer}, {"body", env.body}, {"signature", env.signature}},
                      true);
    }
    throw Error(ErrorCode::NotFound, "no route POST " + path);
}

void Node::start_http()
{
    http_ = std::make_unique<httplib::Server>();
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        Response r;
        json body;
        bool parsed = true;
        if (!req.body.empty())
        {
            try
            {
                body = json::parse(req.body);
            }
            catch (const json::exception& e)
            {
                r = error_response(Error(ErrorCode::Parse, std::string("request body is not JSON: ") + e.what()));
                parsed = false;
            }
        }
        if (parsed)
            r = call(req.method, req.path, body);
        if (r.status == 307 && r.body.contains("error") && r.body["error"].contains("leader_rpc"))
            res.set_header("Location", "http://" + r.body["error"]["leader_rpc"].get<std::string>() + req.path);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    http_->Get(".*", handler);
    http_->Post(".*", handler);
    auto [host, port] = split_address(config_.rpc_address());
    if (!http_->bind_to_port(host, port))
        throw Error(ErrorCode::Io, "cannot listen on rpc address " + config_.rpc_address());
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
}

} // namespace ccl::node
