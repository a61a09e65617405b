#include "ccl/bench/cluster.hpp"

#include <atomic>
#include <fstream>
#include <thread>

namespace ccl::bench {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

std::atomic<std::uint64_t> cluster_counter{0};

void write_text(const fs::path& p, const std::string& s)
{
    std::ofstream out(p, std::ios::trunc);
    out << s;
    if (!out)
        throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
}

} // namespace

Cluster::Cluster(ClusterOptions options) : options_(std::move(options))
{
    crypto::init();
    if (options_.nodes == 0)
        throw Error(ErrorCode::Config, "cluster needs at least one node");
    tag_ = "c" + std::to_string(cluster_counter.fetch_add(1));
    fs::create_directories(options_.dir);

    json parties = json::array();
    auto add_party = [&](const std::string& id, const char* role, const std::string& intermediary) {
        keys_.emplace(id, crypto::KeyPair::from_label("party:" + id));
        json p = {{"id", id}, {"role", role}, {"public_key", keys_.at(id).public_key().hex()}};
        if (!intermediary.empty())
            p["intermediary"] = intermediary;
        parties.push_back(p);
    };
    add_party("cb", "CentralBank", "");
    for (int b = 0; b < options_.banks; ++b)
    {
        auto bank = "bank" + std::to_string(b);
        add_party(bank, "Intermediary", "");
        for (int c = 0; c < options_.clients_per_bank; ++c)
            add_party(bank + "-client" + std::to_string(c), "Client", bank);
    }
    policy_ = settlement::parse_policy(
        {{"model", options_.model == settlement::Model::Account ? "account" : "utxo"}, {"parties", parties}});
    for (int m = 0; m < options_.members; ++m)
    {
        auto id = "member" + std::to_string(m);
        keys_.emplace(id, crypto::KeyPair::from_label("member:" + id));
    }

    code_blob_ = options_.dir / "app.blob";
    constitution_ = options_.dir / "constitution.json";
    write_text(code_blob_, "ccl-cbdc-settlement-app");
    write_text(constitution_, json{{"resolve", {{"numerator", 1}, {"denominator", 2}}}}.dump());
    measurement_ = node::measurement_for_blob(code_blob_);

    for (std::size_t i = 0; i < options_.nodes; ++i)
        configs_.push_back(make_config(i, i == 0));
    nodes_.resize(options_.nodes);
    nodes_[0] = node::Node::launch(configs_[0], make_options(0, false));
    for (std::size_t i = 1; i < options_.nodes; ++i)
        nodes_[i] = node::Node::launch(configs_[i], make_options(i, false));
    auto n = options_.nodes;
    for (std::size_t i = 0; i < n; ++i)
        if (!nodes_[i]->wait_for(
                [n](const json& s) { return s["consensus_members"].size() == n && s["nodes"].size() == n && s["initialized"].get<bool>(); }, 20s))
            throw Error(ErrorCode::Timeout, "cluster failed to form: node " + std::to_string(i) + " never saw all members");
}

Cluster::~Cluster()
{
    for (auto& n : nodes_)
        if (n)
            n->stop();
}

std::string Cluster::rpc(std::size_t i) const
{
    if (options_.transport == node::TransportKind::Tcp)
        return "127.0.0.1:" + std::to_string(options_.base_port + 2 * i + 1);
    return tag_ + "-n" + std::to_string(i) + ".local:" + std::to_string(8000 + i);
}

std::string Cluster::p2p(std::size_t i) const
{
    if (options_.transport == node::TransportKind::Tcp)
        return "127.0.0.1:" + std::to_string(options_.base_port + 2 * i);
    return tag_ + "-n" + std::to_string(i) + ".local:" + std::to_string(7000 + i);
}

node::NodeConfig Cluster::make_config(std::size_t i, bool start) const
{
    node::NodeConfig c;
    auto ledger = (options_.dir / ("node" + std::to_string(i)) / "ledger.bin").string();
    fs::create_directories(options_.dir / ("node" + std::to_string(i)));
    if (start)
    {
        c.command = node::Command::Start;
        node::StartConfig s;
        s.constitution_path = constitution_.string();
        for (const auto& m : members())
            s.initial_members.push_back({m, keys_.at(m).public_key().hex()});
        s.node_address = p2p(i);
        s.rpc_address = rpc(i);
        s.ledger_path = ledger;
        c.start = s;
    }
    else
    {
        c.command = node::Command::Join;
        c.join = node::JoinConfig{rpc(0), p2p(i), rpc(i), ledger};
    }
    c.enclave.platform_id = "desk-platform";
    c.enclave.code_blob_path = code_blob_.string();
    c.confidential_mode = options_.confidential;
    c.data_dir = (options_.dir / ("node" + std::to_string(i)) / "state").string();
    c.transport = options_.transport;
    c.tick_ms = options_.tick_ms;
    return c;
}

node::NodeOptions Cluster::make_options(std::size_t i, bool recover)
{
    node::NodeOptions o;
    o.recover = recover;
    o.hub = &hub_;
    o.seed = options_.seed * 1000 + i;
    if (options_.crash_hook)
        o.crash_hook = [hook = options_.crash_hook, i](node::CrashPoint p) { hook(i, p); };
    return o;
}

std::vector<std::string> Cluster::members() const
{
    std::vector<std::string> out;
    for (int m = 0; m < options_.members; ++m)
        out.push_back("member" + std::to_string(m));
    return out;
}

std::vector<std::string> Cluster::banks() const
{
    std::vector<std::string> out;
    for (int b = 0; b < options_.banks; ++b)
        out.push_back("bank" + std::to_string(b));
    return out;
}

std::vector<std::string> Cluster::clients_of(const std::string& bank) const
{
    std::vector<std::string> out;
    for (int c = 0; c < options_.clients_per_bank; ++c)
        out.push_back(bank + "-client" + std::to_string(c));
    return out;
}

const crypto::KeyPair& Cluster::key(const std::string& id) const
{
    auto it = keys_.find(id);
    if (it == keys_.end())
        throw Error(ErrorCode::NotFound, "no key for '" + id + "'");
    return it->second;
}

json Cluster::policy_json() const { return settlement::policy_to_json(policy_); }

std::optional<std::size_t> Cluster::leader(std::chrono::milliseconds timeout)
{
    auto deadline = std::chrono::steady_clock::now() + timeout;
    while (true)
    {
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i] && nodes_[i]->status().value("role", "") == "Leader")
                return i;
        if (std::chrono::steady_clock::now() >= deadline)
            return std::nullopt;
        std::this_thread::sleep_for(10ms);
    }
}

Response Cluster::call(std::size_t i, const std::string& method, const std::string& path, const json& body)
{
    if (!nodes_.at(i))
        throw Error(ErrorCode::Unavailable, "node " + std::to_string(i) + " is down");
    if (options_.transport == node::TransportKind::Tcp)
    {
        node::Client c(rpc(i), node::TransportKind::Tcp);
        return method == "GET" ? c.get(path) : c.post(path, body);
    }
    return nodes_[i]->call(method, path, body);
}

namespace {

Response to_cluster(const std::vector<std::string>& rpcs, node::TransportKind kind, const std::string& path,
                    const json& envelope)
{
    Response last = node::error_response(Error(ErrorCode::Unavailable, "no node reachable"));
    for (int round = 0; round < 50; ++round)
    {
        for (const auto& rpc : rpcs)
        {
            try
            {
                auto r = node::Client(rpc, kind).post(path, envelope);
                if (r.status != 307 && r.status != 503)
                    return r;
                last = r;
            }
            catch (const Error& e)
            {
                last = node::error_response(e);
            }
        }
        std::this_thread::sleep_for(20ms);
    }
    return last;
}

} // namespace

Response Cluster::app(const std::string& party, const std::string& path, json body)
{
    std::vector<std::string> rpcs;
    if (auto l = leader(2s))
        rpcs.push_back(rpc(*l));
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i])
            rpcs.push_back(rpc(i));
    return to_cluster(rpcs, options_.transport, path, node::make_envelope(path, party, body, key(party)));
}

Response Cluster::propose(const std::string& member, const governance::Action& action)
{
    std::vector<std::string> rpcs;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i])
            rpcs.push_back(rpc(i));
    json body = {{"action", governance::action_to_json(action)}};
    return to_cluster(rpcs, options_.transport, "/gov/proposals",
                      node::make_envelope("/gov/proposals", member, body, key(member)));
}

Response Cluster::vote(const std::string& member, std::uint64_t proposal_id, bool yes)
{
    std::vector<std::string> rpcs;
    for (std::size_t i = 0; i < nodes_.size(); ++i)
        if (nodes_[i])
            rpcs.push_back(rpc(i));
    auto path = "/gov/proposals/" + std::to_string(proposal_id) + "/ballots";
    json body = {{"ballot", yes ? "yes" : "no"}};
    return to_cluster(rpcs, options_.transport, path, node::make_envelope(path, member, body, key(member)));
}

json Cluster::pass(const governance::Action& action)
{
    auto ms = members();
    auto r = propose(ms.at(0), action);
    if (r.status != 200)
        throw Error(ErrorCode::State, "proposal failed: " + r.body.dump());
    auto id = r.body["result"]["proposal_id"].get<std::uint64_t>();
    auto state = r.body["result"]["state"].get<std::string>();
    for (const auto& m : ms)
    {
        if (state != "Pending")
            break;
        auto v = vote(m, id, true);
        if (v.status != 200)
            throw Error(ErrorCode::State, "vote by " + m + " failed: " + v.body.dump());
        state = v.body["result"]["state"].get<std::string>();
    }
    if (state != "Applied")
        throw Error(ErrorCode::State, "proposal " + std::to_string(id) + " ended " + state);
    return r.body["result"];
}

void Cluster::open()
{
    pass({governance::ActionKind::RegisterAppPolicy, {{"policy", policy_json()}}});
    pass({governance::ActionKind::TransitionServiceToOpen, json::object()});
}

crypto::PublicKey Cluster::service_identity()
{
    for (auto& n : nodes_)
        if (n)
            return crypto::PublicKey::from_hex(n->status()["service_identity"].get<std::string>());
    throw Error(ErrorCode::Unavailable, "no node running");
}

void Cluster::kill(std::size_t i)
{
    if (nodes_.at(i))
    {
        nodes_[i]->stop();
        nodes_[i].reset();
    }
}

void Cluster::restart(std::size_t i)
{
    if (nodes_.at(i))
        throw Error(ErrorCode::State, "node " + std::to_string(i) + " is running");
    nodes_[i] = node::Node::launch(configs_[i], make_options(i, true));
}

std::uint64_t Cluster::commit_index()
{
    std::uint64_t best = 0;
    for (auto& n : nodes_)
        if (n)
            best = std::max(best, n->status()["commit_index"].get<std::uint64_t>());
    return best;
}

bool Cluster::wait_applied(std::uint64_t index, std::chrono::milliseconds timeout)
{
    for (auto& n : nodes_)
        if (n && !n->wait_for([index](const json& s) { return s["last_applied"].get<std::uint64_t>() >= index; },
                              timeout))
            return false;
    return true;
}

std::vector<fs::path> Cluster::persisted_files() const
{
    std::vector<fs::path> out;
    for (const auto& e : fs::recursive_directory_iterator(options_.dir))
        if (e.is_regular_file())
            out.push_back(e.path());
    return out;
}

} // namespace ccl::bench
