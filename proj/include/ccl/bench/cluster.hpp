#pragma once

// In-process cluster of nodes over the loopback transport (or TCP on
// 127.0.0.1), with a consortium of members and a CBDC application policy.

#include "ccl/node/client.hpp"
#include "ccl/node/node.hpp"
#include "ccl/settlement/settlement.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace ccl::bench {

using node::json;
using node::Response;

struct ClusterOptions
{
    std::filesystem::path dir;
    std::size_t nodes = 1;
    bool confidential = true;
    settlement::Model model = settlement::Model::Account;
    int members = 3;
    int banks = 3;
    int clients_per_bank = 2;
    std::uint32_t tick_ms = 5;
    std::uint64_t seed = 1;
    node::TransportKind transport = node::TransportKind::Loopback;
    /// TCP only: node i uses base_port + 2i (consensus) and base_port + 2i + 1 (rpc).
    std::uint16_t base_port = 0;
    /// Per-node crash hook, by node index.
    std::function<void(std::size_t, node::CrashPoint)> crash_hook;
};

class Cluster
{
  public:
    /// Starts node 0, joins the rest and waits until every node is a consensus member.
    explicit Cluster(ClusterOptions options);
    ~Cluster();

    /// Registers the application policy and opens the service through member votes.
    void open();

    std::size_t size() const { return nodes_.size(); }
    node::Node* node(std::size_t i) { return nodes_.at(i).get(); }
    const node::NodeConfig& config(std::size_t i) const { return configs_.at(i); }
    /// Index of a running node that reports itself leader, waiting up to `timeout`.
    std::optional<std::size_t> leader(std::chrono::milliseconds timeout = std::chrono::milliseconds(10'000));

    /// Governance: propose as `member`, then vote yes with members until Applied.
    json pass(const governance::Action& action);
    Response propose(const std::string& member, const governance::Action& action);
    Response vote(const std::string& member, std::uint64_t proposal_id, bool yes);

    /// Signed application request to the cluster (redirects followed).
    Response app(const std::string& party, const std::string& path, json body);
    /// Request via a specific node without redirect handling.
    Response call(std::size_t i, const std::string& method, const std::string& path, const json& body = json());

    const crypto::KeyPair& key(const std::string& id) const;
    const settlement::Policy& policy() const { return policy_; }
    json policy_json() const;
    std::vector<std::string> members() const;
    std::vector<std::string> banks() const;
    std::vector<std::string> clients_of(const std::string& bank) const;
    crypto::PublicKey service_identity();
    const enclave::Measurement& measurement() const { return measurement_; }
    const std::filesystem::path& code_blob() const { return code_blob_; }

    /// Stops a node as if its process died.
    void kill(std::size_t i);
    /// Relaunches a killed node from its persisted state.
    void restart(std::size_t i);
    bool alive(std::size_t i) const { return nodes_.at(i) != nullptr; }
    node::LoopbackHub& hub() { return hub_; }

    /// Waits until every running node has applied at least `index`.
    bool wait_applied(std::uint64_t index, std::chrono::milliseconds timeout = std::chrono::milliseconds(10'000));
    std::uint64_t commit_index();

    /// Every regular file under the cluster directory.
    std::vector<std::filesystem::path> persisted_files() const;

  private:
    node::NodeConfig make_config(std::size_t i, bool start) const;
    node::NodeOptions make_options(std::size_t i, bool recover);
    std::string rpc(std::size_t i) const;
    std::string p2p(std::size_t i) const;

    ClusterOptions options_;
    std::string tag_;
    node::LoopbackHub hub_;
    std::map<std::string, crypto::KeyPair> keys_;
    settlement::Policy policy_;
    std::filesystem::path code_blob_;
    std::filesystem::path constitution_;
    enclave::Measurement measurement_;
    std::vector<node::NodeConfig> configs_;
    std::vector<std::unique_ptr<node::Node>> nodes_;
};

} // namespace ccl::bench
