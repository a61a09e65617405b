#pragma once

// Runnable node: a core thread owning NodeCore (mailbox-serialised), a
// transport for consensus traffic and an optional HTTP front end.

#include "ccl/enclave/enclave.hpp"
#include "ccl/node/config.hpp"
#include "ccl/node/core.hpp"
#include "ccl/node/transport.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

namespace httplib {
class Server;
}

namespace ccl::node {

/// Build identifier mixed into every node measurement.
inline constexpr const char* kBuildId = "ccl-node-0.1.0";

struct Response
{
    int status = 200;
    json body;
};

/// HTTP status for an error code; body {"error": {"code", "message"}}.
Response error_response(const Error& e);
int http_status(ErrorCode code);

struct NodeOptions
{
    /// Reopen existing state in the data directory instead of creating it.
    bool recover = false;
    /// Required for the loopback transport.
    LoopbackHub* hub = nullptr;
    /// Serve HTTP on rpc_address (TCP transport only).
    bool serve_http = true;
    std::function<void(CrashPoint)> crash_hook;
    std::uint64_t seed = 0;
    std::chrono::milliseconds request_timeout{10'000};
};

enclave::Platform platform_for(const std::string& platform_id);
enclave::Measurement measurement_for_blob(const std::filesystem::path& code_blob_path);

class Node
{
  public:
    /// Starts or joins per config.command. Start writes genesis and waits for it to commit.
    static std::unique_ptr<Node> launch(const NodeConfig& config, NodeOptions options = {});
    ~Node();

    void stop();

    /// Thread-safe request entry used by HTTP and in-process clients.
    /// POST bodies for signed paths are envelopes {signer, body, signature}.
    Response call(const std::string& method, const std::string& path, const json& body = json());

    json status();
    /// False once stopped or halted by a fatal error.
    bool running();
    const std::string& id() const { return id_; }
    const NodeConfig& config() const { return config_; }
    const crypto::PublicKey& identity() const { return identity_.public_key(); }
    /// Signs like an operator would, with the node identity key.
    crypto::Signature operator_sign(ByteView message) const { return identity_.sign(message); }

    /// Polls status until pred holds or the timeout passes.
    bool wait_for(const std::function<bool(const json&)>& pred, std::chrono::milliseconds timeout);

    /// Runs `fn` on the core thread and returns its result.
    template <typename F>
    auto on_core(F&& fn) -> decltype(fn(std::declval<NodeCore&>()));

  private:
    Node(NodeConfig config, NodeOptions options, crypto::KeyPair identity, Secrets secrets);

    void boot(CoreOptions core, const std::vector<std::pair<std::string, std::string>>& peers);
    void run();
    void post(std::function<void()> fn);
    void send_all(const std::vector<consensus::Message>& msgs);
    void on_applied(std::vector<ApplyResult> results);
    void sync_peers();
    Response submit(const json& command, bool wait);
    Response handle_join(const json& body);
    Response dispatch(const std::string& method, const std::string& path, const json& body);
    void start_http();

    NodeConfig config_;
    NodeOptions options_;
    crypto::KeyPair identity_;
    Secrets secrets_;
    std::string id_;
    enclave::Platform platform_;
    enclave::Measurement measurement_;

    std::unique_ptr<NodeCore> core_;
    std::unique_ptr<Transport> transport_;
    std::unique_ptr<httplib::Server> http_;
    std::thread http_thread_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<std::function<void()>> mailbox_;
    bool running_ = false;
    std::thread core_thread_;
    std::chrono::steady_clock::time_point epoch_;
    std::uint64_t last_sign_tick_ = 0;

    struct Pending
    {
        Bytes command;
        std::promise<ApplyResult> promise;
    };
    std::map<std::uint64_t, Pending> pending_;
};

template <typename F>
auto Node::on_core(F&& fn) -> decltype(fn(std::declval<NodeCore&>()))
{
    using R = decltype(fn(std::declval<NodeCore&>()));
    auto task = std::make_shared<std::packaged_task<R()>>([this, &fn] { return fn(*core_); });
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut.get();
}

/// Registry of in-process nodes by rpc address, used for loopback clusters.
class LocalRegistry
{
  public:
    static void add(const std::string& rpc, Node* node);
    static void remove(const std::string& rpc, Node* node);
    static Node* find(const std::string& rpc);
};

} // namespace ccl::node
