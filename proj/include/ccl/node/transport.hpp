#pragma once

// Node-to-node message transport. TCP frames are
// [u32 LE length][str sender_address][consensus message], so a receiver
// learns how to reach the sender from the first frame it gets.

#include "ccl/consensus/message.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ccl::node {

class Transport
{
  public:
    using Handler = std::function<void(consensus::Message)>;

    virtual ~Transport() = default;
    virtual void start(Handler handler) = 0;
    virtual void stop() = 0;
    /// Best effort; messages to unknown or unreachable peers are dropped.
    virtual void send(const consensus::Message& m) = 0;
    virtual void set_peer(const consensus::NodeId& id, const std::string& address) = 0;
};

/// In-process delivery between transports registered on the same hub.
class LoopbackHub
{
  public:
    void attach(const consensus::NodeId& id, Transport::Handler handler);
    void detach(const consensus::NodeId& id);
    void deliver(const consensus::Message& m);
    /// Messages between isolated nodes and anyone else are dropped.
    void isolate(const consensus::NodeId& id, bool isolated);

  private:
    std::mutex mu_;
    std::map<consensus::NodeId, std::shared_ptr<Transport::Handler>> handlers_;
    std::map<consensus::NodeId, bool> isolated_;
};

class LoopbackTransport final : public Transport
{
  public:
    LoopbackTransport(LoopbackHub& hub, consensus::NodeId self) : hub_(hub), self_(std::move(self)) {}
    ~LoopbackTransport() override { stop(); }

    void start(Handler handler) override { hub_.attach(self_, std::move(handler)); }
    void stop() override { hub_.detach(self_); }
    void send(const consensus::Message& m) override { hub_.deliver(m); }
    void set_peer(const consensus::NodeId&, const std::string&) override {}

  private:
    LoopbackHub& hub_;
    consensus::NodeId self_;
};

class TcpTransport final : public Transport
{
  public:
    TcpTransport(consensus::NodeId self, std::string listen_address);
    ~TcpTransport() override;

    void start(Handler handler) override;
    void stop() override;
    void send(const consensus::Message& m) override;
    void set_peer(const consensus::NodeId& id, const std::string& address) override;

  private:
    struct Peer
    {
        std::string address;
        std::deque<Bytes> queue;
        int fd = -1;
        std::thread sender;
    };

    void accept_loop();
    void read_loop(int fd);
    void send_loop(const consensus::NodeId& id);

    consensus::NodeId self_;
    std::string listen_address_;
    Handler handler_;
    std::atomic<bool> running_{false};
    int listen_fd_ = -1;
    std::thread acceptor_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::map<consensus::NodeId, std::unique_ptr<Peer>> peers_;
    std::vector<std::thread> readers_;
    std::vector<int> reader_fds_;
};

} // namespace ccl::node
