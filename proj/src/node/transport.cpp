#include "ccl/node/transport.hpp"
#include "ccl/common/codec.hpp"
#include "ccl/common/error.hpp"
#include "ccl/node/config.hpp"

#include <spdlog/spdlog.h>

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace ccl::node {

namespace {

constexpr std::size_t kMaxFrame = 64u << 20;
constexpr std::size_t kMaxQueue = 4096;

bool write_all(int fd, const std::uint8_t* data, std::size_t n)
{
    while (n > 0)
    {
        auto w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w <= 0)
        {
            if (w < 0 && errno == EINTR)
                continue;
            return false;
        }
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

bool read_all(int fd, std::uint8_t* data, std::size_t n)
{
    while (n > 0)
    {
        auto r = ::recv(fd, data, n, 0);
        if (r <= 0)
        {
            if (r < 0 && errno == EINTR)
                continue;
            return false;
        }
        data += r;
        n -= static_cast<std::size_t>(r);
    }
    return true;
}

int connect_to(const std::string& address)
{
    auto [host, port] = split_address(address);
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res)
        return -1;
    int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) != 0)
    {
        ::close(fd);
        fd = -1;
    }
    ::freeaddrinfo(res);
    if (fd >= 0)
    {
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    }
    return fd;
}

} // namespace

void LoopbackHub::attach(const consensus::NodeId& id, Transport::Handler handler)
{
    std::lock_guard lock(mu_);
    handlers_[id] = std::make_shared<Transport::Handler>(std::move(handler));
}

void LoopbackHub::detach(const consensus::NodeId& id)
{
    std::lock_guard lock(mu_);
    handlers_.erase(id);
}

void LoopbackHub::isolate(const consensus::NodeId& id, bool isolated)
{
    std::lock_guard lock(mu_);
    isolated_[id] = isolated;
}

void LoopbackHub::deliver(const consensus::Message& m)
{
    std::shared_ptr<Transport::Handler> h;
    {
        std::lock_guard lock(mu_);
        if (isolated_[m.from] || isolated_[m.to])
            return;
        auto it = handlers_.find(m.to);
        if (it == handlers_.end())
            return;
        h = it->second;
    }
    (*h)(m);
}

TcpTransport::TcpTransport(consensus::NodeId self, std::string listen_address)
    : self_(std::move(self)), listen_address_(std::move(listen_address))
{
}

TcpTransport::~TcpTransport() { stop(); }

void TcpTransport::start(Handler handler)
{
    handler_ = std::move(handler);
    auto [host, port] = split_address(listen_address_);
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (host == "localhost")
        host = "127.0.0.1";
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0)
    {
        auto err = std::string(std::strerror(errno));
        ::close(listen_fd_);
        listen_fd_ = -1;
        throw Error(ErrorCode::Io, "cannot listen on " + listen_address_ + ": " + err);
    }
    running_ = true;
    acceptor_ = std::thread([this] { accept_loop(); });
}

void TcpTransport::stop()
{
    if (!running_.exchange(false))
        return;
    cv_.notify_all();
    if (acceptor_.joinable())
        acceptor_.join();
    ::close(listen_fd_);
    std::vector<std::thread> senders;
    {
        std::lock_guard lock(mu_);
        for (auto fd : reader_fds_)
            ::shutdown(fd, SHUT_RDWR);
        for (auto& [id, p] : peers_)
        {
            if (p->fd >= 0)
                ::shutdown(p->fd, SHUT_RDWR);
            senders.push_back(std::move(p->sender));
        }
    }
    for (auto& t : senders)
        if (t.joinable())
            t.join();
    for (auto& t : readers_)
        if (t.joinable())
            t.join();
    std::lock_guard lock(mu_);
    for (auto fd : reader_fds_)
        ::close(fd);
    for (auto& [id, p] : peers_)
        if (p->fd >= 0)
            ::close(p->fd);
    reader_fds_.clear();
    peers_.clear();
}

void TcpTransport::accept_loop()
{
    while (running_)
    {
        pollfd pfd{listen_fd_, POLLIN, 0};
        if (::poll(&pfd, 1, 100) <= 0)
            continue;
        int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0)
            continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(mu_);
        reader_fds_.push_back(fd);
        readers_.emplace_back([this, fd] { read_loop(fd); });
    }
}

void TcpTransport::read_loop(int fd)
{
    while (running_)
    {
        std::uint8_t len_buf[4];
        if (!read_all(fd, len_buf, 4))
            return;
        auto len = load_u32le(len_buf);
        if (len > kMaxFrame)
            return;
        Bytes frame(len);
        if (!read_all(fd, frame.data(), len))
            return;
        try
        {
            Reader r(as_view(frame));
            auto sender_address = r.str();
            auto msg = consensus::decode_message(r.raw(r.remaining()));
            if (valid_address(sender_address))
                set_peer(msg.from, sender_address);
            handler_(std::move(msg));
        }
        catch (const std::exception& e)
        {
            spdlog::warn("dropping malformed frame: {}", e.what());
            return;
        }
    }
}

void TcpTransport::set_peer(const consensus::NodeId& id, const std::string& address)
{
    if (id == self_)
        return;
    std::lock_guard lock(mu_);
    if (!running_)
        return;
    auto& p = peers_[id];
    if (!p)
    {
        p = std::make_unique<Peer>();
        p->address = address;
        p->sender = std::thread([this, id] { send_loop(id); });
    }
    else if (p->address != address)
    {
        p->address = address;
        if (p->fd >= 0)
            ::shutdown(p->fd, SHUT_RDWR);
    }
}

void TcpTransport::send(const consensus::Message& m)
{
    Writer w;
    w.u32(0).str(listen_address_).raw(as_view(consensus::encode_message(m)));
    auto frame = std::move(w).take();
    store_u32le(frame.data(), static_cast<std::uint32_t>(frame.size() - 4));
    std::lock_guard lock(mu_);
    auto it = peers_.find(m.to);
    if (it == peers_.end())
        return;
    auto& q = it->second->queue;
    if (q.size() >= kMaxQueue)
        q.pop_front();
    q.push_back(std::move(frame));
    cv_.notify_all();
}

void TcpTransport::send_loop(const consensus::NodeId& id)
{
    std::unique_lock lock(mu_);
    Peer* p = peers_.at(id).get();
    while (running_)
    {
        cv_.wait(lock, [&] { return !running_ || !p->queue.empty(); });
        if (!running_)
            return;
        if (p->fd < 0)
        {
            auto address = p->address;
            lock.unlock();
            int fd = connect_to(address);
            lock.lock();
            if (fd < 0)
            {
                // Unreachable: drop what is queued; Raft retransmits.
                p->queue.clear();
                lock.unlock();
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
                lock.lock();
                continue;
            }
            p->fd = fd;
        }
        auto frame = std::move(p->queue.front());
        p->queue.pop_front();
        int fd = p->fd;
        lock.unlock();
        bool ok = write_all(fd, frame.data(), frame.size());
        lock.lock();
        if (!ok && p->fd == fd)
        {
            ::close(fd);
            p->fd = -1;
        }
    }
}

} // namespace ccl::node
