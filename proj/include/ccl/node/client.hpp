#pragma once

#include "ccl/crypto/crypto.hpp"
#include "ccl/node/config.hpp"
#include "ccl/node/node.hpp"

#include <chrono>
#include <string>

namespace ccl::node {

/// Signed request envelope: {"signer", "body", "signature"} where the
/// signature covers request_signing_bytes(path, body).
json make_envelope(const std::string& path, const std::string& signer, const json& body, const crypto::KeyPair& key);

/// Client for the node API over HTTP or, for loopback clusters, in-process.
/// Follows not-leader redirects.
class Client
{
  public:
    explicit Client(std::string rpc_address, TransportKind kind = TransportKind::Tcp,
                    std::chrono::milliseconds timeout = std::chrono::milliseconds(15'000));

    Response get(const std::string& path);
    Response post(const std::string& path, const json& body);
    Response signed_post(const std::string& path, const std::string& signer, const json& body,
                         const crypto::KeyPair& key);

    const std::string& rpc_address() const { return rpc_; }

  private:
    Response request(const std::string& method, const std::string& path, const json& body);
    Response once(const std::string& rpc, const std::string& method, const std::string& path, const json& body);

    std::string rpc_;
    TransportKind kind_;
    std::chrono::milliseconds timeout_;
};

} // namespace ccl::node
