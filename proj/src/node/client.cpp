#include "ccl/node/client.hpp"
#include "ccl/common/signing.hpp"

#include <httplib.h>

namespace ccl::node {

json make_envelope(const std::string& path, const std::string& signer, const json& body, const crypto::KeyPair& key)
{
    auto sig = key.sign(as_view(request_signing_bytes(path, body)));
    return {{"signer", signer}, {"body", body}, {"signature", crypto::signature_hex(sig)}};
}

Client::Client(std::string rpc_address, TransportKind kind, std::chrono::milliseconds timeout)
    : rpc_(std::move(rpc_address)), kind_(kind), timeout_(timeout)
{
}

Response Client::get(const std::string& path) { return request("GET", path, json()); }

Response Client::post(const std::string& path, const json& body) { return request("POST", path, body); }

Response Client::signed_post(const std::string& path, const std::string& signer, const json& body,
                             const crypto::KeyPair& key)
{
    return post(path, make_envelope(path, signer, body, key));
}

Response Client::request(const std::string& method, const std::string& path, const json& body)
{
    auto target = rpc_;
    for (int hop = 0;; ++hop)
    {
        auto r = once(target, method, path, body);
        if (r.status != 307 || hop >= 5)
            return r;
        const auto& err = r.body.value("error", json::object());
        if (!err.contains("leader_rpc") || err["leader_rpc"] == target)
            return r;
        target = err["leader_rpc"].get<std::string>();
    }
}

Response Client::once(const std::string& rpc, const std::string& method, const std::string& path, const json& body)
{
    if (kind_ == TransportKind::Loopback)
    {
        auto* node = LocalRegistry::find(rpc);
        if (!node)
            throw Error(ErrorCode::Unavailable, "no in-process node at " + rpc);
        return node->call(method, path, body);
    }
    auto [host, port] = split_address(rpc);
    httplib::Client cli(host, port);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_).count();
    cli.set_connection_timeout(2, 0);
    cli.set_read_timeout(static_cast<time_t>(std::max<long long>(secs, 1)), 0);
    cli.set_write_timeout(static_cast<time_t>(std::max<long long>(secs, 1)), 0);
    auto res = method == "GET" ? cli.Get(path) : cli.Post(path, body.is_null() ? std::string("{}") : body.dump(), "application/json");
    if (!res)
        throw Error(ErrorCode::Unavailable, "cannot reach " + rpc + ": " + httplib::to_string(res.error()));
    Response out;
    out.status = res->status;
    try
    {
        out.body = res->body.empty() ? json::object() : json::parse(res->body);
    }
    catch (const json::exception&)
    {
        out.body = {{"raw", res->body}};
    }
    return out;
}

} // namespace ccl::node
