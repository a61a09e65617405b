#include "ccl/settlement/app.hpp"
#include "ccl/common/error.hpp"
#include "ccl/common/signing.hpp"

#include <algorithm>

namespace ccl::settlement {

namespace {

constexpr std::string_view kWritePaths[] = {"/app/mint",           "/app/redeem",          "/app/transfer",
                                            "/app/claims/issue",   "/app/claims/retire",   "/app/assets/register",
                                            "/app/assets/transfer", "/app/dvp"};
constexpr std::string_view kReadPaths[] = {"/app/balance", "/app/asset"};

Amount amount_field(const json& body, const char* field)
{
    if (!body.contains(field) || !body[field].is_number_integer() || body[field].get<std::int64_t>() <= 0)
        throw Error(ErrorCode::Validation, std::string("field '") + field + "' must be a positive integer");
    return body[field].get<Amount>();
}

std::string string_field(const json& body, const char* field)
{
    if (!body.contains(field) || !body[field].is_string())
        throw Error(ErrorCode::Validation, std::string("field '") + field + "' must be a string");
    return body[field].get<std::string>();
}

bool private_flag(const json& body)
{
    if (!body.contains("private"))
        return false;
    if (!body["private"].is_boolean())
        throw Error(ErrorCode::Validation, "field 'private' must be a boolean");
    return body["private"].get<bool>();
}

void require_cosignature(const Settlement& s, const AppRequest& r, const char* field, const PartyId& cosigner)
{
    auto* party = s.policy().find(cosigner);
    if (!party)
        throw Error(ErrorCode::NotFound, "unknown co-signer '" + cosigner + "'");
    crypto::Signature sig;
    try
    {
        sig = crypto::signature_from_hex(string_field(r.body, field));
    }
    catch (const Error& e)
    {
        throw Error(ErrorCode::Authentication, std::string("co-signature '") + field + "' missing or malformed");
    }
    if (!crypto::verify(party->public_key, as_view(cosign_bytes(r.path, r.body, field)), sig))
        throw Error(ErrorCode::Authentication, "co-signature of '" + cosigner + "' does not verify");
}

json movement_json(const Movement& m)
{
    json created = json::array();
    for (const auto& u : m.created)
        created.push_back({{"id", u.id}, {"owner", u.owner}, {"amount", u.amount}});
    return {{"consumed", m.consumed}, {"created", created}};
}

} // namespace

bool is_write_path(std::string_view path)
{
    return std::find(std::begin(kWritePaths), std::end(kWritePaths), path) != std::end(kWritePaths);
}

bool is_read_path(std::string_view path)
{
    return std::find(std::begin(kReadPaths), std::end(kReadPaths), path) != std::end(kReadPaths);
}

Bytes cosign_bytes(std::string_view path, const json& body, const char* cosign_field)
{
    json stripped = body;
    stripped.erase(cosign_field);
    return request_signing_bytes(std::string(path) + "#cosign", stripped);
}

AppRequest sign_request(std::string path, const PartyId& signer, json body, const crypto::KeyPair& key)
{
    auto sig = key.sign(as_view(request_signing_bytes(path, body)));
    return {std::move(path), signer, std::move(body), sig};
}

void verify_request(const Settlement& s, const AppRequest& r)
{
    if (!r.body.is_object())
        throw Error(ErrorCode::Validation, "request body must be an object");
    auto* party = s.policy().find(r.signer);
    if (!party)
        throw Error(ErrorCode::Authorization, "signer '" + r.signer + "' is not a registered party");
    if (!crypto::verify(party->public_key, as_view(request_signing_bytes(r.path, r.body)), r.signature))
        throw Error(ErrorCode::Authentication, "request signature does not verify for '" + r.signer + "'");
}

AppOutcome execute(Settlement& s, const AppRequest& r, const std::function<void()>& between_legs)
{
    if (!is_write_path(r.path))
        throw Error(ErrorCode::NotFound, "unknown application path '" + r.path + "'");
    verify_request(s, r);
    const auto& b = r.body;
    AppOutcome out;
    out.private_payload = private_flag(b);
    if (r.path == "/app/mint")
    {
        auto to = string_field(b, "to");
        auto m = s.mint(r.signer, to, amount_field(b, "amount"));
        out.result = {{"holding", s.holding(to)}, {"movement", movement_json(m)}};
        out.parties = {r.signer, to};
    }
    else if (r.path == "/app/redeem")
    {
        auto from = string_field(b, "from");
        if (from != r.signer)
            throw Error(ErrorCode::Authorization, "redeem must be signed by the redeeming intermediary");
        require_cosignature(s, r, "cb_signature", s.policy().central_bank().id);
        s.redeem(from, amount_field(b, "amount"));
        out.result = {{"holding", s.holding(from)}};
        out.parties = {from, s.policy().central_bank().id};
    }
    else if (r.path == "/app/transfer")
    {
        auto to = string_field(b, "to");
        auto m = s.transfer(r.signer, to, amount_field(b, "amount"));
        out.result = {{"holding", s.holding(r.signer)}, {"movement", movement_json(m)}};
        out.parties = {r.signer, to};
    }
    else if (r.path == "/app/claims/issue" || r.path == "/app/claims/retire")
    {
        auto client = string_field(b, "client");
        auto amount = amount_field(b, "amount");
        if (r.path == "/app/claims/issue")
            s.issue_claim(r.signer, client, amount);
        else
            s.retire_claim(r.signer, client, amount);
        out.result = {{"claim", s.claim(r.signer, client)}, {"claims_total", s.claims_total(r.signer)}};
        out.parties = {r.signer, client};
    }
    else if (r.path == "/app/assets/register")
    {
        auto id = string_field(b, "asset_id");
        auto holder = string_field(b, "holder");
        s.register_asset(r.signer, id, amount_field(b, "quantity"), holder);
        out.result = {{"asset_id", id}, {"supply", s.asset(id).supply}};
        out.parties = {r.signer, holder};
    }
    else if (r.path == "/app/assets/transfer")
    {
        auto id = string_field(b, "asset_id");
        auto to = string_field(b, "to");
        s.transfer_asset(r.signer, to, id, amount_field(b, "quantity"));
        out.result = {{"asset_id", id}, {"holding", s.asset_holding(id, r.signer)}};
        out.parties = {r.signer, to};
    }
    else if (r.path == "/app/dvp")
    {
        DvpInstruction ins;
        ins.instruction_id = string_field(b, "instruction_id");
        ins.seller = r.signer;
        ins.buyer = string_field(b, "buyer");
        ins.asset_id = string_field(b, "asset_id");
        ins.quantity = amount_field(b, "quantity");
        ins.price = amount_field(b, "price");
        ins.private_payload = out.private_payload;
        require_cosignature(s, r, "buyer_signature", ins.buyer);
        auto status = s.dvp_settle(ins, between_legs);
        out.result = {{"instruction_id", ins.instruction_id}, {"status", dvp_status_name(status)}};
        out.parties = {ins.seller, ins.buyer};
    }
    return out;
}

json query(const Settlement& s, const AppRequest& r)
{
    if (!is_read_path(r.path))
        throw Error(ErrorCode::NotFound, "unknown application path '" + r.path + "'");
    verify_request(s, r);
    const auto& signer = s.policy().parties.at(r.signer);
    if (r.path == "/app/balance")
    {
        auto party = string_field(r.body, "party");
        if (party != r.signer && signer.role != Role::CentralBank)
            throw Error(ErrorCode::Authorization, "balances are readable by their owner or the central bank");
        json out = {{"party", party}, {"holding", s.holding(party)}};
        auto* p = s.policy().find(party);
        if (p && p->role == Role::Intermediary)
            out["claims_total"] = s.claims_total(party);
        if (p && p->role == Role::Client)
            out["claim"] = s.claim(p->intermediary, party);
        json assets = json::object();
        for (const auto& [id, a] : s.assets())
            if (auto it = a.holdings.find(party); it != a.holdings.end())
                assets[id] = it->second;
        out["assets"] = assets;
        return out;
    }
    auto id = string_field(r.body, "asset_id");
    const auto& a = s.asset(id);
    json holdings = json::object();
    for (const auto& [p, q] : a.holdings)
        if (signer.role == Role::CentralBank || p == r.signer)
            holdings[p] = q;
    return {{"asset_id", id}, {"issuer", a.issuer}, {"supply", a.supply}, {"holdings", holdings}};
}

} // namespace ccl::settlement
