#include "ccl/settlement/settlement.hpp"
#include "ccl/common/error.hpp"

#include <limits>

namespace ccl::settlement {

namespace {

[[noreturn]] void fail(ErrorCode code, const std::string& msg) { throw Error(code, msg); }

void require_positive(Amount a, const char* what)
{
    if (a == 0)
        fail(ErrorCode::Validation, std::string(what) + " must be positive");
}

Amount checked_add(Amount a, Amount b)
{
    if (a > std::numeric_limits<Amount>::max() - b)
        fail(ErrorCode::Validation, "amount overflow");
    return a + b;
}

Role role_from_name(std::string_view s)
{
    if (s == "CentralBank")
        return Role::CentralBank;
    if (s == "Intermediary")
        return Role::Intermediary;
    if (s == "Client")
        return Role::Client;
    fail(ErrorCode::Validation, "unknown party role '" + std::string(s) + "'");
}

} // namespace

std::string_view role_name(Role r)
{
    switch (r)
    {
    case Role::CentralBank: return "CentralBank";
    case Role::Intermediary: return "Intermediary";
    case Role::Client: return "Client";
    }
    return "Unknown";
}

std::string_view model_name(Model m) { return m == Model::Account ? "account" : "utxo"; }

std::string_view dvp_status_name(DvpStatus s)
{
    switch (s)
    {
    case DvpStatus::Settled: return "Settled";
    case DvpStatus::InsufficientAsset: return "InsufficientAsset";
    case DvpStatus::InsufficientFunds: return "InsufficientFunds";
    case DvpStatus::BackingViolation: return "BackingViolation";
    }
    return "Unknown";
}

const Party& Policy::central_bank() const
{
    for (const auto& [id, p] : parties)
        if (p.role == Role::CentralBank)
            return p;
    fail(ErrorCode::State, "policy has no central bank");
}

const Party* Policy::find(const PartyId& id) const
{
    auto it = parties.find(id);
    return it == parties.end() ? nullptr : &it->second;
}

Policy parse_policy(const json& j)
{
    if (!j.is_object())
        fail(ErrorCode::Validation, "policy must be an object");
    Policy p;
    auto model = j.value("model", std::string("account"));
    if (model == "account")
        p.model = Model::Account;
    else if (model == "utxo")
        p.model = Model::Utxo;
    else
        fail(ErrorCode::Validation, "policy.model must be 'account' or 'utxo'");
    if (!j.contains("parties") || !j["parties"].is_array())
        fail(ErrorCode::Validation, "policy.parties must be an array");
    int central_banks = 0;
    for (const auto& e : j["parties"])
    {
        Party party;
        try
        {
            party.id = e.at("id").get<std::string>();
            party.role = role_from_name(e.at("role").get<std::string>());
            party.public_key = crypto::PublicKey::from_hex(e.at("public_key").get<std::string>());
            party.intermediary = e.value("intermediary", std::string());
        }
        catch (const Error&)
        {
            throw;
        }
        catch (const std::exception& ex)
        {
            fail(ErrorCode::Validation, std::string("policy party malformed: ") + ex.what());
        }
        if (party.id.empty())
            fail(ErrorCode::Validation, "party id must be non-empty");
        if (party.role == Role::CentralBank)
            ++central_banks;
        if ((party.role == Role::Client) == party.intermediary.empty())
            fail(ErrorCode::Validation, "party '" + party.id + "': exactly clients name an intermediary");
        if (!p.parties.emplace(party.id, party).second)
            fail(ErrorCode::Validation, "duplicate party '" + party.id + "'");
    }
    if (central_banks != 1)
        fail(ErrorCode::Validation, "policy needs exactly one CentralBank");
    for (const auto& [id, party] : p.parties)
    {
        if (party.role != Role::Client)
            continue;
        auto* i = p.find(party.intermediary);
        if (!i || i->role != Role::Intermediary)
            fail(ErrorCode::Validation, "client '" + id + "' attaches to unknown intermediary '" + party.intermediary + "'");
    }
    return p;
}

json policy_to_json(const Policy& p)
{
    json parties = json::array();
    for (const auto& [id, party] : p.parties)
    {
        json e = {{"id", id}, {"role", role_name(party.role)}, {"public_key", party.public_key.hex()}};
        if (!party.intermediary.empty())
            e["intermediary"] = party.intermediary;
        parties.push_back(e);
    }
    return {{"model", model_name(p.model)}, {"parties", parties}};
}

void check_policy_extends(const Policy& current, const Policy& next)
{
    if (current.model != next.model)
        fail(ErrorCode::Validation, "policy model cannot change once registered");
    for (const auto& [id, party] : current.parties)
    {
        auto* n = next.find(id);
        if (!n || !(*n == party))
            fail(ErrorCode::Validation, "policy cannot remove or alter party '" + id + "'");
    }
}

Amount CbdcBook::holding(const PartyId& p) const
{
    auto it = accounts_.find(p);
    return it == accounts_.end() ? 0 : it->second;
}

std::map<PartyId, Amount> CbdcBook::totals() const
{
    std::map<PartyId, Amount> out;
    for (const auto& [p, a] : accounts_)
        if (a > 0)
            out[p] = a;
    return out;
}

void CbdcBook::credit(const PartyId& to, Amount amount, Movement& m)
{
    accounts_[to] = checked_add(holding(to), amount);
    if (model_ == Model::Utxo)
    {
        Utxo u{next_utxo_++, to, amount};
        utxos_[u.id] = u;
        by_owner_[to].insert({amount, u.id});
        m.created.push_back(u);
    }
}

void CbdcBook::debit(const PartyId& from, Amount amount, Movement& m)
{
    auto have = holding(from);
    if (have < amount)
        fail(ErrorCode::InsufficientFunds,
             "'" + from + "' holds " + std::to_string(have) + ", needs " + std::to_string(amount));
    accounts_[from] = have - amount;
    if (model_ == Model::Account)
        return;
    auto& owned = by_owner_[from];
    Amount gathered = 0;
    while (gathered < amount)
    {
        auto largest = std::prev(owned.end());
        gathered += largest->first;
        m.consumed.push_back(largest->second);
        utxos_.erase(largest->second);
        owned.erase(largest);
    }
    if (gathered > amount)
    {
        Utxo change{next_utxo_++, from, gathered - amount};
        utxos_[change.id] = change;
        owned.insert({change.amount, change.id});
        m.created.push_back(change);
    }
}

Movement CbdcBook::mint(const PartyId& to, Amount amount)
{
    Movement m;
    auto minted = checked_add(total_minted_, amount);
    credit(to, amount, m);
    total_minted_ = minted;
    return m;
}

Movement CbdcBook::burn(const PartyId& from, Amount amount)
{
    Movement m;
    debit(from, amount, m);
    total_redeemed_ += amount;
    return m;
}

Movement CbdcBook::move(const PartyId& from, const PartyId& to, Amount amount)
{
    Movement m;
    if (holding(from) < amount)
        fail(ErrorCode::InsufficientFunds, "'" + from + "' holds " + std::to_string(holding(from)) + ", needs " +
                                               std::to_string(amount));
    checked_add(holding(to), amount);
    debit(from, amount, m);
    // Payment output first, then change, matching the usual transaction layout.
    if (!m.created.empty())
    {
        auto change = m.created.back();
        m.created.pop_back();
        credit(to, amount, m);
        m.created.push_back(change);
    }
    else
    {
        credit(to, amount, m);
    }
    return m;
}

Settlement::Settlement(Policy policy) : policy_(std::move(policy)), book_(policy_.model) {}

void Settlement::update_policy(Policy next)
{
    check_policy_extends(policy_, next);
    policy_ = std::move(next);
}

const Party& Settlement::require_party(const PartyId& id, Role role, const char* what) const
{
    auto* p = policy_.find(id);
    if (!p)
        fail(ErrorCode::NotFound, std::string(what) + " '" + id + "' is not a registered party");
    if (p->role != role)
        fail(ErrorCode::Validation,
             std::string(what) + " '" + id + "' must be " + std::string(role_name(role)));
    return *p;
}

Amount Settlement::claims_total(const PartyId& intermediary) const
{
    auto it = claims_total_.find(intermediary);
    return it == claims_total_.end() ? 0 : it->second;
}

Amount Settlement::claim(const PartyId& intermediary, const PartyId& client) const
{
    auto it = claims_.find({intermediary, client});
    return it == claims_.end() ? 0 : it->second;
}

void Settlement::require_backing(const PartyId& intermediary, Amount outgoing) const
{
    auto have = book_.holding(intermediary);
    if (have < outgoing)
        fail(ErrorCode::InsufficientFunds, "'" + intermediary + "' holds " + std::to_string(have) + ", needs " +
                                               std::to_string(outgoing));
    if (have - outgoing < claims_total(intermediary))
        fail(ErrorCode::Backing, "'" + intermediary + "' would hold " + std::to_string(have - outgoing) +
                                     " against client claims of " + std::to_string(claims_total(intermediary)));
}

Movement Settlement::mint(const PartyId& issuer, const PartyId& to, Amount amount)
{
    auto* p = policy_.find(issuer);
    if (!p || p->role != Role::CentralBank)
        fail(ErrorCode::Authorization, "only the central bank mints");
    require_positive(amount, "mint amount");
    require_party(to, Role::Intermediary, "mint recipient");
    return book_.mint(to, amount);
}

void Settlement::redeem(const PartyId& from, Amount amount)
{
    require_positive(amount, "redeem amount");
    require_party(from, Role::Intermediary, "redeeming party");
    require_backing(from, amount);
    book_.burn(from, amount);
}

Movement Settlement::transfer(const PartyId& from, const PartyId& to, Amount amount)
{
    require_positive(amount, "transfer amount");
    require_party(from, Role::Intermediary, "sender");
    require_party(to, Role::Intermediary, "recipient");
    if (from == to)
        fail(ErrorCode::Validation, "sender and recipient must differ");
    require_backing(from, amount);
    return book_.move(from, to, amount);
}

void Settlement::issue_claim(const PartyId& intermediary, const PartyId& client, Amount amount)
{
    require_positive(amount, "claim amount");
    require_party(intermediary, Role::Intermediary, "intermediary");
    const auto& c = require_party(client, Role::Client, "client");
    if (c.intermediary != intermediary)
        fail(ErrorCode::Validation, "client '" + client + "' is attached to '" + c.intermediary + "'");
    auto total = checked_add(claims_total(intermediary), amount);
    if (total > book_.holding(intermediary))
        fail(ErrorCode::Backing, "claims of " + std::to_string(total) + " would exceed holding of " +
                                     std::to_string(book_.holding(intermediary)));
    claims_[{intermediary, client}] += amount;
    claims_total_[intermediary] = total;
}

void Settlement::retire_claim(const PartyId& intermediary, const PartyId& client, Amount amount)
{
    require_positive(amount, "claim amount");
    require_party(intermediary, Role::Intermediary, "intermediary");
    require_party(client, Role::Client, "client");
    auto have = claim(intermediary, client);
    if (have < amount)
        fail(ErrorCode::Validation, "claim of " + std::to_string(have) + " is smaller than " + std::to_string(amount));
    if (have == amount)
        claims_.erase({intermediary, client});
    else
        claims_[{intermediary, client}] = have - amount;
    claims_total_[intermediary] -= amount;
}

void Settlement::register_asset(const PartyId& issuer, const std::string& asset_id, Amount quantity,
                                const PartyId& initial_holder)
{
    if (asset_id.empty())
        fail(ErrorCode::Validation, "asset id must be non-empty");
    require_positive(quantity, "asset quantity");
    auto* p = policy_.find(issuer);
    if (!p || p->role == Role::Client)
        fail(ErrorCode::Authorization, "asset issuer must be the central bank or an intermediary");
    require_party(initial_holder, Role::Intermediary, "initial holder");
    if (assets_.contains(asset_id))
        fail(ErrorCode::Duplicate, "asset '" + asset_id + "' already registered");
    assets_[asset_id] = Asset{asset_id, issuer, quantity, {{initial_holder, quantity}}};
}

const Asset& Settlement::asset(const std::string& id) const
{
    auto it = assets_.find(id);
    if (it == assets_.end())
        fail(ErrorCode::NotFound, "unknown asset '" + id + "'");
    return it->second;
}

Amount Settlement::asset_holding(const std::string& asset_id, const PartyId& p) const
{
    const auto& a = asset(asset_id);
    auto it = a.holdings.find(p);
    return it == a.holdings.end() ? 0 : it->second;
}

void Settlement::transfer_asset(const PartyId& from, const PartyId& to, const std::string& asset_id, Amount quantity)
{
    require_positive(quantity, "asset quantity");
    require_party(from, Role::Intermediary, "sender");
    require_party(to, Role::Intermediary, "recipient");
    auto& a = assets_.at(asset(asset_id).id);
    auto have = asset_holding(asset_id, from);
    if (have < quantity)
        fail(ErrorCode::InsufficientAsset, "'" + from + "' holds " + std::to_string(have) + " of " + asset_id);
    if (from == to)
        return;
    if (have == quantity)
        a.holdings.erase(from);
    else
        a.holdings[from] = have - quantity;
    a.holdings[to] += quantity;
}

DvpStatus Settlement::dvp_settle(const DvpInstruction& ins, const std::function<void()>& between_legs)
{
    if (ins.instruction_id.empty())
        fail(ErrorCode::Validation, "instruction id must be non-empty");
    if (settled_.contains(ins.instruction_id))
        fail(ErrorCode::Duplicate, "instruction '" + ins.instruction_id + "' already settled");
    require_positive(ins.quantity, "quantity");
    require_positive(ins.price, "price");
    require_party(ins.seller, Role::Intermediary, "seller");
    require_party(ins.buyer, Role::Intermediary, "buyer");
    if (ins.seller == ins.buyer)
        fail(ErrorCode::Validation, "seller and buyer must differ");
    asset(ins.asset_id);

    if (asset_holding(ins.asset_id, ins.seller) < ins.quantity)
        return DvpStatus::InsufficientAsset;
    auto cash = book_.holding(ins.buyer);
    if (cash < ins.price)
        return DvpStatus::InsufficientFunds;
    if (cash - ins.price < claims_total(ins.buyer))
        return DvpStatus::BackingViolation;

    transfer_asset(ins.seller, ins.buyer, ins.asset_id, ins.quantity);
    if (between_legs)
        between_legs();
    book_.move(ins.buyer, ins.seller, ins.price);
    settled_.insert(ins.instruction_id);
    return DvpStatus::Settled;
}

std::optional<std::string> Settlement::check_invariants() const
{
    // Sums use 128-bit accumulators so the check itself cannot overflow.
    unsigned __int128 held = 0;
    for (const auto& [p, a] : book_.totals())
        held += a;
    if (book_.model() == Model::Utxo)
    {
        unsigned __int128 utxo_sum = 0;
        std::map<PartyId, Amount> per_owner;
        for (const auto& [id, u] : book_.utxos())
        {
            if (u.amount == 0)
                return "zero-value utxo " + std::to_string(id);
            utxo_sum += u.amount;
            per_owner[u.owner] += u.amount;
        }
        if (utxo_sum != held || per_owner != book_.totals())
            return std::string("utxo set disagrees with holdings");
    }
    if (book_.total_minted() < book_.total_redeemed() ||
        held != static_cast<unsigned __int128>(book_.total_minted() - book_.total_redeemed()))
        return std::string("conservation: holdings differ from minted - redeemed");
    std::map<PartyId, Amount> per_intermediary;
    for (const auto& [key, amount] : claims_)
        per_intermediary[key.first] += amount;
    for (const auto& [i, total] : per_intermediary)
    {
        if (claims_total(i) != total)
            return "claim totals out of sync for '" + i + "'";
        if (total > book_.holding(i))
            return "backing: '" + i + "' claims " + std::to_string(total) + " exceed holding " +
                   std::to_string(book_.holding(i));
    }
    for (const auto& [id, a] : assets_)
    {
        unsigned __int128 sum = 0;
        for (const auto& [p, q] : a.holdings)
            sum += q;
        if (sum != a.supply)
            return "asset conservation: '" + id + "'";
    }
    return std::nullopt;
}

json Settlement::snapshot() const
{
    json balances = json::object();
    for (const auto& [p, a] : book_.totals())
        balances[p] = a;
    json claims = json::object();
    for (const auto& [key, a] : claims_)
        claims[key.first + "/" + key.second] = a;
    json assets = json::object();
    for (const auto& [id, a] : assets_)
    {
        json holdings = json::object();
        for (const auto& [p, q] : a.holdings)
            holdings[p] = q;
        assets[id] = {{"issuer", a.issuer}, {"supply", a.supply}, {"holdings", holdings}};
    }
    json utxos = json::array();
    for (const auto& [id, u] : book_.utxos())
        utxos.push_back({{"id", id}, {"owner", u.owner}, {"amount", u.amount}});
    return {{"model", model_name(book_.model())},
            {"balances", balances},
            {"total_minted", book_.total_minted()},
            {"total_redeemed", book_.total_redeemed()},
            {"claims", claims},
            {"assets", assets},
            {"utxos", utxos},
            {"settled", settled_}};
}

} // namespace ccl::settlement
