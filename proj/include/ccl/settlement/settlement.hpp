#pragma once

#include "ccl/crypto/crypto.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace ccl::settlement {

using Amount = std::uint64_t;
using PartyId = std::string;
using nlohmann::json;

enum class Role
{
    CentralBank,
    Intermediary,
    Client,
};

enum class Model
{
    Account,
    Utxo,
};

std::string_view role_name(Role r);
std::string_view model_name(Model m);

struct Party
{
    PartyId id;
    Role role = Role::Intermediary;
    crypto::PublicKey public_key;
    /// Set for clients only.
    PartyId intermediary;

    bool operator==(const Party&) const = default;
};

/// Application policy registered through governance:
/// {"model": "account"|"utxo", "parties": [{"id", "role", "public_key", "intermediary"?}]}
struct Policy
{
    Model model = Model::Account;
    std::map<PartyId, Party> parties;

    const Party& central_bank() const;
    const Party* find(const PartyId& id) const;
    bool operator==(const Policy&) const = default;
};

/// Throws Error(Validation) on any structural problem.
Policy parse_policy(const json& j);
json policy_to_json(const Policy& p);
/// A later policy may add parties but not change the model or existing parties.
void check_policy_extends(const Policy& current, const Policy& next);

struct Utxo
{
    std::uint64_t id = 0;
    PartyId owner;
    Amount amount = 0;

    bool operator==(const Utxo&) const = default;
};

struct Movement
{
    std::vector<std::uint64_t> consumed;
    std::vector<Utxo> created;
};

/// Wholesale CBDC holdings in either model.
class CbdcBook
{
  public:
    explicit CbdcBook(Model model) : model_(model) {}

    Model model() const { return model_; }
    Amount holding(const PartyId& p) const;
    std::map<PartyId, Amount> totals() const;
    Amount total_minted() const { return total_minted_; }
    Amount total_redeemed() const { return total_redeemed_; }
    const std::map<std::uint64_t, Utxo>& utxos() const { return utxos_; }

    Movement mint(const PartyId& to, Amount amount);
    /// Callers check sufficiency first; throws InsufficientFunds otherwise.
    Movement burn(const PartyId& from, Amount amount);
    Movement move(const PartyId& from, const PartyId& to, Amount amount);

    bool operator==(const CbdcBook&) const = default;

  private:
    void credit(const PartyId& to, Amount amount, Movement& m);
    void debit(const PartyId& from, Amount amount, Movement& m);

    Model model_;
    std::map<PartyId, Amount> accounts_;
    std::map<std::uint64_t, Utxo> utxos_;
    /// Per owner: (amount, utxo id), iterated largest first.
    std::map<PartyId, std::set<std::pair<Amount, std::uint64_t>>> by_owner_;
    std::uint64_t next_utxo_ = 1;
    Amount total_minted_ = 0;
    Amount total_redeemed_ = 0;
};

struct Asset
{
    std::string id;
    PartyId issuer;
    Amount supply = 0;
    std::map<PartyId, Amount> holdings;

    bool operator==(const Asset&) const = default;
};

struct DvpInstruction
{
    std::string instruction_id;
    PartyId seller;
    PartyId buyer;
    std::string asset_id;
    Amount quantity = 0;
    Amount price = 0;
    bool private_payload = false;
};

enum class DvpStatus
{
    Settled,
    InsufficientAsset,
    InsufficientFunds,
    BackingViolation,
};

std::string_view dvp_status_name(DvpStatus s);

/// Settlement state. Every operation validates fully before mutating, so a
/// thrown Error leaves the state unchanged.
class Settlement
{
  public:
    explicit Settlement(Policy policy);

    const Policy& policy() const { return policy_; }
    void update_policy(Policy next);
    const CbdcBook& book() const { return book_; }

    Movement mint(const PartyId& issuer, const PartyId& to, Amount amount);
    void redeem(const PartyId& from, Amount amount);
    Movement transfer(const PartyId& from, const PartyId& to, Amount amount);
    void issue_claim(const PartyId& intermediary, const PartyId& client, Amount amount);
    void retire_claim(const PartyId& intermediary, const PartyId& client, Amount amount);
    void register_asset(const PartyId& issuer, const std::string& asset_id, Amount quantity,
                        const PartyId& initial_holder);
    void transfer_asset(const PartyId& from, const PartyId& to, const std::string& asset_id, Amount quantity);
    /// `between_legs` runs after the asset leg and before the cash leg; used for crash injection.
    DvpStatus dvp_settle(const DvpInstruction& ins, const std::function<void()>& between_legs = {});

    Amount holding(const PartyId& p) const { return book_.holding(p); }
    Amount claims_total(const PartyId& intermediary) const;
    Amount claim(const PartyId& intermediary, const PartyId& client) const;
    const std::map<std::string, Asset>& assets() const { return assets_; }
    const Asset& asset(const std::string& id) const;
    Amount asset_holding(const std::string& asset_id, const PartyId& p) const;
    bool settled(const std::string& instruction_id) const { return settled_.contains(instruction_id); }

    /// Returns a description of the first violated invariant, if any.
    std::optional<std::string> check_invariants() const;
    json snapshot() const;

  private:
    const Party& require_party(const PartyId& id, Role role, const char* what) const;
    void require_backing(const PartyId& intermediary, Amount outgoing) const;

    Policy policy_;
    CbdcBook book_;
    std::map<std::pair<PartyId, PartyId>, Amount> claims_;
    std::map<PartyId, Amount> claims_total_;
    std::map<std::string, Asset> assets_;
    std::set<std::string> settled_;
};

} // namespace ccl::settlement
