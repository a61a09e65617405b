#include "ccl/common/error.hpp"
#include "ccl/settlement/app.hpp"

#include "../support/checks.hpp"

#include <gtest/gtest.h>

#include <map>

using namespace ccl;
using namespace ccl::settlement;

namespace {

struct Keys
{
    std::map<std::string, crypto::KeyPair> keys;

    const crypto::KeyPair& operator[](const std::string& id)
    {
        if (!keys.contains(id))
            keys.emplace(id, crypto::KeyPair::from_label("party-" + id));
        return keys.at(id);
    }
};

Keys& keys()
{
    static Keys k;
    return k;
}

Policy make_policy(Model model, int banks = 3, int clients_per_bank = 2)
{
    json parties = json::array();
    parties.push_back({{"id", "cb"}, {"role", "CentralBank"}, {"public_key", keys()["cb"].public_key().hex()}});
    for (int b = 0; b < banks; ++b)
    {
        auto bank = "bank" + std::to_string(b);
        parties.push_back({{"id", bank}, {"role", "Intermediary"}, {"public_key", keys()[bank].public_key().hex()}});
        for (int c = 0; c < clients_per_bank; ++c)
        {
            auto client = bank + "-client" + std::to_string(c);
            parties.push_back({{"id", client},
                               {"role", "Client"},
                               {"public_key", keys()[client].public_key().hex()},
                               {"intermediary", bank}});
        }
    }
    return parse_policy({{"model", model == Model::Account ? "account" : "utxo"}, {"parties", parties}});
}

ErrorCode code_of(const std::function<void()>& f)
{
    try
    {
        f();
    }
    catch (const Error& e)
    {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::Io;
}

} // namespace

TEST(Policy, RequiresExactlyOneCentralBank)
{
    auto j = policy_to_json(make_policy(Model::Account));
    j["parties"].push_back({{"id", "cb2"}, {"role", "CentralBank"}, {"public_key", keys()["cb2"].public_key().hex()}});
    EXPECT_EQ(code_of([&] { parse_policy(j); }), ErrorCode::Validation);
}

TEST(Policy, ClientMustAttachToIntermediary)
{
    auto j = policy_to_json(make_policy(Model::Account, 1, 0));
    j["parties"].push_back({{"id", "orphan"},
                            {"role", "Client"},
                            {"public_key", keys()["orphan"].public_key().hex()},
                            {"intermediary", "nobody"}});
    EXPECT_EQ(code_of([&] { parse_policy(j); }), ErrorCode::Validation);
}

TEST(Policy, RoundTrips)
{
    auto p = make_policy(Model::Utxo);
    EXPECT_EQ(parse_policy(policy_to_json(p)), p);
}

TEST(Mint, CreditsIntermediary)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 100);
    EXPECT_EQ(s.holding("bank0"), 100u);
    EXPECT_EQ(s.book().total_minted(), 100u);
}

TEST(Mint, IntermediaryCannotMint)
{
    Settlement s(make_policy(Model::Account));
    EXPECT_EQ(code_of([&] { s.mint("bank0", "bank1", 100); }), ErrorCode::Authorization);
    EXPECT_EQ(code_of([&] { s.mint("cb", "bank1", 0); }), ErrorCode::Validation);
}

TEST(Mint, UtxoModelCreatesOneOutput)
{
    Settlement s(make_policy(Model::Utxo));
    auto m = s.mint("cb", "bank0", 100);
    ASSERT_EQ(m.created.size(), 1u);
    EXPECT_EQ(m.created[0].amount, 100u);
    EXPECT_EQ(s.book().utxos().size(), 1u);
}

TEST(Redeem, ReducesHolding)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 100);
    s.redeem("bank0", 40);
    EXPECT_EQ(s.holding("bank0"), 60u);
    EXPECT_EQ(s.book().total_redeemed(), 40u);
}

TEST(Redeem, BackingViolationRejected)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 100);
    s.issue_claim("bank0", "bank0-client0", 80);
    EXPECT_EQ(code_of([&] { s.redeem("bank0", 30); }), ErrorCode::Backing);
    EXPECT_EQ(s.holding("bank0"), 100u);
    EXPECT_EQ(code_of([&] { s.redeem("bank0", 101); }), ErrorCode::InsufficientFunds);
}

TEST(Transfer, MovesFunds)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 100);
    s.transfer("bank0", "bank1", 30);
    EXPECT_EQ(s.holding("bank0"), 70u);
    EXPECT_EQ(s.holding("bank1"), 30u);
}

TEST(Transfer, UtxoSplitsPaymentAndChange)
{
    Settlement s(make_policy(Model::Utxo));
    auto minted = s.mint("cb", "bank0", 100);
    auto m = s.transfer("bank0", "bank1", 30);
    EXPECT_EQ(m.consumed, std::vector<std::uint64_t>{minted.created[0].id});
    ASSERT_EQ(m.created.size(), 2u);
    EXPECT_EQ(m.created[0].owner, "bank1");
    EXPECT_EQ(m.created[0].amount, 30u);
    EXPECT_EQ(m.created[1].owner, "bank0");
    EXPECT_EQ(m.created[1].amount, 70u);
    EXPECT_FALSE(s.book().utxos().contains(minted.created[0].id));
}

TEST(Transfer, UtxoExactSpendHasNoChange)
{
    Settlement s(make_policy(Model::Utxo));
    s.mint("cb", "bank0", 50);
    s.mint("cb", "bank0", 20);
    auto m = s.transfer("bank0", "bank1", 50);
    EXPECT_EQ(m.consumed.size(), 1u);
    EXPECT_EQ(m.created.size(), 1u);
}

TEST(Transfer, UtxoLargestFirstSelection)
{
    Settlement s(make_policy(Model::Utxo));
    s.mint("cb", "bank0", 5);
    auto big = s.mint("cb", "bank0", 40);
    s.mint("cb", "bank0", 30);
    auto m = s.transfer("bank0", "bank1", 35);
    EXPECT_EQ(m.consumed, std::vector<std::uint64_t>{big.created[0].id});
}

TEST(Claims, BoundaryIsFullBacking)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 100);
    s.issue_claim("bank0", "bank0-client0", 100);
    EXPECT_EQ(code_of([&] { s.issue_claim("bank0", "bank0-client1", 1); }), ErrorCode::Backing);
    EXPECT_EQ(code_of([&] { s.issue_claim("bank0", "ghost", 1); }), ErrorCode::NotFound);
    EXPECT_EQ(code_of([&] { s.issue_claim("bank0", "bank1-client0", 1); }), ErrorCode::Validation);
    EXPECT_EQ(code_of([&] { s.transfer("bank0", "bank1", 1); }), ErrorCode::Backing);
    s.retire_claim("bank0", "bank0-client0", 10);
    s.transfer("bank0", "bank1", 10);
    EXPECT_EQ(s.holding("bank0"), 90u);
}

TEST(Assets, RegisterAndRejectDuplicate)
{
    Settlement s(make_policy(Model::Account));
    s.register_asset("cb", "LTN-2026", 1000, "bank0");
    EXPECT_EQ(s.asset_holding("LTN-2026", "bank0"), 1000u);
    EXPECT_EQ(code_of([&] { s.register_asset("cb", "LTN-2026", 5, "bank1"); }), ErrorCode::Duplicate);
}

TEST(Dvp, SettlesBothLegs)
{
    Settlement s(make_policy(Model::Account));
    s.register_asset("cb", "BOND", 10, "bank0");
    s.mint("cb", "bank1", 500);
    auto st = s.dvp_settle({"i1", "bank0", "bank1", "BOND", 10, 500, false});
    EXPECT_EQ(st, DvpStatus::Settled);
    EXPECT_EQ(s.holding("bank0"), 500u);
    EXPECT_EQ(s.holding("bank1"), 0u);
    EXPECT_EQ(s.asset_holding("BOND", "bank1"), 10u);
    EXPECT_EQ(s.asset_holding("BOND", "bank0"), 0u);
    EXPECT_EQ(code_of([&] { s.dvp_settle({"i1", "bank1", "bank0", "BOND", 1, 1, false}); }), ErrorCode::Duplicate);
}

TEST(Dvp, FailuresLeaveStateUntouched)
{
    Settlement s(make_policy(Model::Utxo));
    s.register_asset("cb", "BOND", 10, "bank0");
    s.mint("cb", "bank1", 499);
    auto before = s.snapshot();
    EXPECT_EQ(s.dvp_settle({"i1", "bank0", "bank1", "BOND", 10, 500, false}), DvpStatus::InsufficientFunds);
    EXPECT_EQ(s.dvp_settle({"i2", "bank0", "bank1", "BOND", 11, 1, false}), DvpStatus::InsufficientAsset);
    s.issue_claim("bank1", "bank1-client0", 400);
    before = s.snapshot();
    EXPECT_EQ(s.dvp_settle({"i3", "bank0", "bank1", "BOND", 1, 100, false}), DvpStatus::BackingViolation);
    EXPECT_EQ(s.snapshot(), before);
}

TEST(SettlementProperty, RandomOpsPreserveInvariantsAfterEveryOp)
{
    auto r = test::check_settlement_invariants(11, 1, 10'000);
    EXPECT_TRUE(r.ok) << r.detail;
}

TEST(SettlementProperty, AccountAndUtxoModelsAgree)
{
    auto r = test::check_dual_model(1000, 1000, 60);
    EXPECT_TRUE(r.ok) << r.detail;
}

TEST(SettlementProperty, CrashBetweenLegsIsVisibleOnlyInMemory)
{
    // The in-memory state after an injected crash is split; callers must discard it.
    Settlement s(make_policy(Model::Account));
    s.register_asset("cb", "BOND", 10, "bank0");
    s.mint("cb", "bank1", 500);
    struct Crash
    {
    };
    EXPECT_THROW(s.dvp_settle({"i1", "bank0", "bank1", "BOND", 10, 500, false}, [] { throw Crash{}; }), Crash);
    EXPECT_EQ(s.asset_holding("BOND", "bank1"), 10u);
    EXPECT_EQ(s.holding("bank1"), 500u);
}

TEST(App, MintRequiresCentralBankSignature)
{
    Settlement s(make_policy(Model::Account));
    auto ok = sign_request("/app/mint", "cb", {{"to", "bank0"}, {"amount", 100}}, keys()["cb"]);
    auto out = execute(s, ok);
    EXPECT_EQ(out.result["holding"], 100);

    auto forged = ok;
    forged.body["amount"] = 1000;
    EXPECT_EQ(code_of([&] { execute(s, forged); }), ErrorCode::Authentication);

    auto by_bank = sign_request("/app/mint", "bank0", {{"to", "bank0"}, {"amount", 5}}, keys()["bank0"]);
    EXPECT_EQ(code_of([&] { execute(s, by_bank); }), ErrorCode::Authorization);
}

TEST(App, RedeemNeedsCentralBankCosignature)
{
    Settlement s(make_policy(Model::Account));
    execute(s, sign_request("/app/mint", "cb", {{"to", "bank0"}, {"amount", 100}}, keys()["cb"]));
    json body = {{"from", "bank0"}, {"amount", 40}};
    EXPECT_EQ(code_of([&] { execute(s, sign_request("/app/redeem", "bank0", body, keys()["bank0"])); }),
              ErrorCode::Authentication);
    body["cb_signature"] = crypto::signature_hex(keys()["cb"].sign(as_view(cosign_bytes("/app/redeem", body, "cb_signature"))));
    execute(s, sign_request("/app/redeem", "bank0", body, keys()["bank0"]));
    EXPECT_EQ(s.holding("bank0"), 60u);
}

TEST(App, DvpNeedsBuyerCosignature)
{
    Settlement s(make_policy(Model::Account));
    s.register_asset("cb", "BOND", 10, "bank0");
    s.mint("cb", "bank1", 500);
    json body = {{"instruction_id", "x"}, {"buyer", "bank1"}, {"asset_id", "BOND"},
                 {"quantity", 10},        {"price", 500},     {"private", true}};
    body["buyer_signature"] =
        crypto::signature_hex(keys()["bank1"].sign(as_view(cosign_bytes("/app/dvp", body, "buyer_signature"))));
    auto out = execute(s, sign_request("/app/dvp", "bank0", body, keys()["bank0"]));
    EXPECT_EQ(out.result["status"], "Settled");
    EXPECT_TRUE(out.private_payload);
    EXPECT_EQ(out.parties, (std::vector<PartyId>{"bank0", "bank1"}));
}

TEST(App, BalanceReadableByOwnerAndCentralBankOnly)
{
    Settlement s(make_policy(Model::Account));
    s.mint("cb", "bank0", 7);
    auto own = query(s, sign_request("/app/balance", "bank0", {{"party", "bank0"}}, keys()["bank0"]));
    EXPECT_EQ(own["holding"], 7);
    EXPECT_EQ(query(s, sign_request("/app/balance", "cb", {{"party", "bank0"}}, keys()["cb"]))["holding"], 7);
    EXPECT_EQ(code_of([&] { query(s, sign_request("/app/balance", "bank1", {{"party", "bank0"}}, keys()["bank1"])); }),
              ErrorCode::Authorization);
}
