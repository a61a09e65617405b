#include "checks.hpp"
#include "consortium.hpp"
#include "temp_dir.hpp"

#include "ccl/common/signing.hpp"
#include "ccl/consensus/sim.hpp"
#include "ccl/ledger/ledger.hpp"
#include "ccl/ledger/receipt.hpp"
#include "ccl/node/core.hpp"
#include "ccl/settlement/app.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <sstream>
#include <thread>

namespace ccl::test {

using namespace std::chrono_literals;
namespace fs = std::filesystem;

namespace {

std::string fmt(const char* label, std::uint64_t v) { return std::string(label) + "=" + std::to_string(v); }

} // namespace

// ---------------------------------------------------------------- consensus

ConsensusSummary check_consensus_traces(std::uint64_t first_seed, std::size_t traces, std::size_t proposals)
{
    ConsensusSummary out;
    consensus::SimOptions opts;
    const std::uint64_t bound = 20 * opts.election_timeout_max;
    std::size_t violating = 0, multi_leader = 0, lost = 0, divergent = 0, incomplete = 0, slow = 0;
    std::uint64_t worst_liveness = 0;
    std::string first_problem;
    auto note = [&](std::uint64_t seed, const std::string& what) {
        if (first_problem.empty())
            first_problem = "seed " + std::to_string(seed) + ": " + what;
    };
    for (std::uint64_t seed = first_seed; seed < first_seed + traces; ++seed)
    {
        auto plan = consensus::generate_fault_plan(seed, 5, proposals);
        auto o = opts;
        o.liveness_probe_tick = plan.faults_end;
        auto t = consensus::run_simulation(5, plan.net, plan.workload, plan.faults_end + 3000, o);

        if (!t.violations.empty())
        {
            ++violating;
            note(seed, t.violations.front());
        }
        // At most one leader per term, from the raw event stream.
        std::map<std::uint64_t, std::set<std::string>> leaders;
        for (const auto& e : t.events)
            if (e.type == "leader")
                leaders[std::stoull(e.detail.substr(e.detail.find(' ') + 1))].insert(e.node);
        for (const auto& [term, who] : leaders)
            if (who.size() > 1)
            {
                ++multi_leader;
                note(seed, "term " + std::to_string(term) + " had " + std::to_string(who.size()) + " leaders");
            }
        // Committed entries are present, unchanged, on every node whose commit point covers them.
        bool trace_lost = false;
        for (const auto& n : t.nodes)
            for (const auto& [index, record] : t.committed)
                if (n.commit_index >= index && (n.log.size() < index || !(n.log[index - 1] == record)))
                    trace_lost = true;
        if (trace_lost)
        {
            ++lost;
            note(seed, "committed entry missing or changed on a node");
        }
        // Applied sequences are prefixes of one another.
        bool trace_divergent = false;
        for (const auto& a : t.nodes)
            for (const auto& b : t.nodes)
            {
                auto n = std::min(a.applied.size(), b.applied.size());
                if (!std::equal(a.applied.begin(), a.applied.begin() + static_cast<std::ptrdiff_t>(n), b.applied.begin()))
                    trace_divergent = true;
            }
        if (trace_divergent)
        {
            ++divergent;
            note(seed, "applied sequences diverge");
        }
        // Every proposal plus the probe is eventually committed exactly once.
        if (t.committed_commands() != proposals + 1)
        {
            ++incomplete;
            note(seed, "committed " + std::to_string(t.committed_commands()) + " of " + std::to_string(proposals + 1));
        }
        if (t.timed_out || !t.liveness_ticks || *t.liveness_ticks > bound)
        {
            ++slow;
            if (out.liveness.detail.empty())
                out.liveness.detail = "seed " + std::to_string(seed) + ": probe " +
                                      (t.liveness_ticks ? "took " + std::to_string(*t.liveness_ticks) + " ticks"
                                                        : std::string("never committed"));
        }
        else
            worst_liveness = std::max(worst_liveness, *t.liveness_ticks);
    }
    out.safety.ok = violating + multi_leader + lost + divergent + incomplete == 0;
    out.safety.detail = fmt("traces", traces) + " " + fmt("violations", violating) + " " +
                        fmt("multi_leader_terms", multi_leader) + " " + fmt("lost", lost) + " " +
                        fmt("divergent", divergent) + " " + fmt("incomplete", incomplete) +
                        (first_problem.empty() ? "" : " first: " + first_problem);
    out.liveness.ok = slow == 0;
    out.liveness.detail = fmt("traces", traces) + " " + fmt("over_bound", slow) + " " +
                          fmt("worst_ticks", worst_liveness) + " " + fmt("bound_ticks", bound) +
                          (out.liveness.detail.empty() ? "" : " first: " + out.liveness.detail);
    return out;
}

// ---------------------------------------------------------------- ledger

CheckResult check_ledger_tamper(const fs::path& dir, std::size_t entries, std::size_t bit_flips, std::uint64_t seed)
{
    CheckResult out;
    auto service = crypto::KeyPair::from_label("tamper-service");
    auto path = dir / ("tamper-" + std::to_string(seed) + ".bin");
    fs::remove(path);
    {
        auto l = ledger::Ledger::create(path);
        l.set_signer(service);
        l.set_data_key(crypto::kdf(as_view(to_bytes("tamper-check-root-secret-0123456")), as_view(to_bytes("data"))));
        for (std::size_t i = 0; i < entries; ++i)
            l.append(ledger::EntryKind::App, i % 3 ? ledger::Privacy::Public : ledger::Privacy::Private,
                     as_view(to_bytes("entry-" + std::to_string(i))));
        l.sign();
    }
    auto honest = ledger::read_file(path);
    auto clean = ledger::verify_chain_bytes(as_view(honest), service.public_key());
    if (!clean.ok())
        return {false, "untouched ledger failed: " + clean.detail};

    auto scan = ledger::scan_frames(as_view(honest));
    std::mt19937_64 rng(seed);
    std::size_t detected = 0;
    std::string first_miss;
    for (std::size_t trial = 0; trial < bit_flips; ++trial)
    {
        auto seq = rng() % scan.entries.size();
        auto begin = scan.offsets[seq] + 4;
        auto end = seq + 1 < scan.offsets.size() ? scan.offsets[seq + 1] : honest.size();
        auto pos = begin + rng() % (end - begin);
        auto bit = static_cast<std::uint8_t>(1u << (rng() % 8));
        honest[pos] ^= bit;
        auto v = ledger::verify_chain_bytes(as_view(honest), service.public_key());
        honest[pos] ^= bit;
        if (v.status == ledger::ChainVerdict::Status::FirstBadSeqno && v.seqno == seq)
            ++detected;
        else if (first_miss.empty())
            first_miss = "flip in seqno " + std::to_string(seq) + " reported " +
                         (v.seqno ? std::to_string(*v.seqno) : std::string("nothing"));
    }

    // Receipts: every byte of the digest, path, root and signature fields, every nonzero delta.
    std::size_t mutations = 0, accepted = 0;
    bool honest_receipts = true;
    {
        auto l = ledger::Ledger::open(path);
        for (auto target : {std::uint64_t{0}, static_cast<std::uint64_t>(entries / 2 + 1), static_cast<std::uint64_t>(entries - 1)})
        {
            auto r = l.get_receipt(target);
            honest_receipts &= ledger::verify_receipt(r, service.public_key());
            auto enc = ledger::encode_receipt(r);
            // seqno(8) precedes the digest; the trailing 32 bytes are the identity.
            const std::size_t first = 8, last = enc.size() - 32;
            // The middle receipt gets every delta, the others single-bit flips.
            bool exhaustive = target == entries / 2 + 1;
            for (std::size_t pos = first; pos < last; ++pos)
                for (unsigned d = 1; d < 256; ++d)
                {
                    if (!exhaustive && (d & (d - 1)) != 0)
                        continue;
                    auto m = enc;
                    m[pos] ^= static_cast<std::uint8_t>(d);
                    ++mutations;
                    try
                    {
                        accepted += ledger::verify_receipt(ledger::decode_receipt(as_view(m)), service.public_key());
                    }
                    catch (const Error&)
                    {
                    }
                }
        }
    }
    out.ok = detected == bit_flips && accepted == 0 && honest_receipts;
    out.detail = fmt("entries", entries) + " untouched=ok " + fmt("flips_detected_at_seqno", detected) + "/" +
                 std::to_string(bit_flips) + " " + fmt("receipt_mutations", mutations) + " " +
                 fmt("accepted", accepted) + (honest_receipts ? "" : " honest receipt FAILED") +
                 (first_miss.empty() ? "" : " first miss: " + first_miss);
    return out;
}

// ---------------------------------------------------------------- governance

std::optional<std::string> audit_outcomes(const std::vector<json>& records)
{
    std::map<std::string, bool> active;
    std::map<std::uint64_t, std::map<std::string, std::string>> ballots;
    std::map<std::uint64_t, json> actions;
    std::uint64_t num = 1, den = 2;
    for (const auto& r : records)
    {
        auto type = r["type"].get<std::string>();
        if (type == "genesis")
        {
            for (const auto& m : r["members"])
                active[m["id"]] = true;
            num = r["constitution"]["resolve"]["numerator"];
            den = r["constitution"]["resolve"]["denominator"];
        }
        else if (type == "proposal")
            actions[r["proposal_id"]] = r["action"];
        else if (type == "ballot")
            ballots[r["proposal_id"]][r["member"]] = r["ballot"];
        else if (type == "outcome")
        {
            std::uint64_t id = r["proposal_id"];
            std::uint64_t yes = 0, n_active = 0;
            for (const auto& [m, a] : active)
                n_active += a;
            for (const auto& [m, b] : ballots[id])
                if (active[m] && b == "yes")
                    ++yes;
            if (r["state"] == "Applied")
            {
                if (yes * den <= n_active * num)
                    return "proposal " + std::to_string(id) + " applied with " + std::to_string(yes) + " of " +
                           std::to_string(n_active) + " yes";
                const auto& a = actions[id];
                if (a["kind"] == "AddMember")
                    active[a["args"]["member_id"]] = true;
                if (a["kind"] == "RetireMember")
                    active[a["args"]["member_id"]] = false;
                if (a["kind"] == "SetConstitution")
                {
                    num = a["args"]["resolve"]["numerator"];
                    den = a["args"]["resolve"]["denominator"];
                }
            }
        }
    }
    return std::nullopt;
}

CheckResult check_governance_replay(std::uint64_t first_seed, std::size_t workloads, std::size_t actions)
{
    std::size_t mismatched = 0, bad_outcomes = 0, applied = 0;
    std::string first_problem;
    for (std::uint64_t seed = first_seed; seed < first_seed + workloads; ++seed)
    {
        std::mt19937_64 rng(seed);
        Consortium c(3);
        int next_member = 3;
        for (std::size_t action = 0; action < actions; ++action)
        {
            std::vector<std::string> members, active;
            for (const auto& [id, m] : c.gov.members())
            {
                members.push_back(id);
                if (m.status == MemberStatus::Active)
                    active.push_back(id);
            }
            std::vector<ProposalId> pending;
            for (const auto& [id, p] : c.gov.proposals())
                if (p.state == ProposalState::Pending)
                    pending.push_back(id);
            // Mostly active members act; occasionally a retired one tries.
            auto who = rng() % 20 == 0 || active.empty() ? members[rng() % members.size()] : active[rng() % active.size()];
            try
            {
                auto roll = rng() % 11;
                if (roll < 6 && !pending.empty())
                    c.vote(who, pending[rng() % pending.size()], rng() % 4 == 0 ? Ballot::No : Ballot::Yes);
                else if (roll < 7)
                    c.propose(who, c.add_member("m" + std::to_string(next_member++)));
                else if (roll < 8 && rng() % 2 == 0)
                    c.propose(who, {ActionKind::RetireMember, {{"member_id", members[rng() % members.size()]}}});
                else if (roll < 9)
                {
                    Hash256 h{};
                    h.bytes[0] = static_cast<std::uint8_t>(rng());
                    c.propose(who, {ActionKind::AddTrustedMeasurement, {{"measurement", h.hex()}}});
                }
                else if (roll < 10)
                {
                    auto den = 2 + rng() % 4;
                    c.propose(who, {ActionKind::SetConstitution,
                                    {{"resolve", {{"numerator", rng() % den}, {"denominator", den}}}}});
                }
                else
                    c.propose(who, {ActionKind::TransitionServiceToOpen, json::object()});
            }
            catch (const Error&)
            {
            }
        }
        auto rebuilt = Governance::replay(c.ledger);
        if (rebuilt.snapshot() != c.gov.snapshot())
        {
            ++mismatched;
            if (first_problem.empty())
                first_problem = "seed " + std::to_string(seed) + ": replayed state differs";
        }
        if (auto bad = audit_outcomes(c.ledger))
        {
            ++bad_outcomes;
            if (first_problem.empty())
                first_problem = "seed " + std::to_string(seed) + ": " + *bad;
        }
        applied += std::count_if(c.ledger.begin(), c.ledger.end(),
                                 [](const json& r) { return r["type"] == "outcome" && r["state"] == "Applied"; });
    }
    CheckResult out;
    out.ok = mismatched == 0 && bad_outcomes == 0 && applied > 0;
    out.detail = fmt("workloads", workloads) + " " + fmt("actions_each", actions) + " " + fmt("replay_mismatch", mismatched) +
                 " " + fmt("bad_outcomes", bad_outcomes) + " " + fmt("applied_proposals", applied) +
                 (first_problem.empty() ? "" : " first: " + first_problem);
    return out;
}

// ---------------------------------------------------------------- settlement

const crypto::KeyPair& party_key(const std::string& id)
{
    static std::map<std::string, crypto::KeyPair> keys;
    static std::mutex mu;
    std::lock_guard lock(mu);
    if (!keys.contains(id))
        keys.emplace(id, crypto::KeyPair::from_label("party-" + id));
    return keys.at(id);
}

settlement::Policy test_policy(settlement::Model model, int banks, int clients_per_bank)
{
    json parties = json::array();
    parties.push_back({{"id", "cb"}, {"role", "CentralBank"}, {"public_key", party_key("cb").public_key().hex()}});
    for (int b = 0; b < banks; ++b)
    {
        auto bank = "bank" + std::to_string(b);
        parties.push_back({{"id", bank}, {"role", "Intermediary"}, {"public_key", party_key(bank).public_key().hex()}});
        for (int c = 0; c < clients_per_bank; ++c)
        {
            auto client = bank + "-client" + std::to_string(c);
            parties.push_back({{"id", client},
                               {"role", "Client"},
                               {"public_key", party_key(client).public_key().hex()},
                               {"intermediary", bank}});
        }
    }
    return settlement::parse_policy({{"model", model == settlement::Model::Account ? "account" : "utxo"}, {"parties", parties}});
}

namespace {

// Plain integer maps, no UTXO logic.
struct Reference
{
    std::map<std::string, long long> held;
    std::map<std::string, long long> claims_by_bank;
    std::map<std::string, long long> asset_supply;
    long long minted = 0, redeemed = 0;
};

std::optional<std::string> compare(const settlement::Settlement& s, const Reference& o)
{
    for (const auto& [p, a] : o.held)
        if (s.holding(p) != static_cast<settlement::Amount>(a))
            return "holding of " + p + " is " + std::to_string(s.holding(p)) + ", expected " + std::to_string(a);
    long long sum = 0;
    for (const auto& [p, a] : s.book().totals())
        sum += static_cast<long long>(a);
    if (sum != o.minted - o.redeemed)
        return "sum of holdings " + std::to_string(sum) + " != minted - redeemed " + std::to_string(o.minted - o.redeemed);
    for (const auto& [bank, c] : o.claims_by_bank)
    {
        if (s.claims_total(bank) != static_cast<settlement::Amount>(c))
            return "claims of " + bank + " differ";
        if (s.claims_total(bank) > s.holding(bank))
            return "claims of " + bank + " exceed its holding";
    }
    for (const auto& [id, supply] : o.asset_supply)
    {
        long long total = 0;
        for (const auto& [p, q] : s.asset(id).holdings)
            total += static_cast<long long>(q);
        if (total != supply)
            return "asset " + id + " holdings sum " + std::to_string(total) + " != supply " + std::to_string(supply);
    }
    return std::nullopt;
}

} // namespace

CheckResult check_settlement_invariants(std::uint64_t first_seed, std::size_t sequences, std::size_t ops)
{
    std::size_t failures = 0, accepted = 0, total = 0;
    std::string first_problem;
    for (std::uint64_t seq = 0; seq < sequences; ++seq)
        for (auto model : {settlement::Model::Account, settlement::Model::Utxo})
        {
            std::mt19937_64 rng(first_seed + seq * 2 + (model == settlement::Model::Utxo));
            settlement::Settlement s(test_policy(model, 4, 2));
            Reference o;
            std::vector<std::string> banks{"bank0", "bank1", "bank2", "bank3"};
            std::vector<std::string> assets;
            std::optional<std::string> problem;
            for (std::size_t op = 0; op < ops && !problem; ++op)
            {
                auto bank = banks[rng() % banks.size()];
                auto other = banks[rng() % banks.size()];
                auto client = bank + "-client" + std::to_string(rng() % 2);
                settlement::Amount amount = 1 + rng() % 200;
                auto kind = rng() % 8;
                ++total;
                try
                {
                    switch (kind)
                    {
                    case 0:
                        s.mint("cb", bank, amount);
                        o.held[bank] += static_cast<long long>(amount);
                        o.minted += static_cast<long long>(amount);
                        break;
                    case 1:
                        s.redeem(bank, amount);
                        o.held[bank] -= static_cast<long long>(amount);
                        o.redeemed += static_cast<long long>(amount);
                        break;
                    case 2:
                    case 3:
                        s.transfer(bank, other, amount);
                        o.held[bank] -= static_cast<long long>(amount);
                        o.held[other] += static_cast<long long>(amount);
                        break;
                    case 4:
                        s.issue_claim(bank, client, amount);
                        o.claims_by_bank[bank] += static_cast<long long>(amount);
                        break;
                    case 5:
                        s.retire_claim(bank, client, amount);
                        o.claims_by_bank[bank] -= static_cast<long long>(amount);
                        break;
                    case 6: {
                        auto id = "A" + std::to_string(op);
                        s.register_asset("cb", id, amount, bank);
                        assets.push_back(id);
                        o.asset_supply[id] = static_cast<long long>(amount);
                        break;
                    }
                    default:
                        if (assets.empty())
                            continue;
                        auto id = assets[rng() % assets.size()];
                        auto st = s.dvp_settle({"d" + std::to_string(op), bank, other, id, 1 + rng() % 20, amount, false});
                        if (st == settlement::DvpStatus::Settled)
                        {
                            o.held[other] -= static_cast<long long>(amount);
                            o.held[bank] += static_cast<long long>(amount);
                        }
                    }
                    ++accepted;
                }
                catch (const Error&)
                {
                }
                if (auto v = s.check_invariants())
                    problem = *v;
                else
                    problem = compare(s, o);
                if (problem)
                    *problem += " after op " + std::to_string(op);
            }
            if (problem)
            {
                ++failures;
                if (first_problem.empty())
                    first_problem = *problem;
            }
        }
    CheckResult out;
    out.ok = failures == 0 && accepted > total / 4;
    out.detail = fmt("sequences", sequences * 2) + " " + fmt("ops_each", ops) + " " + fmt("accepted_ops", accepted) + " " +
                 fmt("failing_sequences", failures) + (first_problem.empty() ? "" : " first: " + first_problem);
    return out;
}

CheckResult check_dual_model(std::uint64_t first_seed, std::size_t sequences, std::size_t ops)
{
    std::size_t mismatched = 0;
    std::string first_problem;
    for (std::uint64_t seq = 0; seq < sequences; ++seq)
    {
        std::mt19937_64 rng(first_seed + seq);
        settlement::Settlement acct(test_policy(settlement::Model::Account, 3, 1));
        settlement::Settlement utxo(test_policy(settlement::Model::Utxo, 3, 1));
        std::optional<std::string> problem;
        for (std::size_t op = 0; op < ops && !problem; ++op)
        {
            auto from = "bank" + std::to_string(rng() % 3);
            auto to = "bank" + std::to_string(rng() % 3);
            settlement::Amount amount = 1 + rng() % 100;
            auto kind = rng() % 4;
            auto run = [&](settlement::Settlement& s) -> bool {
                try
                {
                    if (kind == 0)
                        s.mint("cb", to, amount);
                    else if (kind == 1)
                        s.redeem(from, amount);
                    else
                        s.transfer(from, to, amount);
                    return true;
                }
                catch (const Error&)
                {
                    return false;
                }
            };
            if (run(acct) != run(utxo))
                problem = "op " + std::to_string(op) + " accepted by only one model";
        }
        if (!problem && acct.book().totals() != utxo.book().totals())
            problem = "final per-party totals differ";
        if (!problem && utxo.check_invariants())
            problem = *utxo.check_invariants();
        if (problem)
        {
            ++mismatched;
            if (first_problem.empty())
                first_problem = "sequence " + std::to_string(seq) + ": " + *problem;
        }
    }
    return {mismatched == 0, fmt("sequences", sequences) + " " + fmt("ops_each", ops) + " " +
                                 fmt("mismatched", mismatched) + (first_problem.empty() ? "" : " first: " + first_problem)};
}

// ---------------------------------------------------------------- DvP crashes

namespace {

struct Crash
{
};

// Drives a single NodeCore directly so crash points are exact.
struct CoreHarness
{
    TempDir dir;
    node::Secrets secrets = node::Secrets::generate();
    std::map<std::string, crypto::KeyPair> keys;
    std::uint64_t now = 0;
    std::unique_ptr<node::NodeCore> core;
    std::function<void(node::CrashPoint)> hook;

    crypto::KeyPair& key(const std::string& id)
    {
        if (!keys.contains(id))
            keys.emplace(id, crypto::KeyPair::from_label("core:" + id));
        return keys.at(id);
    }

    node::CoreOptions options(bool recover)
    {
        node::CoreOptions o;
        o.ledger_path = dir / "ledger.bin";
        o.data_dir = dir / "state";
        o.secrets = secrets;
        o.recover = recover;
        o.raft.id = "n0";
        o.raft.bootstrap_members = {"n0"};
        o.raft.seed = 5;
        o.crash_hook = [this](node::CrashPoint p) {
            if (hook)
                hook(p);
        };
        return o;
    }

    void boot(bool recover)
    {
        core = std::make_unique<node::NodeCore>(options(recover));
        while (core->raft().role() != consensus::Role::Leader)
            core->tick(++now);
    }

    node::ApplyResult run(const json& cmd)
    {
        auto index = core->propose(cmd);
        for (auto& r : core->apply_committed())
            if (r.index == index)
                return r;
        throw std::runtime_error("command not applied");
    }

    json app(const std::string& signer, const std::string& path, const json& body)
    {
        auto sig = key(signer).sign(as_view(request_signing_bytes(path, body)));
        return {{"type", "app"}, {"path", path}, {"signer", signer}, {"body", body}, {"signature", crypto::signature_hex(sig)}};
    }

    void must(const node::ApplyResult& r)
    {
        if (!r.ok)
            throw std::runtime_error("setup command failed: " + r.message);
    }

    void pass(const governance::Action& a)
    {
        auto sig = key("m0").sign(as_view(governance::proposal_signing_bytes(a)));
        auto r = run({{"type", "gov_propose"}, {"signer", "m0"}, {"action", governance::action_to_json(a)},
                      {"signature", crypto::signature_hex(sig)}});
        must(r);
        if (r.result["state"] == "Applied")
            return;
        auto id = r.result["proposal_id"].get<std::uint64_t>();
        auto bsig = key("m0").sign(as_view(governance::ballot_signing_bytes(id, governance::Ballot::Yes)));
        must(run({{"type", "gov_vote"}, {"signer", "m0"}, {"proposal_id", id}, {"ballot", "yes"},
                  {"signature", crypto::signature_hex(bsig)}}));
    }

    void setup()
    {
        boot(false);
        governance::Genesis g;
        g.members = {{"m0", key("m0").public_key(), governance::MemberStatus::Active}};
        g.service_identity = secrets.service_key().public_key();
        auto platform = enclave::Platform::from_label("p", "p");
        auto m = enclave::measure(as_view(to_bytes("code")));
        g.trusted_measurements = {m};
        g.trusted_platforms = {{"p", platform.public_key()}};
        g.first_node = {"n0", key("op").public_key(), m, "p", "n0.local:1", "n0.local:2"};
        must(run({{"type", "genesis"}, {"genesis", governance::genesis_to_json(g)}}));
        json parties = json::array();
        parties.push_back({{"id", "cb"}, {"role", "CentralBank"}, {"public_key", key("cb").public_key().hex()}});
        for (auto b : {"seller", "buyer"})
            parties.push_back({{"id", b}, {"role", "Intermediary"}, {"public_key", key(b).public_key().hex()}});
        pass({governance::ActionKind::RegisterAppPolicy, {{"policy", {{"model", "account"}, {"parties", parties}}}}});
        pass({governance::ActionKind::TransitionServiceToOpen, json::object()});
        must(run(app("cb", "/app/mint", {{"to", "buyer"}, {"amount", 1'000'000}})));
        must(run(app("seller", "/app/assets/register", {{"asset_id", "BOND"}, {"quantity", 1000}, {"holder", "seller"}})));
    }

    json dvp(int i)
    {
        json body = {{"instruction_id", "dvp-" + std::to_string(i)}, {"buyer", "buyer"}, {"asset_id", "BOND"},
                     {"quantity", 3}, {"price", 70}, {"private", i % 2 == 0}};
        body["buyer_signature"] =
            crypto::signature_hex(key("buyer").sign(as_view(settlement::cosign_bytes("/app/dvp", body, "buyer_signature"))));
        return app("seller", "/app/dvp", body);
    }
};

// Every settled instruction moved exactly 3 BOND and 70 cash; nothing else moved.
std::optional<std::string> half_dvp(const node::NodeCore& core, int instructions)
{
    const auto* s = core.settlement();
    if (!s)
        return "no settlement state";
    settlement::Amount settled = 0;
    for (int i = 0; i < instructions; ++i)
        settled += s->settled("dvp-" + std::to_string(i));
    if (s->asset_holding("BOND", "buyer") != 3 * settled || s->asset_holding("BOND", "seller") != 1000 - 3 * settled)
        return "asset leg disagrees with " + std::to_string(settled) + " settled instructions";
    if (s->holding("buyer") != 1'000'000 - 70 * settled || s->holding("seller") != 70 * settled)
        return "cash leg disagrees with " + std::to_string(settled) + " settled instructions";
    if (auto v = s->check_invariants())
        return *v;
    return std::nullopt;
}

} // namespace

CheckResult check_dvp_crashes(std::uint64_t first_seed, std::size_t crash_points)
{
    constexpr int kInstructions = 10;
    std::size_t crashes = 0, half = 0, unfinished = 0, chain_bad = 0;
    std::string first_problem;
    for (std::uint64_t seed = first_seed; seed < first_seed + crash_points; ++seed)
    {
        CoreHarness h;
        h.setup();
        std::mt19937_64 rng(seed);
        // Five hook invocations per applied DvP record; pick one in the workload.
        auto crash_after = static_cast<int>(rng() % (5 * kInstructions));
        int calls = 0;
        h.hook = [&](node::CrashPoint) {
            if (calls++ == crash_after)
                throw Crash{};
        };
        try
        {
            for (int i = 0; i < kInstructions; ++i)
                h.run(h.dvp(i));
        }
        catch (const Crash&)
        {
            ++crashes;
        }
        h.hook = nullptr;
        h.core.reset();
        h.boot(true);
        auto problem = half_dvp(*h.core, kInstructions);
        if (!problem)
        {
            h.core->apply_committed();
            for (int i = 0; i < kInstructions; ++i)
                if (!h.core->settlement()->settled("dvp-" + std::to_string(i)))
                    h.run(h.dvp(i));
            problem = half_dvp(*h.core, kInstructions);
            if (!problem && h.core->settlement()->asset_holding("BOND", "buyer") != 3 * kInstructions)
            {
                ++unfinished;
                problem = "instructions missing after resubmission";
            }
        }
        else
            ++half;
        auto verdict = ledger::verify_chain(h.dir / "ledger.bin", h.secrets.service_key().public_key());
        if (!verdict.ok())
        {
            ++chain_bad;
            problem = problem.value_or("verify_chain: " + verdict.detail);
        }
        if (problem && first_problem.empty())
            first_problem = "seed " + std::to_string(seed) + ": " + *problem;
    }
    CheckResult out;
    out.ok = crashes == crash_points && half == 0 && unfinished == 0 && chain_bad == 0 && first_problem.empty();
    out.detail = fmt("crash_points", crash_points) + " " + fmt("crashes_fired", crashes) + " " + fmt("half_applied", half) +
                 " " + fmt("chain_failures", chain_bad) + (first_problem.empty() ? "" : " first: " + first_problem);
    return out;
}

// ---------------------------------------------------------------- node level

CheckResult check_privacy(const fs::path& dir, std::size_t private_writes, bool confidential)
{
    static const std::string kSentinel = "Q7#SENTINEL#k2Zp"; // 16 bytes
    bench::ClusterOptions o;
    o.dir = dir;
    o.nodes = 3;
    o.members = 1;
    o.banks = 3;
    o.clients_per_bank = 0;
    o.confidential = confidential;
    std::vector<std::uint64_t> private_seqnos;
    std::size_t found = 0, scanned = 0, tried = 0, refused = 0, write_errors = 0;
    {
        bench::Cluster c(o);
        c.open();
        auto banks = c.banks();
        for (const auto& b : banks)
            if (c.app("cb", "/app/mint", {{"to", b}, {"amount", 1'000'000}}).status != 200)
                ++write_errors;
        if (c.app("bank0", "/app/assets/register", {{"asset_id", "PRIV-BOND"}, {"quantity", 100000}, {"holder", "bank0"}}).status != 200)
            ++write_errors;
        std::mt19937_64 rng(17);
        for (std::size_t i = 0; i < private_writes; ++i)
        {
            node::Response r;
            auto kind = i % 3;
            if (kind == 0)
                r = c.app("cb", "/app/mint", {{"to", banks[rng() % 3]}, {"amount", 1 + rng() % 50}, {"private", true},
                                              {"memo", kSentinel}, {"nonce", i}});
            else if (kind == 1)
                r = c.app("bank1", "/app/transfer", {{"to", "bank2"}, {"amount", 1 + rng() % 50}, {"private", true},
                                                     {"memo", kSentinel}, {"nonce", i}});
            else
            {
                json body = {{"instruction_id", "priv-" + std::to_string(i)}, {"buyer", "bank1"}, {"asset_id", "PRIV-BOND"},
                             {"quantity", 1}, {"price", 5}, {"private", true}, {"memo", kSentinel}};
                body["buyer_signature"] = crypto::signature_hex(
                    c.key("bank1").sign(as_view(settlement::cosign_bytes("/app/dvp", body, "buyer_signature"))));
                r = c.app("bank0", "/app/dvp", body);
            }
            if (r.status == 200)
                private_seqnos.push_back(r.body["seqno"].get<std::uint64_t>());
            else
                ++write_errors;
        }
        c.wait_applied(c.commit_index(), 20s);
        for (std::size_t n = 0; n < c.size(); ++n)
        {
            auto* node = c.node(n);
            for (auto seqno : private_seqnos)
            {
                json body = {{"seqno", seqno}};
                auto sig = node->operator_sign(as_view(request_signing_bytes("/app/tx", body)));
                auto r = node->call("POST", "/app/tx", {{"signer", node->id()}, {"body", body}, {"signature", crypto::signature_hex(sig)}});
                ++tried;
                refused += r.status == 403;
            }
        }
    }
    // Nodes are stopped; scan everything they left on disk.
    for (const auto& e : fs::recursive_directory_iterator(dir))
    {
        if (!e.is_regular_file())
            continue;
        auto bytes = ledger::read_file(e.path());
        ++scanned;
        found += std::search(bytes.begin(), bytes.end(), kSentinel.begin(), kSentinel.end()) != bytes.end();
    }
    CheckResult out;
    out.ok = found == 0 && write_errors == 0 && tried > 0 && refused == tried &&
             private_seqnos.size() == private_writes;
    out.detail = fmt("private_writes", private_seqnos.size()) + " " + fmt("files_scanned", scanned) + " " +
                 fmt("files_with_sentinel", found) + " " + fmt("operator_reads", tried) + " " + fmt("refused", refused) +
                 (write_errors ? " " + fmt("write_errors", write_errors) : "");
    return out;
}

CheckResult check_attestation_gate(const fs::path& dir, std::size_t attempts, std::uint64_t seed)
{
    bench::ClusterOptions o;
    o.dir = dir;
    o.nodes = 3;
    o.members = 1;
    o.banks = 1;
    o.clients_per_bank = 0;
    bench::Cluster c(o);
    // The constructor only returns once both joiners were admitted through quotes.
    auto members = c.node(0)->status()["consensus_members"].size();
    std::size_t trusted_admitted = members == 3 ? 2 : 0;

    std::mt19937_64 rng(seed);
    std::map<std::string, std::size_t> by_kind, rejected_by_kind;
    std::size_t rejected = 0;
    for (std::size_t i = 0; i < attempts; ++i)
    {
        auto tag = std::to_string(seed) + "-" + std::to_string(i);
        auto node_key = crypto::KeyPair::from_label("forged-node-" + tag);
        auto platform_id = c.config(0).enclave.platform_id;
        auto measurement = c.measurement();
        std::optional<enclave::Platform> platform;
        std::string kind;
        switch (rng() % 3)
        {
        case 0:
            kind = "untrusted_measurement";
            measurement = enclave::measure(as_view(to_bytes("tampered build " + tag)));
            platform = node::platform_for(platform_id);
            break;
        case 1:
            kind = "rogue_platform_key";
            platform = enclave::Platform::from_label(platform_id, "rogue-" + tag);
            break;
        default:
            kind = "unknown_platform";
            platform = enclave::Platform::from_label("lab-" + tag, "lab-" + tag);
            break;
        }
        auto q = enclave::quote(measurement, node_key.public_key(), *platform);
        auto leader = c.leader().value_or(0);
        auto r = c.node(leader)->call("POST", "/node/join",
                                      {{"quote", to_hex(as_view(enclave::encode_quote(q)))},
                                       {"node_address", "forged-" + tag + ".invalid:1"},
                                       {"rpc_address", "forged-" + tag + ".invalid:2"}});
        ++by_kind[kind];
        if (r.status == 403 && !r.body.value("admitted", true))
        {
            ++rejected;
            ++rejected_by_kind[kind];
        }
    }
    auto after = c.node(c.leader().value_or(0))->status()["consensus_members"].size();
    CheckResult out;
    out.ok = rejected == attempts && after == 3 && trusted_admitted == 2;
    std::ostringstream d;
    d << "forged_attempts=" << attempts << " rejected=" << rejected;
    for (const auto& [k, n] : by_kind)
        d << " " << k << "=" << rejected_by_kind[k] << "/" << n;
    d << " trusted_joins_admitted=" << trusted_admitted << "/2 members_after=" << after;
    out.detail = d.str();
    return out;
}

} // namespace ccl::test
