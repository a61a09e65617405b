#include "ccl/bench/bench.hpp"
#include "ccl/ledger/ledger.hpp"

#include "../support/temp_dir.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <random>
#include <set>

using namespace ccl;
using namespace ccl::bench;
using namespace std::chrono_literals;

namespace {

Scenario small(const std::string& name, std::size_t n, bool conf, std::uint64_t ops)
{
    Scenario s;
    s.name = name;
    s.cluster_size = n;
    s.confidential_mode = conf;
    s.operations = ops;
    s.duration_s = 60;
    s.clients = 4;
    s.seed = 7;
    return s;
}

std::vector<std::string> four_banks() { return {"bank0", "bank1", "bank2", "bank3"}; }

std::uint64_t expected_writes(const Scenario& s, std::uint64_t n)
{
    std::uint64_t writes = 0;
    for (std::uint64_t i = 0; i < n; ++i)
        writes += generate_op(s, four_banks(), i).path != "/app/balance";
    return writes;
}

ErrorCode parse_code(const json& j)
{
    try
    {
        parse_scenario(j);
    }
    catch (const Error& e)
    {
        return e.code();
    }
    ADD_FAILURE() << "scenario accepted: " << j.dump();
    return ErrorCode::Io;
}

} // namespace

TEST(Scenario, DefaultsAndRoundTrip)
{
    auto s = parse_scenario({{"name", "x"}});
    EXPECT_EQ(s.cluster_size, 1u);
    EXPECT_TRUE(s.confidential_mode);
    EXPECT_FALSE(s.target_rate.has_value());
    EXPECT_EQ(parse_scenario(scenario_to_json(s)), s);

    auto t = parse_scenario({{"name", "y"},
                             {"cluster_size", 3},
                             {"confidential_mode", false},
                             {"model", "utxo"},
                             {"workload_mix", {{"transfer", 0.5}, {"dvp", 0.25}, {"query", 0.25}}},
                             {"privacy_fraction", 0.5},
                             {"target_rate", 200},
                             {"duration", 2},
                             {"operations", 100},
                             {"seed", 9},
                             {"clients", 3}});
    EXPECT_EQ(t.model, settlement::Model::Utxo);
    EXPECT_EQ(*t.target_rate, 200.0);
    EXPECT_EQ(parse_scenario(scenario_to_json(t)), t);
}

TEST(Scenario, RejectsBadFields)
{
    EXPECT_EQ(parse_code({{"name", "x"}, {"workload_mix", {{"transfer", 0.5}, {"dvp", 0.2}}}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"bogus", 1}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"workload_mix", {{"swap", 1.0}}}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"cluster_size", 0}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"target_rate", -1}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"privacy_fraction", 1.5}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"name", "x"}, {"model", "ledger"}}), ErrorCode::Parse);
    EXPECT_EQ(parse_code({{"cluster_size", 1}}), ErrorCode::Parse);
    try
    {
        parse_scenario({{"name", "x"}, {"bogus", 1}});
    }
    catch (const Error& e)
    {
        EXPECT_NE(std::string(e.what()).find("bogus"), std::string::npos);
    }
}

TEST(Scenario, LoadsArrayFile)
{
    test::TempDir dir;
    auto f = dir / "s.json";
    std::ofstream(f) << R"([{"name":"a"},{"name":"b","cluster_size":3}])";
    auto v = load_scenarios(f);
    ASSERT_EQ(v.size(), 2u);
    EXPECT_EQ(v[1].cluster_size, 3u);
    EXPECT_THROW(load_scenarios(dir / "missing.json"), Error);
}

TEST(Workload, OpsArePureFunctionOfSeedAndIndex)
{
    auto s = small("w", 1, true, 0);
    s.workload_mix = {0.4, 0.3, 0.1, 0.2};
    s.privacy_fraction = 0.5;
    auto banks = four_banks();
    for (std::uint64_t i = 0; i < 300; ++i)
    {
        auto a = generate_op(s, banks, i);
        auto b = generate_op(s, banks, i);
        EXPECT_EQ(a.path, b.path);
        EXPECT_EQ(a.body, b.body);
        EXPECT_EQ(a.signer, b.signer);
    }
    EXPECT_EQ(trace_digest(s, banks, 300), trace_digest(s, banks, 300));
    EXPECT_NE(trace_digest(s, banks, 300), trace_digest(s, banks, 299));
    auto other = s;
    other.seed = 8;
    EXPECT_NE(trace_digest(s, banks, 300), trace_digest(other, banks, 300));
}

TEST(Workload, MixFrequenciesTrackFractions)
{
    auto s = small("w", 1, true, 0);
    s.workload_mix = {0.4, 0.3, 0.1, 0.2};
    s.privacy_fraction = 0.25;
    std::map<OpKind, int> counts;
    int priv = 0, writes = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i)
    {
        auto op = generate_op(s, four_banks(), i);
        ++counts[op.kind];
        if (op.kind != OpKind::Query)
        {
            ++writes;
            priv += op.body["private"].get<bool>();
            if (op.kind == OpKind::Transfer)
                EXPECT_NE(op.body["to"], op.signer);
        }
    }
    // 4.5 sigma binomial bounds.
    auto near = [&](int got, double p, int trials) {
        auto sd = std::sqrt(trials * p * (1 - p));
        return std::abs(got - trials * p) < 4.5 * sd;
    };
    EXPECT_TRUE(near(counts[OpKind::Transfer], 0.4, n));
    EXPECT_TRUE(near(counts[OpKind::Dvp], 0.3, n));
    EXPECT_TRUE(near(counts[OpKind::Mint], 0.1, n));
    EXPECT_TRUE(near(counts[OpKind::Query], 0.2, n));
    EXPECT_TRUE(near(priv, 0.25, writes));
}

TEST(Percentile, NearestRankAndMonotone)
{
    std::vector<double> v = {15, 20, 35, 40, 50};
    EXPECT_EQ(percentile(v, 5), 15);
    EXPECT_EQ(percentile(v, 30), 20);
    EXPECT_EQ(percentile(v, 40), 20);
    EXPECT_EQ(percentile(v, 50), 35);
    EXPECT_EQ(percentile(v, 100), 50);
    EXPECT_EQ(percentile({}, 50), 0);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 200; ++trial)
    {
        std::vector<double> xs(1 + rng() % 300);
        for (auto& x : xs)
            x = std::uniform_real_distribution<double>(0, 100)(rng);
        std::sort(xs.begin(), xs.end());
        double prev = -1;
        for (double p = 1; p <= 100; p += 1)
        {
            auto q = percentile(xs, p);
            EXPECT_GE(q, prev);
            prev = q;
            // Nearest rank: at least p% of samples are <= q.
            auto le = std::upper_bound(xs.begin(), xs.end(), q) - xs.begin();
            EXPECT_GE(static_cast<double>(le), p / 100.0 * xs.size() - 1e-9);
        }
    }
}

TEST(Report, CsvRoundTripsJsonRows)
{
    BenchReport r;
    r.scenario = small("csv", 3, false, 50);
    r.scenario.target_rate = 123.5;
    r.status = "failed: quote \"x\", comma";
    r.ops_offered = 50;
    r.ops_completed = 49;
    r.error_count = 1;
    r.achieved_tps = 1234.0625;
    r.latency_p99_ms = 3.25;
    r.trace_digest = "abcd";
    BenchReport q;
    q.scenario = small("csv2", 1, true, 10);
    q.scenario.operations.reset();
    std::vector<json> rows = {report_to_row(r), report_to_row(q)};
    auto back = csv_to_rows(rows_to_csv(rows));
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (const auto& col : report_columns())
        {
            const auto& a = rows[i][col];
            const auto& b = back[i][col];
            if (a.is_number())
                EXPECT_DOUBLE_EQ(a.get<double>(), b.get<double>()) << col;
            else
                EXPECT_EQ(a, b) << col;
        }
}

TEST(Run, SmokeSingleNode)
{
    test::TempDir dir;
    auto s = small("smoke", 1, true, 100);
    auto r = run_scenario(s, dir.path());
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.ops_offered, 100u);
    EXPECT_EQ(r.ops_completed, 100u);
    EXPECT_EQ(r.error_count, 0u) << json(r.errors_by_code).dump();
    EXPECT_GT(r.achieved_tps, 0);
    EXPECT_LE(r.latency_p50_ms, r.latency_p95_ms);
    EXPECT_LE(r.latency_p95_ms, r.latency_p99_ms);
    EXPECT_EQ(r.committed_app_entries, 100u);
    EXPECT_GT(r.bytes_ledger_growth, 0u);
    EXPECT_GT(r.peak_memory_bytes, 0u);
    EXPECT_EQ(r.trace_digest, trace_digest(s, four_banks(), 100));
}

TEST(Run, SameSeedSameTraceAndCounts)
{
    test::TempDir dir;
    auto s = small("det", 1, true, 120);
    s.workload_mix = {0.5, 0.2, 0.1, 0.2};
    s.privacy_fraction = 0.5;
    auto a = run_scenario(s, dir.path());
    auto b = run_scenario(s, dir.path());
    EXPECT_EQ(a.error_count, 0u) << json(a.errors_by_code).dump();
    EXPECT_EQ(a.trace_digest, b.trace_digest);
    EXPECT_EQ(a.ops_completed, b.ops_completed);
    EXPECT_EQ(a.committed_app_entries, b.committed_app_entries);
    EXPECT_EQ(a.committed_app_entries, expected_writes(s, 120));
}

TEST(Run, ScalingCommitCountsMatchIndependentCount)
{
    test::TempDir dir;
    auto s = small("scale", 1, true, 150);
    s.workload_mix = {0.6, 0.2, 0.0, 0.2};
    auto want = expected_writes(s, 150);
    auto reports = scaling_table(s, {1, 3, 5}, dir.path());
    ASSERT_EQ(reports.size(), 3u);
    for (const auto& r : reports)
    {
        EXPECT_EQ(r.status, "ok") << r.scenario.name;
        EXPECT_EQ(r.error_count, 0u) << r.scenario.name << json(r.errors_by_code).dump();
        EXPECT_EQ(r.committed_app_entries, want) << r.scenario.name;
        EXPECT_EQ(r.trace_digest, reports[0].trace_digest);
    }
}

TEST(Run, SuiteWritesSixRowsAndMatchingCsv)
{
    test::TempDir dir;
    std::vector<Scenario> suite;
    for (std::size_t n : {1, 3, 5})
        for (bool conf : {true, false})
            suite.push_back(small("suite-n" + std::to_string(n) + (conf ? "-on" : "-off"), n, conf, 40));
    auto out = dir / "out";
    auto res = run_suite(suite, dir.path(), out);
    ASSERT_EQ(res.rows.size(), 6u);
    for (const auto& r : res.reports)
        EXPECT_EQ(r.error_count, 0u) << r.scenario.name;

    std::ifstream js(out / "report.json");
    auto doc = json::parse(js);
    ASSERT_EQ(doc["rows"].size(), 6u);
    std::stringstream csv;
    csv << std::ifstream(out / "report.csv").rdbuf();
    auto rows = csv_to_rows(csv.str());
    ASSERT_EQ(rows.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i)
        for (const auto& col : report_columns())
        {
            const auto& a = doc["rows"][i][col];
            const auto& b = rows[i][col];
            if (a.is_number())
                EXPECT_DOUBLE_EQ(a.get<double>(), b.get<double>()) << col;
            else
                EXPECT_EQ(a, b) << col;
        }
}

TEST(Run, UnreachableRateStillReports)
{
    test::TempDir dir;
    auto s = small("paced", 1, true, 1000);
    s.target_rate = 100;
    s.duration_s = 0.5;
    auto r = run_scenario(s, dir.path());
    EXPECT_EQ(r.status, "ok");
    EXPECT_LE(r.ops_offered, 51u);
    EXPECT_GE(r.ops_offered, 40u);
}

TEST(Probes, ConfidentialClusterRejectsEveryAttack)
{
    test::TempDir dir;
    ClusterOptions o;
    o.dir = dir.path();
    o.nodes = 3;
    o.members = 1;
    o.banks = 2;
    Cluster c(o);
    c.open();
    auto probes = attack_probes(c);
    ASSERT_EQ(probes.size(), 4u);
    for (const auto& p : probes)
    {
        EXPECT_TRUE(p.pass) << p.probe << ": " << p.detail;
        EXPECT_EQ(p.outcome, "rejected") << p.probe;
        EXPECT_FALSE(p.expected_baseline_failure) << p.probe;
    }
    EXPECT_EQ(c.node(0)->status()["consensus_members"].size(), 3u);
    auto j = probes_to_json(probes);
    EXPECT_EQ(j.size(), 4u);
    EXPECT_EQ(j[3]["probe"], "forged_quote_join");
}

TEST(Probes, BaselineClusterLeaksAndAdmitsForgedJoin)
{
    test::TempDir dir;
    ClusterOptions o;
    o.dir = dir.path();
    o.nodes = 1;
    o.members = 1;
    o.banks = 2;
    o.confidential = false;
    Cluster c(o);
    c.open();
    auto probes = attack_probes(c);
    std::map<std::string, ProbeResult> by;
    for (const auto& p : probes)
        by[p.probe] = p;
    EXPECT_EQ(by["ledger_plaintext_scan"].outcome, "succeeded");
    EXPECT_TRUE(by["ledger_plaintext_scan"].expected_baseline_failure);
    EXPECT_EQ(by["forged_quote_join"].outcome, "succeeded") << by["forged_quote_join"].detail;
    EXPECT_TRUE(by["forged_quote_join"].expected_baseline_failure);
    // Access control and receipt signatures do not depend on the enclave.
    EXPECT_TRUE(by["operator_private_read"].pass);
    EXPECT_TRUE(by["receipt_forgery"].pass) << by["receipt_forgery"].detail;
}

TEST(Probes, ChainVerifiesAfterConfidentialWorkload)
{
    test::TempDir dir;
    ClusterOptions o;
    o.dir = dir.path();
    o.nodes = 3;
    o.members = 1;
    o.banks = 4;
    Cluster c(o);
    c.open();
    for (const auto& b : c.banks())
    {
        ASSERT_EQ(c.app("cb", "/app/mint", {{"to", b}, {"amount", 100000}}).status, 200);
        ASSERT_EQ(c.app(b, "/app/assets/register", {{"asset_id", "ASSET-" + b}, {"quantity", 1000}, {"holder", b}}).status,
                  200);
    }
    auto s = small("chain", 3, true, 0);
    s.workload_mix = {0.5, 0.3, 0.2, 0.0};
    s.privacy_fraction = 0.5;
    std::uint64_t last_seqno = 0;
    for (std::uint64_t i = 0; i < 60; ++i)
    {
        auto op = generate_op(s, c.banks(), i);
        auto body = op.body;
        if (op.kind == OpKind::Dvp)
            body["buyer_signature"] = crypto::signature_hex(c.key(body["buyer"].get<std::string>()).sign(
                as_view(settlement::cosign_bytes("/app/dvp", body, "buyer_signature"))));
        auto r = c.app(op.signer, op.path, body);
        ASSERT_EQ(r.status, 200) << r.body.dump();
        last_seqno = r.body["seqno"].get<std::uint64_t>();
    }
    ASSERT_TRUE(c.node(0)->wait_for(
        [&](const json& st) { return st["ledger_signed"].get<std::uint64_t>() >= last_seqno; }, 10s));
    c.wait_applied(c.commit_index());
    for (std::size_t i = 0; i < c.size(); ++i)
    {
        auto v = ledger::verify_chain(c.config(i).ledger_path(), c.service_identity());
        EXPECT_TRUE(v.ok()) << "node " << i << ": " << v.detail;
        EXPECT_GT(v.entries_checked, 60u);
    }
}
