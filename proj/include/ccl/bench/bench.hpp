#pragma once

// Benchmark harness: seeded load against an in-process cluster, commit
// latency percentiles, ledger growth, suites and security probes.

#include "ccl/bench/cluster.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ccl::bench {

struct WorkloadMix
{
    double transfer = 1.0;
    double dvp = 0.0;
    double mint = 0.0;
    double query = 0.0;

    bool operator==(const WorkloadMix&) const = default;
};

struct Scenario
{
    std::string name;
    std::size_t cluster_size = 1;
    bool confidential_mode = true;
    settlement::Model model = settlement::Model::Account;
    WorkloadMix workload_mix;
    double privacy_fraction = 0.0;
    /// Offered ops/s; nullopt means as fast as the clients can go.
    std::optional<double> target_rate;
    double duration_s = 5.0;
    /// Stop after this many operations even if time remains.
    std::optional<std::uint64_t> operations;
    std::uint64_t seed = 1;
    /// Concurrent load generators.
    std::size_t clients = 16;

    bool operator==(const Scenario&) const = default;
};

/// Throws Error(Parse/Validation) naming the offending field.
Scenario parse_scenario(const json& j);
json scenario_to_json(const Scenario& s);
std::vector<Scenario> load_scenarios(const std::filesystem::path& file);

enum class OpKind
{
    Transfer,
    Dvp,
    Mint,
    Query,
};

std::string_view op_name(OpKind k);

/// A generated request; the sequence is a pure function of (scenario, index).
struct Op
{
    OpKind kind = OpKind::Transfer;
    std::string signer;
    std::string path;
    json body;
};

Op generate_op(const Scenario& s, const std::vector<std::string>& banks, std::uint64_t index);
/// Digest over the canonical JSON of ops [0, n).
std::string trace_digest(const Scenario& s, const std::vector<std::string>& banks, std::uint64_t n);

struct BenchReport
{
    Scenario scenario;
    std::string status = "ok";
    std::uint64_t ops_offered = 0;
    std::uint64_t ops_completed = 0;
    std::uint64_t error_count = 0;
    bool degraded = false;
    double elapsed_s = 0;
    double achieved_tps = 0;
    double latency_p50_ms = 0;
    double latency_p95_ms = 0;
    double latency_p99_ms = 0;
    std::uint64_t bytes_ledger_growth = 0;
    std::uint64_t peak_memory_bytes = 0;
    std::uint64_t committed_app_entries = 0;
    std::string trace_digest;
    std::map<std::string, std::uint64_t> errors_by_code;
};

/// Nearest-rank percentile over an ascending vector; 0 when empty.
double percentile(const std::vector<double>& sorted, double p);

/// Runs one scenario on a fresh in-process cluster under `work_dir`.
BenchReport run_scenario(const Scenario& s, const std::filesystem::path& work_dir);

/// Stable column order shared by CSV and JSON rows.
const std::vector<std::string>& report_columns();
json report_to_row(const BenchReport& r);
std::string rows_to_csv(const std::vector<json>& rows);
std::vector<json> csv_to_rows(const std::string& csv);

struct SuiteResult
{
    std::vector<BenchReport> reports;
    std::vector<json> rows;
};

/// Runs every scenario (failures are recorded per row) and, when `out_dir`
/// is set, writes report.csv and report.json there.
SuiteResult run_suite(const std::vector<Scenario>& scenarios, const std::filesystem::path& work_dir,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Same scenario over several replica counts.
std::vector<BenchReport> scaling_table(const Scenario& base, const std::vector<std::size_t>& sizes,
                                       const std::filesystem::path& work_dir);

struct ProbeResult
{
    std::string probe;
    /// "rejected" when the attack failed, "succeeded" otherwise.
    std::string outcome;
    bool pass = false;
    bool expected_baseline_failure = false;
    std::string detail;
};

/// Sentinel file scan, forged-quote join, operator private read and receipt
/// forgery against an open cluster. The forged join runs last since a
/// non-confidential cluster admits it.
std::vector<ProbeResult> attack_probes(Cluster& cluster);
json probes_to_json(const std::vector<ProbeResult>& probes);

/// Peak resident set size of this process (Linux VmHWM), 0 if unknown.
std::uint64_t peak_memory_bytes();

} // namespace ccl::bench
