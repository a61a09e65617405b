#include "ccl/bench/bench.hpp"
#include "ccl/common/signing.hpp"
#include "ccl/ledger/receipt.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace ccl::bench {

namespace fs = std::filesystem;
using namespace std::chrono_literals;
using Clock = std::chrono::steady_clock;

namespace {

[[noreturn]] void bad(const std::string& field, const std::string& why)
{
    throw Error(ErrorCode::Parse, "scenario." + field + ": " + why);
}

double number_at(const json& j, const char* key, double fallback)
{
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_number())
        bad(key, "expected a number");
    return j[key].get<double>();
}

std::uint64_t uint_at(const json& j, const char* key, std::uint64_t fallback)
{
    if (!j.contains(key))
        return fallback;
    if (!j[key].is_number_integer() || j[key].get<std::int64_t>() < 0)
        bad(key, "expected a non-negative integer");
    return j[key].get<std::uint64_t>();
}

constexpr std::uint64_t kFunding = 1'000'000'000'000ULL;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index)
{
    // splitmix64 over (seed, index) so op i does not depend on ops before it.
    std::uint64_t z = seed * 0x9E3779B97F4A7C15ULL + index + 0x632BE59BD9B4E019ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::string asset_of(const std::string& bank) { return "ASSET-" + bank; }

std::string format_double(double v)
{
    std::ostringstream out;
    out.precision(17);
    out << v;
    return out.str();
}

std::string csv_field(const json& v)
{
    std::string s;
    if (v.is_string())
        s = v.get<std::string>();
    else if (v.is_boolean())
        s = v.get<bool>() ? "true" : "false";
    else if (v.is_number_float())
        s = format_double(v.get<double>());
    else
        s = v.dump();
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string q = "\"";
    for (char ch : s)
    {
        if (ch == '"')
            q += '"';
        q += ch;
    }
    return q + "\"";
}

json csv_value(const std::string& s, bool quoted)
{
    if (quoted)
        return s;
    if (s == "true" || s == "false")
        return s == "true";
    if (!s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }) && s.size() < 20)
        return std::stoull(s);
    if (!s.empty())
    {
        char* end = nullptr;
        double d = std::strtod(s.c_str(), &end);
        if (end == s.c_str() + s.size())
            return d;
    }
    return s;
}

std::vector<std::vector<std::pair<std::string, bool>>> split_csv(const std::string& text)
{
    std::vector<std::vector<std::pair<std::string, bool>>> rows;
    std::vector<std::pair<std::string, bool>> row;
    std::string field;
    bool quoted = false, in_quotes = false;
    auto end_field = [&] {
        row.emplace_back(field, quoted);
        field.clear();
        quoted = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i)
    {
        char ch = text[i];
        if (in_quotes)
        {
            if (ch == '"' && i + 1 < text.size() && text[i + 1] == '"')
            {
                field += '"';
                ++i;
            }
            else if (ch == '"')
                in_quotes = false;
            else
                field += ch;
        }
        else if (ch == '"')
            in_quotes = quoted = true;
        else if (ch == ',')
            end_field();
        else if (ch == '\n')
        {
            end_field();
            rows.push_back(std::move(row));
            row.clear();
        }
        else
            field += ch;
    }
    if (!field.empty() || !row.empty())
    {
        end_field();
        rows.push_back(std::move(row));
    }
    return rows;
}

std::uint64_t count_app_entries(node::Node& n)
{
    return n.on_core([](node::NodeCore& core) {
        std::uint64_t count = 0;
        for (const auto& e : core.ledger().entries())
            count += e.kind == ledger::EntryKind::App;
        return count;
    });
}

std::uint64_t ledger_bytes(node::Node& n)
{
    return n.status()["ledger_bytes"].get<std::uint64_t>();
}

} // namespace

std::string_view op_name(OpKind k)
{
    switch (k)
    {
    case OpKind::Transfer: return "transfer";
    case OpKind::Dvp: return "dvp";
    case OpKind::Mint: return "mint";
    case OpKind::Query: return "query";
    }
    return "?";
}

Scenario parse_scenario(const json& j)
{
    if (!j.is_object())
        bad("", "expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
    {
        static const std::set<std::string> known = {"name",     "cluster_size", "confidential_mode", "model",
                                                    "workload_mix", "privacy_fraction", "target_rate", "duration",
                                                    "operations", "seed", "clients"};
        if (!known.contains(it.key()))
            bad(it.key(), "unknown field");
    }
    Scenario s;
    if (!j.contains("name") || !j["name"].is_string() || j["name"].get<std::string>().empty())
        bad("name", "expected a non-empty string");
    s.name = j["name"].get<std::string>();
    if (s.name.find_first_of(",\"\n/") != std::string::npos)
        bad("name", "must not contain commas, quotes, slashes or newlines");
    s.cluster_size = uint_at(j, "cluster_size", 1);
    if (s.cluster_size < 1 || s.cluster_size > 9)
        bad("cluster_size", "expected 1..9");
    if (j.contains("confidential_mode"))
    {
        if (!j["confidential_mode"].is_boolean())
            bad("confidential_mode", "expected a boolean");
        s.confidential_mode = j["confidential_mode"].get<bool>();
    }
    if (j.contains("model"))
    {
        auto m = j["model"].is_string() ? j["model"].get<std::string>() : "";
        if (m == "account")
            s.model = settlement::Model::Account;
        else if (m == "utxo")
            s.model = settlement::Model::Utxo;
        else
            bad("model", "expected \"account\" or \"utxo\"");
    }
    if (j.contains("workload_mix"))
    {
        const auto& w = j["workload_mix"];
        if (!w.is_object())
            bad("workload_mix", "expected an object");
        s.workload_mix = {0, 0, 0, 0};
        for (auto it = w.begin(); it != w.end(); ++it)
        {
            if (!it->is_number() || it->get<double>() < 0 || it->get<double>() > 1)
                bad("workload_mix." + it.key(), "expected a fraction in [0,1]");
            auto v = it->get<double>();
            if (it.key() == "transfer")
                s.workload_mix.transfer = v;
            else if (it.key() == "dvp")
                s.workload_mix.dvp = v;
            else if (it.key() == "mint")
                s.workload_mix.mint = v;
            else if (it.key() == "query")
                s.workload_mix.query = v;
            else
                bad("workload_mix." + it.key(), "unknown operation");
        }
        auto sum = s.workload_mix.transfer + s.workload_mix.dvp + s.workload_mix.mint + s.workload_mix.query;
        if (std::abs(sum - 1.0) > 1e-9)
            bad("workload_mix", "fractions must sum to 1 (got " + format_double(sum) + ")");
    }
    s.privacy_fraction = number_at(j, "privacy_fraction", 0.0);
    if (s.privacy_fraction < 0 || s.privacy_fraction > 1)
        bad("privacy_fraction", "expected a fraction in [0,1]");
    if (j.contains("target_rate"))
    {
        const auto& r = j["target_rate"];
        if (r.is_string() && r.get<std::string>() == "max")
            s.target_rate.reset();
        else if (r.is_number() && r.get<double>() > 0)
            s.target_rate = r.get<double>();
        else
            bad("target_rate", "expected a positive number or \"max\"");
    }
    s.duration_s = number_at(j, "duration", 5.0);
    if (!(s.duration_s > 0) || s.duration_s > 3600)
        bad("duration", "expected seconds in (0, 3600]");
    if (j.contains("operations"))
    {
        s.operations = uint_at(j, "operations", 0);
        if (*s.operations == 0)
            bad("operations", "expected a positive integer");
    }
    s.seed = uint_at(j, "seed", 1);
    s.clients = uint_at(j, "clients", 16);
    if (s.clients < 1 || s.clients > 256)
        bad("clients", "expected 1..256");
    return s;
}

json scenario_to_json(const Scenario& s)
{
    json j = {{"name", s.name},
              {"cluster_size", s.cluster_size},
              {"confidential_mode", s.confidential_mode},
              {"model", s.model == settlement::Model::Account ? "account" : "utxo"},
              {"workload_mix",
               {{"transfer", s.workload_mix.transfer},
                {"dvp", s.workload_mix.dvp},
                {"mint", s.workload_mix.mint},
                {"query", s.workload_mix.query}}},
              {"privacy_fraction", s.privacy_fraction},
              {"duration", s.duration_s},
              {"seed", s.seed},
              {"clients", s.clients}};
    j["target_rate"] = s.target_rate ? json(*s.target_rate) : json("max");
    if (s.operations)
        j["operations"] = *s.operations;
    return j;
}

std::vector<Scenario> load_scenarios(const fs::path& file)
{
    std::ifstream in(file);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read scenario file '" + file.string() + "'");
    json j;
    try
    {
        j = json::parse(in);
    }
    catch (const json::exception& e)
    {
        throw Error(ErrorCode::Parse, "scenario file '" + file.string() + "': " + e.what());
    }
    std::vector<Scenario> out;
    if (j.is_array())
        for (const auto& s : j)
            out.push_back(parse_scenario(s));
    else if (j.is_object() && j.contains("scenarios"))
        for (const auto& s : j["scenarios"])
            out.push_back(parse_scenario(s));
    else
        out.push_back(parse_scenario(j));
    if (out.empty())
        throw Error(ErrorCode::Validation, "scenario file '" + file.string() + "' has no scenarios");
    return out;
}

Op generate_op(const Scenario& s, const std::vector<std::string>& banks, std::uint64_t index)
{
    std::mt19937_64 rng(mix_seed(s.seed, index));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto u = unit(rng);
    const auto& w = s.workload_mix;
    OpKind kind = OpKind::Query;
    if (u < w.transfer)
        kind = OpKind::Transfer;
    else if (u < w.transfer + w.dvp)
        kind = OpKind::Dvp;
    else if (u < w.transfer + w.dvp + w.mint)
        kind = OpKind::Mint;
    else if (w.query == 0)
        kind = w.transfer > 0 ? OpKind::Transfer : w.dvp > 0 ? OpKind::Dvp : OpKind::Mint;
    auto from = banks[rng() % banks.size()];
    auto to = banks[rng() % banks.size()];
    if (banks.size() > 1)
        while (to == from)
            to = banks[rng() % banks.size()];
    bool priv = unit(rng) < s.privacy_fraction;
    auto amount = 1 + rng() % 10;
    Op op;
    op.kind = kind;
    switch (kind)
    {
    case OpKind::Transfer:
        op.signer = from;
        op.path = "/app/transfer";
        op.body = {{"to", to}, {"amount", amount}, {"private", priv}, {"nonce", index}};
        break;
    case OpKind::Dvp:
        op.signer = from;
        op.path = "/app/dvp";
        op.body = {{"instruction_id", "i" + std::to_string(index)},
                   {"buyer", to},
                   {"asset_id", asset_of(from)},
                   {"quantity", 1},
                   {"price", amount},
                   {"private", priv}};
        break;
    case OpKind::Mint:
        op.signer = "cb";
        op.path = "/app/mint";
        op.body = {{"to", to}, {"amount", amount}, {"private", priv}, {"nonce", index}};
        break;
    case OpKind::Query:
        op.signer = from;
        op.path = "/app/balance";
        op.body = {{"party", from}};
        break;
    }
    return op;
}

std::string trace_digest(const Scenario& s, const std::vector<std::string>& banks, std::uint64_t n)
{
    crypto::Sha256 h;
    for (std::uint64_t i = 0; i < n; ++i)
    {
        auto op = generate_op(s, banks, i);
        auto text = json{{"path", op.path}, {"signer", op.signer}, {"body", op.body}}.dump() + "\n";
        h.update(as_view(to_bytes(text)));
    }
    return to_hex(h.finish().view());
}

double percentile(const std::vector<double>& sorted, double p)
{
    if (sorted.empty())
        return 0;
    auto rank = static_cast<std::size_t>(std::ceil(p / 100.0 * static_cast<double>(sorted.size())));
    rank = std::clamp<std::size_t>(rank, 1, sorted.size());
    return sorted[rank - 1];
}

std::uint64_t peak_memory_bytes()
{
    std::ifstream in("/proc/self/status");
    std::string line;
    while (std::getline(in, line))
        if (line.rfind("VmHWM:", 0) == 0)
        {
            std::istringstream fields(line.substr(6));
            std::uint64_t kb = 0;
            fields >> kb;
            return kb * 1024;
        }
    return 0;
}

namespace {

// Sends to the cached leader, refreshing it on redirects and unavailability.
class Sender
{
  public:
    explicit Sender(Cluster& c) : cluster_(c)
    {
        if (auto l = c.leader())
            leader_ = *l;
    }

    Response send(const std::string& path, const json& envelope)
    {
        Response r;
        for (int attempt = 0; attempt < 40; ++attempt)
        {
            auto idx = leader_.load();
            auto* n = cluster_.alive(idx) ? cluster_.node(idx) : nullptr;
            if (n)
            {
                r = n->call("POST", path, envelope);
                if (r.status != 307 && !(r.status == 503 && r.body["error"].value("code", "") == "unavailable"))
                    return r;
            }
            std::lock_guard lock(refresh_mu_);
            if (leader_.load() == idx)
                if (auto l = cluster_.leader(2s))
                    leader_ = *l;
        }
        return r;
    }

  private:
    Cluster& cluster_;
    std::atomic<std::size_t> leader_{0};
    std::mutex refresh_mu_;
};

void setup_funding(Cluster& c)
{
    for (const auto& b : c.banks())
    {
        auto r = c.app("cb", "/app/mint", {{"to", b}, {"amount", kFunding}, {"nonce", "setup"}});
        if (r.status != 200)
            throw Error(ErrorCode::State, "funding " + b + " failed: " + r.body.dump());
        r = c.app(b, "/app/assets/register", {{"asset_id", asset_of(b)}, {"quantity", kFunding}, {"holder", b}});
        if (r.status != 200)
            throw Error(ErrorCode::State, "asset registration for " + b + " failed: " + r.body.dump());
    }
}

json sign_op(Cluster& c, const Op& op)
{
    auto body = op.body;
    if (op.kind == OpKind::Dvp)
    {
        auto buyer = body["buyer"].get<std::string>();
        body["buyer_signature"] = crypto::signature_hex(
            c.key(buyer).sign(as_view(settlement::cosign_bytes("/app/dvp", body, "buyer_signature"))));
    }
    return node::make_envelope(op.path, op.signer, body, c.key(op.signer));
}

} // namespace

BenchReport run_scenario(const Scenario& s, const fs::path& work_dir)
{
    static std::atomic<std::uint64_t> run_counter{0};
    BenchReport report;
    report.scenario = s;
    auto dir = work_dir / (s.name + "-" + std::to_string(run_counter.fetch_add(1)));
    try
    {
        fs::remove_all(dir);
        ClusterOptions o;
        o.dir = dir;
        o.nodes = s.cluster_size;
        o.confidential = s.confidential_mode;
        o.model = s.model;
        o.members = 1;
        o.banks = 4;
        o.clients_per_bank = 1;
        o.tick_ms = 5;
        o.seed = s.seed;
        Cluster c(o);
        c.open();
        setup_funding(c);
        auto banks = c.banks();
        auto base_app = count_app_entries(*c.node(0));
        auto base_bytes = ledger_bytes(*c.node(0));

        Sender sender(c);
        std::atomic<std::uint64_t> next{0};
        std::mutex mu;
        std::vector<double> latencies;
        std::uint64_t errors = 0;
        std::map<std::string, std::uint64_t> by_code;
        auto start = Clock::now();
        auto deadline = start + std::chrono::duration_cast<Clock::duration>(std::chrono::duration<double>(s.duration_s));
        std::atomic<Clock::time_point::rep> last_done{start.time_since_epoch().count()};

        auto worker = [&] {
            std::vector<double> local;
            while (true)
            {
                auto i = next.fetch_add(1);
                if (s.operations && i >= *s.operations)
                    break;
                if (s.target_rate)
                {
                    auto due = start + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(static_cast<double>(i) / *s.target_rate));
                    if (due >= deadline)
                        break;
                    std::this_thread::sleep_until(due);
                }
                if (Clock::now() >= deadline)
                    break;
                auto op = generate_op(s, banks, i);
                auto env = sign_op(c, op);
                auto t0 = Clock::now();
                auto r = sender.send(op.path, env);
                auto t1 = Clock::now();
                auto prev = last_done.load();
                while (prev < t1.time_since_epoch().count() &&
                       !last_done.compare_exchange_weak(prev, t1.time_since_epoch().count()))
                {
                }
                if (r.status == 200)
                    local.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
                else
                {
                    std::lock_guard lock(mu);
                    ++errors;
                    ++by_code[r.body.contains("error") ? r.body["error"].value("code", "unknown") : std::to_string(r.status)];
                }
            }
            std::lock_guard lock(mu);
            latencies.insert(latencies.end(), local.begin(), local.end());
        };
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < s.clients; ++t)
            threads.emplace_back(worker);
        for (auto& t : threads)
            t.join();

        auto end = Clock::time_point(Clock::duration(last_done.load()));
        auto issued = std::min<std::uint64_t>(next.load(), s.operations.value_or(next.load()));
        // Threads each overshoot the counter once when they stop.
        issued = std::min<std::uint64_t>(issued, latencies.size() + errors);
        std::sort(latencies.begin(), latencies.end());
        report.ops_offered = issued;
        report.ops_completed = latencies.size();
        report.error_count = errors;
        report.errors_by_code = by_code;
        report.degraded = issued > 0 && static_cast<double>(errors) > 0.01 * static_cast<double>(issued);
        report.elapsed_s = std::max(std::chrono::duration<double>(end - start).count(), 1e-9);
        report.achieved_tps = static_cast<double>(report.ops_completed) / report.elapsed_s;
        report.latency_p50_ms = percentile(latencies, 50);
        report.latency_p95_ms = percentile(latencies, 95);
        report.latency_p99_ms = percentile(latencies, 99);
        report.trace_digest = trace_digest(s, banks, issued);

        c.wait_applied(c.commit_index(), 20s);
        report.committed_app_entries = count_app_entries(*c.node(0)) - base_app;
        report.bytes_ledger_growth = ledger_bytes(*c.node(0)) - base_bytes;
        report.peak_memory_bytes = peak_memory_bytes();
        if (report.degraded)
            report.status = "degraded";
    }
    catch (const std::exception& e)
    {
        report.status = std::string("failed: ") + e.what();
        spdlog::error("scenario {} failed: {}", s.name, e.what());
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    return report;
}

const std::vector<std::string>& report_columns()
{
    static const std::vector<std::string> cols = {
        "name",           "cluster_size",   "confidential_mode", "model",          "mix_transfer",
        "mix_dvp",        "mix_mint",       "mix_query",         "privacy_fraction", "target_rate",
        "duration_s",     "operations",     "seed",              "clients",        "status",
        "ops_offered",    "ops_completed",  "error_count",       "degraded",       "elapsed_s",
        "achieved_tps",   "latency_p50_ms", "latency_p95_ms",    "latency_p99_ms", "bytes_ledger_growth",
        "peak_memory_bytes", "committed_app_entries", "trace_digest", "host"};
    return cols;
}

json report_to_row(const BenchReport& r)
{
    const auto& s = r.scenario;
    json row = json::object();
    row["name"] = s.name;
    row["cluster_size"] = s.cluster_size;
    row["confidential_mode"] = s.confidential_mode;
    row["model"] = s.model == settlement::Model::Account ? "account" : "utxo";
    row["mix_transfer"] = s.workload_mix.transfer;
    row["mix_dvp"] = s.workload_mix.dvp;
    row["mix_mint"] = s.workload_mix.mint;
    row["mix_query"] = s.workload_mix.query;
    row["privacy_fraction"] = s.privacy_fraction;
    row["target_rate"] = s.target_rate ? json(*s.target_rate) : json("max");
    row["duration_s"] = s.duration_s;
    row["operations"] = s.operations ? json(*s.operations) : json("none");
    row["seed"] = s.seed;
    row["clients"] = s.clients;
    row["status"] = r.status;
    row["ops_offered"] = r.ops_offered;
    row["ops_completed"] = r.ops_completed;
    row["error_count"] = r.error_count;
    row["degraded"] = r.degraded;
    row["elapsed_s"] = r.elapsed_s;
    row["achieved_tps"] = r.achieved_tps;
    row["latency_p50_ms"] = r.latency_p50_ms;
    row["latency_p95_ms"] = r.latency_p95_ms;
    row["latency_p99_ms"] = r.latency_p99_ms;
    row["bytes_ledger_growth"] = r.bytes_ledger_growth;
    row["peak_memory_bytes"] = r.peak_memory_bytes;
    row["committed_app_entries"] = r.committed_app_entries;
    row["trace_digest"] = r.trace_digest;
    row["host"] = "single-host in-process";
    return row;
}

std::string rows_to_csv(const std::vector<json>& rows)
{
    std::string out;
    const auto& cols = report_columns();
    for (std::size_t i = 0; i < cols.size(); ++i)
        out += (i ? "," : "") + cols[i];
    out += "\n";
    for (const auto& row : rows)
    {
        for (std::size_t i = 0; i < cols.size(); ++i)
            out += (i ? "," : "") + csv_field(row.at(cols[i]));
        out += "\n";
    }
    return out;
}

std::vector<json> csv_to_rows(const std::string& csv)
{
    auto table = split_csv(csv);
    if (table.empty())
        throw Error(ErrorCode::Parse, "empty CSV");
    std::vector<std::string> header;
    for (const auto& [f, q] : table[0])
        header.push_back(f);
    std::vector<json> rows;
    for (std::size_t r = 1; r < table.size(); ++r)
    {
        if (table[r].size() != header.size())
            throw Error(ErrorCode::Parse, "CSV row " + std::to_string(r) + " has " + std::to_string(table[r].size()) +
                                              " fields, expected " + std::to_string(header.size()));
        json row = json::object();
        for (std::size_t i = 0; i < header.size(); ++i)
            row[header[i]] = csv_value(table[r][i].first, table[r][i].second);
        rows.push_back(row);
    }
    return rows;
}

SuiteResult run_suite(const std::vector<Scenario>& scenarios, const fs::path& work_dir,
                      const std::optional<fs::path>& out_dir)
{
    if (scenarios.empty())
        throw Error(ErrorCode::Validation, "suite needs at least one scenario");
    SuiteResult out;
    for (const auto& s : scenarios)
    {
        spdlog::info("running scenario {}", s.name);
        out.reports.push_back(run_scenario(s, work_dir));
        out.rows.push_back(report_to_row(out.reports.back()));
    }
    if (out_dir)
    {
        fs::create_directories(*out_dir);
        std::ofstream csv(*out_dir / "report.csv", std::ios::trunc);
        csv << rows_to_csv(out.rows);
        json doc = {{"columns", report_columns()}, {"rows", out.rows}};
        std::ofstream js(*out_dir / "report.json", std::ios::trunc);
        js << doc.dump(2) << "\n";
        if (!csv || !js)
            throw Error(ErrorCode::Io, "cannot write reports to '" + out_dir->string() + "'");
    }
    return out;
}

std::vector<BenchReport> scaling_table(const Scenario& base, const std::vector<std::size_t>& sizes,
                                       const fs::path& work_dir)
{
    std::vector<BenchReport> out;
    for (auto n : sizes)
    {
        auto s = base;
        s.cluster_size = n;
        s.name = base.name + "-n" + std::to_string(n);
        out.push_back(run_scenario(s, work_dir));
    }
    return out;
}

// ---------------------------------------------------------------- probes

std::vector<ProbeResult> attack_probes(Cluster& c)
{
    static const std::string kSentinel = "PRB-SENTINEL-4Q2";
    std::vector<ProbeResult> out;
    bool confidential = c.node(0)->status()["confidential_mode"].get<bool>();

    // 1. Plaintext sentinel in persisted files.
    std::optional<std::uint64_t> private_seqno;
    {
        ProbeResult p{"ledger_plaintext_scan", "", false, false, ""};
        c.app("cb", "/app/mint", {{"to", "bank0"}, {"amount", 10}, {"nonce", "probe-fund"}});
        auto w = c.app("bank0", "/app/transfer",
                       {{"to", "bank1"}, {"amount", 1}, {"private", true}, {"memo", kSentinel}, {"nonce", "probe"}});
        if (w.status == 200)
            private_seqno = w.body["seqno"].get<std::uint64_t>();
        c.wait_applied(c.commit_index());
        std::size_t hits = 0, scanned = 0;
        for (const auto& f : c.persisted_files())
        {
            auto bytes = ledger::read_file(f);
            ++scanned;
            hits += std::search(bytes.begin(), bytes.end(), kSentinel.begin(), kSentinel.end()) != bytes.end();
        }
        p.outcome = hits == 0 ? "rejected" : "succeeded";
        p.pass = hits == 0 && private_seqno.has_value();
        p.expected_baseline_failure = !confidential && hits > 0;
        p.detail = "sentinel found in " + std::to_string(hits) + " of " + std::to_string(scanned) + " files";
        out.push_back(p);
    }

    // 2. Operator identity reading a private transaction.
    {
        ProbeResult p{"operator_private_read", "", false, false, ""};
        std::size_t refused = 0, tried = 0;
        for (std::size_t i = 0; i < c.size() && private_seqno; ++i)
        {
            if (!c.alive(i))
                continue;
            auto* n = c.node(i);
            json body = {{"seqno", *private_seqno}};
            auto sig = n->operator_sign(as_view(request_signing_bytes("/app/tx", body)));
            auto r = n->call("POST", "/app/tx", {{"signer", n->id()}, {"body", body}, {"signature", crypto::signature_hex(sig)}});
            ++tried;
            refused += r.status == 403;
        }
        p.outcome = tried > 0 && refused == tried ? "rejected" : "succeeded";
        p.pass = tried > 0 && refused == tried;
        p.detail = std::to_string(refused) + " of " + std::to_string(tried) + " operator reads refused";
        out.push_back(p);
    }

    // 3. Receipt forgery.
    {
        ProbeResult p{"receipt_forgery", "", false, false, ""};
        std::optional<ledger::Receipt> receipt;
        for (int i = 0; i < 500 && private_seqno && !receipt; ++i)
        {
            auto r = c.call(0, "GET", "/node/receipt/" + std::to_string(*private_seqno));
            if (r.status == 200)
                receipt = ledger::decode_receipt(as_view(from_hex(r.body["receipt"].get<std::string>())));
            else
                std::this_thread::sleep_for(10ms);
        }
        if (!receipt)
        {
            p.outcome = "error";
            p.detail = "no receipt available";
        }
        else
        {
            auto trusted = c.service_identity();
            auto forger = crypto::KeyPair::from_label("probe-forger");
            std::vector<ledger::Receipt> forged;
            auto a = *receipt;
            a.entry_digest.bytes[0] ^= 1;
            forged.push_back(a);
            auto b = *receipt;
            b.root.bytes[5] ^= 0x80;
            b.root_signature = forger.sign(b.root.view());
            forged.push_back(b);
            auto d = *receipt;
            d.service_identity = forger.public_key();
            d.root_signature = forger.sign(d.root.view());
            forged.push_back(d);
            auto e = *receipt;
            e.seqno += 1;
            forged.push_back(e);
            std::size_t rejected = 0;
            for (const auto& f : forged)
                rejected += !ledger::verify_receipt(f, trusted);
            bool honest = ledger::verify_receipt(*receipt, trusted);
            p.pass = honest && rejected == forged.size();
            p.outcome = rejected == forged.size() ? "rejected" : "succeeded";
            p.detail = std::to_string(rejected) + " of " + std::to_string(forged.size()) +
                       " forged receipts rejected; honest receipt " + (honest ? "verifies" : "FAILS");
        }
        out.push_back(p);
    }

    // 4. Join with a quote signed by an untrusted platform key.
    {
        ProbeResult p{"forged_quote_join", "", false, false, ""};
        auto leader = c.leader();
        if (!leader)
        {
            p.outcome = "error";
            p.detail = "no leader";
        }
        else
        {
            auto before = c.node(*leader)->status()["consensus_members"];
            auto rogue_platform = enclave::Platform::from_label(c.config(0).enclave.platform_id, "rogue-platform-key");
            auto rogue_node = crypto::KeyPair::from_label("probe-rogue-node");
            auto q = enclave::quote(c.measurement(), rogue_node.public_key(), rogue_platform);
            auto r = c.node(*leader)->call("POST", "/node/join",
                                           {{"quote", to_hex(as_view(enclave::encode_quote(q)))},
                                            {"node_address", "rogue.invalid:7999"},
                                            {"rpc_address", "rogue.invalid:8999"}});
            std::this_thread::sleep_for(50ms);
            auto after = c.node(*leader)->status()["consensus_members"];
            bool denied = r.status == 403 && before == after;
            p.pass = denied;
            p.outcome = denied ? "rejected" : "succeeded";
            p.expected_baseline_failure = !confidential && !denied;
            p.detail = "join status " + std::to_string(r.status) + " (" + r.body.value("reason", "") +
                       "), members " + std::to_string(before.size()) + " -> " + std::to_string(after.size());
        }
        out.push_back(p);
    }
    return out;
}

json probes_to_json(const std::vector<ProbeResult>& probes)
{
    json out = json::array();
    for (const auto& p : probes)
        out.push_back({{"probe", p.probe},
                       {"outcome", p.outcome},
                       {"pass", p.pass},
                       {"expected_baseline_failure", p.expected_baseline_failure},
                       {"detail", p.detail}});
    return out;
}

} // namespace ccl::bench
