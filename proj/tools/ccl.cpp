// Operator CLI. Every command prints one JSON document on stdout; failures
// print {"error": {"code", "message"}} and exit 1, usage errors exit 2.

#include "ccl/bench/bench.hpp"
#include "ccl/common/signing.hpp"
#include "ccl/ledger/ledger.hpp"
#include "ccl/ledger/receipt.hpp"
#include "ccl/node/client.hpp"
#include "ccl/node/node.hpp"
#include "ccl/settlement/settlement.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

using namespace ccl;
using json = nlohmann::json;
using ccl::node::Response;
namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

std::atomic<bool> stop_requested{false};

void on_signal(int) { stop_requested = true; }

std::string read_text(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, ByteView data)
{
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!out)
        throw Error(ErrorCode::Io, "cannot write '" + p.string() + "'");
}

void write_text(const fs::path& p, const std::string& s) { write_bytes(p, as_view(to_bytes(s))); }

std::string trim(std::string s)
{
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
        s.pop_back();
    auto first = s.find_first_not_of(" \t\r\n");
    return first == std::string::npos ? "" : s.substr(first);
}

/// Accepts inline JSON or "@file".
json json_arg(const std::string& text, const std::string& what)
{
    auto src = !text.empty() && text[0] == '@' ? read_text(text.substr(1)) : text;
    try
    {
        return json::parse(src);
    }
    catch (const json::exception& e)
    {
        throw Error(ErrorCode::Parse, what + ": " + e.what());
    }
}

crypto::KeyPair load_key(const fs::path& p)
{
    return crypto::KeyPair::from_seed(as_view(from_hex(trim(read_text(p)))));
}

crypto::PublicKey load_public(const fs::path& p) { return crypto::PublicKey::from_hex(trim(read_text(p))); }

void print(const json& j) { std::cout << j.dump(2) << std::endl; }

/// Maps a node response onto the CLI contract.
int emit(const Response& r)
{
    print(r.body);
    return r.status == 200 ? 0 : 1;
}

int run_node(const std::string& config_file, bool recover)
{
    auto config = node::load_config(config_file);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    node::NodeOptions options;
    options.recover = recover;
    auto n = node::Node::launch(config, options);
    auto st = n->status();
    print({{"event", "running"},
           {"node_id", n->id()},
           {"rpc_address", config.rpc_address()},
           {"role", st["role"]},
           {"service_identity", st["service_identity"]}});
    while (!stop_requested && n->running())
        std::this_thread::sleep_for(100ms);
    if (!stop_requested)
    {
        print({{"error", {{"code", "halted"}, {"message", "node halted; see stderr"}}}});
        return 1;
    }
    n->stop();
    return 0;
}

struct Signed
{
    std::string rpc;
    std::string signer;
    std::string key_file;
};

void add_signed(CLI::App* cmd, Signed& s)
{
    cmd->add_option("--rpc", s.rpc, "Node RPC address host:port")->required();
    cmd->add_option("--signer", s.signer, "Signer id (member or party)")->required();
    cmd->add_option("--key", s.key_file, "Signer key file (hex seed)")->required()->check(CLI::ExistingFile);
}

struct AppVerb
{
    const char* verb;
    const char* path;
    const char* cosign_field;
};

constexpr AppVerb kAppVerbs[] = {
    {"mint", "/app/mint", nullptr},
    {"redeem", "/app/redeem", "cb_signature"},
    {"transfer", "/app/transfer", nullptr},
    {"issue-claim", "/app/claims/issue", nullptr},
    {"retire-claim", "/app/claims/retire", nullptr},
    {"register-asset", "/app/assets/register", nullptr},
    {"transfer-asset", "/app/assets/transfer", nullptr},
    {"dvp", "/app/dvp", "buyer_signature"},
    {"balance", "/app/balance", nullptr},
    {"asset", "/app/asset", nullptr},
    {"tx", "/app/tx", nullptr},
};

json verdict_json(const ledger::ChainVerdict& v)
{
    const char* status = v.status == ledger::ChainVerdict::Status::Ok              ? "ok"
                         : v.status == ledger::ChainVerdict::Status::FirstBadSeqno ? "first_bad_seqno"
                                                                                   : "io_error";
    json j = {{"ok", v.ok()}, {"status", status}, {"entries_checked", v.entries_checked}, {"detail", v.detail}};
    if (v.seqno)
        j["seqno"] = *v.seqno;
    return j;
}

} // namespace

int main(int argc, char** argv)
{
    crypto::init();
    spdlog::set_default_logger(spdlog::stderr_color_mt("ccl"));
    spdlog::set_level(spdlog::level::warn);

    CLI::App app{"ccl: confidential consortium ledger node and operator tool"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Log node activity to stderr");

    std::function<int()> action;

    // node
    auto* node_cmd = app.add_subcommand("node", "Run or inspect a node")->require_subcommand(1);
    std::string config_file, rpc, out_file;
    bool recover = false;
    for (const char* verb : {"start", "join"})
    {
        auto* c = node_cmd->add_subcommand(verb, std::string(verb) == "start" ? "Start a new service" : "Join a service");
        c->add_option("--config", config_file, "Node config JSON")->required()->check(CLI::ExistingFile);
        c->add_flag("--recover", recover, "Reopen existing state in the data directory");
        c->callback([&, verb] {
            action = [&, verb] {
                auto cfg = node::load_config(config_file);
                auto want = std::string(verb) == "start" ? node::Command::Start : node::Command::Join;
                if (cfg.command != want)
                    throw Error(ErrorCode::Config, std::string("config command is not '") + verb + "'");
                return run_node(config_file, recover);
            };
        });
    }
    auto* status_cmd = node_cmd->add_subcommand("status", "Print node status");
    status_cmd->add_option("--rpc", rpc)->required();
    status_cmd->callback([&] { action = [&] { return emit(node::Client(rpc).get("/node/status")); }; });

    auto* skey_cmd = node_cmd->add_subcommand("service-key", "Fetch the service identity public key");
    skey_cmd->add_option("--rpc", rpc)->required();
    skey_cmd->add_option("--out", out_file, "Write the key (hex) to this file");
    skey_cmd->callback([&] {
        action = [&] {
            auto r = node::Client(rpc).get("/gov/service");
            if (r.status != 200)
                return emit(r);
            auto key = r.body["service_identity"].get<std::string>();
            if (!out_file.empty())
                write_text(out_file, key + "\n");
            print({{"service_identity", key}});
            return 0;
        };
    });

    std::uint64_t seqno = 0;
    double wait_s = 10;
    auto* receipt_cmd = node_cmd->add_subcommand("receipt", "Fetch a signed receipt for a seqno");
    receipt_cmd->add_option("--rpc", rpc)->required();
    receipt_cmd->add_option("--seqno", seqno)->required();
    receipt_cmd->add_option("--out", out_file, "Write the binary receipt here")->required();
    receipt_cmd->add_option("--wait", wait_s, "Seconds to wait for a covering signature");
    receipt_cmd->callback([&] {
        action = [&] {
            node::Client client(rpc);
            auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(wait_s);
            Response r;
            do
            {
                r = client.get("/node/receipt/" + std::to_string(seqno));
                if (r.status != 202)
                    break;
                std::this_thread::sleep_for(50ms);
            } while (std::chrono::steady_clock::now() < deadline);
            if (r.status != 200)
                return emit(r);
            write_bytes(out_file, as_view(from_hex(r.body["receipt"].get<std::string>())));
            print({{"seqno", seqno}, {"receipt", out_file}, {"service_identity", r.body["service_identity"]}});
            return 0;
        };
    });

    // keygen
    std::string key_prefix;
    auto* keygen = app.add_subcommand("keygen", "Generate an Ed25519 key pair");
    keygen->add_option("--out", key_prefix, "Writes PREFIX.key (seed hex) and PREFIX.pub")->required();
    keygen->callback([&] {
        action = [&] {
            auto k = crypto::KeyPair::generate();
            write_text(key_prefix + ".key", to_hex(as_view(k.seed())) + "\n");
            write_text(key_prefix + ".pub", k.public_key().hex() + "\n");
            print({{"public_key", k.public_key().hex()}, {"key_file", key_prefix + ".key"}});
            return 0;
        };
    });

    // gov
    auto* gov = app.add_subcommand("gov", "Governance proposals and ballots")->require_subcommand(1);
    Signed sg;
    std::string action_text, ballot = "yes";
    std::uint64_t proposal_id = 0;
    auto* propose = gov->add_subcommand("propose", "Submit a proposal");
    add_signed(propose, sg);
    propose->add_option("--action", action_text, "Action JSON {kind, args} or @file")->required();
    propose->callback([&] {
        action = [&] {
            auto a = governance::action_from_json(json_arg(action_text, "--action"));
            return emit(node::Client(sg.rpc).signed_post("/gov/proposals", sg.signer,
                                                         {{"action", governance::action_to_json(a)}},
                                                         load_key(sg.key_file)));
        };
    });
    auto* vote = gov->add_subcommand("vote", "Cast a ballot");
    add_signed(vote, sg);
    vote->add_option("--proposal", proposal_id)->required();
    vote->add_option("--ballot", ballot)->check(CLI::IsMember({"yes", "no"}));
    vote->callback([&] {
        action = [&] {
            auto path = "/gov/proposals/" + std::to_string(proposal_id) + "/ballots";
            return emit(node::Client(sg.rpc).signed_post(path, sg.signer, {{"ballot", ballot}}, load_key(sg.key_file)));
        };
    });
    auto* show = gov->add_subcommand("show", "Show a proposal");
    show->add_option("--rpc", rpc)->required();
    show->add_option("--proposal", proposal_id)->required();
    show->callback([&] {
        action = [&] { return emit(node::Client(rpc).get("/gov/proposals/" + std::to_string(proposal_id))); };
    });
    auto* service = gov->add_subcommand("service", "Show service phase and governance state");
    service->add_option("--rpc", rpc)->required();
    service->callback([&] { action = [&] { return emit(node::Client(rpc).get("/gov/service")); }; });

    // app
    auto* appc = app.add_subcommand("app", "Signed settlement requests")->require_subcommand(1);
    Signed sa;
    std::string body_text, cosign_key;
    for (const auto& v : kAppVerbs)
    {
        auto* c = appc->add_subcommand(v.verb, std::string("POST ") + v.path);
        add_signed(c, sa);
        c->add_option("--body", body_text, "Request body JSON or @file")->required();
        if (v.cosign_field)
            c->add_option("--cosign-key", cosign_key, std::string("Key for ") + v.cosign_field)
                ->check(CLI::ExistingFile);
        c->callback([&, v] {
            action = [&, v] {
                auto body = json_arg(body_text, "--body");
                if (v.cosign_field && !cosign_key.empty())
                    body[v.cosign_field] = crypto::signature_hex(
                        load_key(cosign_key).sign(as_view(settlement::cosign_bytes(v.path, body, v.cosign_field))));
                return emit(node::Client(sa.rpc).signed_post(v.path, sa.signer, body, load_key(sa.key_file)));
            };
        });
    }

    // audit
    auto* audit = app.add_subcommand("audit", "Offline verification")->require_subcommand(1);
    std::string input, service_key;
    auto* vchain = audit->add_subcommand("verify-chain", "Verify every digest and signed root of a ledger file");
    vchain->add_option("ledger", input)->required()->check(CLI::ExistingFile);
    vchain->add_option("--service-key", service_key)->required()->check(CLI::ExistingFile);
    vchain->callback([&] {
        action = [&] {
            auto v = ledger::verify_chain(input, load_public(service_key));
            auto j = verdict_json(v);
            if (!v.ok())
            {
                print({{"error", {{"code", "verification_failed"}, {"message", v.detail}}}, {"verdict", j}});
                return 1;
            }
            print(j);
            return 0;
        };
    });
    auto* vreceipt = audit->add_subcommand("verify-receipt", "Verify a binary receipt against the service key");
    vreceipt->add_option("receipt", input)->required()->check(CLI::ExistingFile);
    vreceipt->add_option("--service-key", service_key)->required()->check(CLI::ExistingFile);
    vreceipt->callback([&] {
        action = [&] {
            auto bytes = to_bytes(read_text(input));
            ledger::Receipt r;
            try
            {
                r = ledger::decode_receipt(as_view(bytes));
            }
            catch (const Error& e)
            {
                print({{"error", {{"code", "verification_failed"}, {"message", std::string("malformed receipt: ") + e.what()}}}});
                return 1;
            }
            if (!ledger::verify_receipt(r, load_public(service_key)))
            {
                print({{"error",
                        {{"code", "verification_failed"},
                         {"message", "receipt does not verify against the service key"}}},
                       {"seqno", r.seqno}});
                return 1;
            }
            print({{"ok", true}, {"seqno", r.seqno}, {"root", r.root.hex()}});
            return 0;
        };
    });

    // enclave
    auto* encl = app.add_subcommand("enclave", "Enclave utilities")->require_subcommand(1);
    std::string blob;
    auto* measure = encl->add_subcommand("measure", "Print the measurement a node would report for a code blob");
    measure->add_option("--code-blob", blob)->required()->check(CLI::ExistingFile);
    measure->callback([&] {
        action = [&] {
            print({{"measurement", node::measurement_for_blob(blob).hex()}});
            return 0;
        };
    });

    // bench
    auto* benchc = app.add_subcommand("bench", "Benchmarks and security probes")->require_subcommand(1);
    std::string scenario_file, out_dir, work_dir;
    auto* brun = benchc->add_subcommand("run", "Run scenarios and write report.csv and report.json");
    brun->add_option("--scenario", scenario_file)->required()->check(CLI::ExistingFile);
    brun->add_option("--out", out_dir)->required();
    brun->add_option("--work-dir", work_dir, "Scratch directory for cluster state");
    brun->callback([&] {
        action = [&] {
            auto scenarios = bench::load_scenarios(scenario_file);
            auto wd = work_dir.empty() ? fs::path(out_dir) / "work" : fs::path(work_dir);
            auto res = bench::run_suite(scenarios, wd, fs::path(out_dir));
            std::error_code ec;
            if (work_dir.empty())
                fs::remove_all(wd, ec);
            print({{"rows", res.rows}, {"csv", (fs::path(out_dir) / "report.csv").string()}});
            bool ok = std::all_of(res.reports.begin(), res.reports.end(),
                                  [](const bench::BenchReport& r) { return r.status.rfind("failed", 0) != 0; });
            return ok ? 0 : 1;
        };
    });
    std::size_t probe_nodes = 3;
    std::string probe_mode = "on";
    auto* bprobe = benchc->add_subcommand("probes", "Run the attack probes against a fresh in-process cluster");
    bprobe->add_option("--nodes", probe_nodes)->check(CLI::Range(1, 9));
    bprobe->add_option("--confidential", probe_mode)->check(CLI::IsMember({"on", "off"}));
    bprobe->add_option("--out", out_file, "Also write the JSON here");
    bprobe->callback([&] {
        action = [&] {
            auto dir = fs::temp_directory_path() / ("ccl-probes-" + std::to_string(::getpid()));
            json j;
            {
                bench::ClusterOptions o;
                o.dir = dir;
                o.nodes = probe_nodes;
                o.members = 1;
                o.banks = 2;
                o.confidential = probe_mode == "on";
                bench::Cluster c(o);
                c.open();
                j = bench::probes_to_json(bench::attack_probes(c));
            }
            std::error_code ec;
            fs::remove_all(dir, ec);
            if (!out_file.empty())
                write_text(out_file, j.dump(2) + "\n");
            print(j);
            return 0;
        };
    });

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e)
    {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e)
    {
        app.exit(e);
        return 2;
    }
    if (verbose)
        spdlog::set_level(spdlog::level::info);
    try
    {
        return action ? action() : 2;
    }
    catch (const Error& e)
    {
        print({{"error", {{"code", error_code_name(e.code())}, {"message", e.what()}}}});
        return 1;
    }
    catch (const std::exception& e)
    {
        print({{"error", {{"code", "internal"}, {"message", e.what()}}}});
        return 1;
    }
}
