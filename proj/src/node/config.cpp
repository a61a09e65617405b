#include "ccl/node/config.hpp"
#include "ccl/common/error.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>

namespace ccl::node {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& field, const std::string& why)
{
    throw Error(ErrorCode::Parse, "config." + field + ": " + why);
}

void only_keys(const json& j, const std::string& where, std::initializer_list<const char*> keys)
{
    for (auto it = j.begin(); it != j.end(); ++it)
    {
        bool known = false;
        for (auto* k : keys)
            known = known || it.key() == k;
        if (!known)
            bad(where.empty() ? it.key() : where + "." + it.key(), "unknown field");
    }
}

const json& object_at(const json& j, const std::string& where, const char* key)
{
    auto path = where.empty() ? std::string(key) : where + "." + key;
    if (!j.contains(key))
        bad(path, "missing");
    if (!j[key].is_object())
        bad(path, "expected an object");
    return j[key];
}

std::string string_at(const json& j, const std::string& where, const char* key)
{
    auto path = where + "." + key;
    if (!j.contains(key))
        bad(path, "missing");
    if (!j[key].is_string() || j[key].get<std::string>().empty())
        bad(path, "expected a non-empty string");
    return j[key].get<std::string>();
}

std::string address_at(const json& j, const std::string& where, const char* key)
{
    auto s = string_at(j, where, key);
    if (!valid_address(s))
        bad(where + "." + key, "expected host:port, got '" + s + "'");
    return s;
}

} // namespace

bool valid_address(const std::string& s)
{
    auto colon = s.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == s.size())
        return false;
    auto port_str = std::string_view(s).substr(colon + 1);
    unsigned port = 0;
    auto [ptr, ec] = std::from_chars(port_str.data(), port_str.data() + port_str.size(), port);
    if (ec != std::errc() || ptr != port_str.data() + port_str.size() || port == 0 || port > 65535)
        return false;
    auto host = std::string_view(s).substr(0, colon);
    for (char ch : host)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '.' || ch == '-' || ch == '_'))
            return false;
    return true;
}

std::pair<std::string, std::uint16_t> split_address(const std::string& s)
{
    if (!valid_address(s))
        throw Error(ErrorCode::Parse, "not a host:port address: '" + s + "'");
    auto colon = s.rfind(':');
    return {s.substr(0, colon), static_cast<std::uint16_t>(std::stoul(s.substr(colon + 1)))};
}

const std::string& NodeConfig::node_address() const { return start ? start->node_address : join->node_address; }
const std::string& NodeConfig::rpc_address() const { return start ? start->rpc_address : join->rpc_address; }
const std::string& NodeConfig::ledger_path() const { return start ? start->ledger_path : join->ledger_path; }

std::filesystem::path NodeConfig::resolved_data_dir() const
{
    if (const char* env = std::getenv(kDataDirEnv); env && *env)
        return env;
    if (!data_dir.empty())
        return data_dir;
    return ledger_path() + ".state";
}

NodeConfig parse_config(const json& j)
{
    if (!j.is_object())
        bad("", "expected a JSON object");
    only_keys(j, "", {"version", "command", "start", "join", "enclave", "confidential_mode", "data_dir", "transport",
                      "tick_ms"});
    if (j.contains("version") && (!j["version"].is_number_integer() || j["version"].get<std::int64_t>() != kConfigVersion))
        bad("version", "unsupported config version (expected " + std::to_string(kConfigVersion) + ")");
    NodeConfig c;
    if (!j.contains("command") || !j["command"].is_string())
        bad("command", "expected \"start\" or \"join\"");
    auto cmd = j["command"].get<std::string>();
    if (cmd == "start")
        c.command = Command::Start;
    else if (cmd == "join")
        c.command = Command::Join;
    else
        bad("command", "expected \"start\" or \"join\", got '" + cmd + "'");
    if (j.contains("start") && j.contains("join"))
        bad("start", "exactly one of 'start' and 'join' may be present");
    if (c.command == Command::Start)
    {
        if (j.contains("join"))
            bad("join", "not allowed when command is start");
        const auto& s = object_at(j, "", "start");
        only_keys(s, "start", {"constitution_path", "initial_members", "node_address", "rpc_address", "ledger_path"});
        StartConfig sc;
        sc.constitution_path = string_at(s, "start", "constitution_path");
        if (!s.contains("initial_members") || !s["initial_members"].is_array() || s["initial_members"].empty())
            bad("start.initial_members", "expected a non-empty array");
        for (std::size_t i = 0; i < s["initial_members"].size(); ++i)
        {
            const auto& m = s["initial_members"][i];
            auto where = "start.initial_members[" + std::to_string(i) + "]";
            if (!m.is_object())
                bad(where, "expected an object");
            only_keys(m, where, {"id", "public_key"});
            InitialMember im{string_at(m, where, "id"), string_at(m, where, "public_key")};
            if (im.public_key.size() != 64 ||
                im.public_key.find_first_not_of("0123456789abcdefABCDEF") != std::string::npos)
                bad(where + ".public_key", "expected 64 hex characters");
            sc.initial_members.push_back(im);
        }
        sc.node_address = address_at(s, "start", "node_address");
        sc.rpc_address = address_at(s, "start", "rpc_address");
        sc.ledger_path = string_at(s, "start", "ledger_path");
        c.start = sc;
    }
    else
    {
        if (j.contains("start"))
            bad("start", "not allowed when command is join");
        const auto& s = object_at(j, "", "join");
        only_keys(s, "join", {"target_rpc_address", "node_address", "rpc_address", "ledger_path"});
        JoinConfig jc;
        jc.target_rpc_address = address_at(s, "join", "target_rpc_address");
        jc.node_address = address_at(s, "join", "node_address");
        jc.rpc_address = address_at(s, "join", "rpc_address");
        jc.ledger_path = string_at(s, "join", "ledger_path");
        c.join = jc;
    }
    const auto& e = object_at(j, "", "enclave");
    only_keys(e, "enclave", {"platform_id", "code_blob_path", "trusted_platform_ids"});
    c.enclave.platform_id = string_at(e, "enclave", "platform_id");
    c.enclave.code_blob_path = string_at(e, "enclave", "code_blob_path");
    if (e.contains("trusted_platform_ids"))
    {
        if (!e["trusted_platform_ids"].is_array())
            bad("enclave.trusted_platform_ids", "expected an array of strings");
        for (const auto& id : e["trusted_platform_ids"])
        {
            if (!id.is_string() || id.get<std::string>().empty())
                bad("enclave.trusted_platform_ids", "expected an array of non-empty strings");
            c.enclave.trusted_platform_ids.push_back(id.get<std::string>());
        }
    }
    if (j.contains("confidential_mode"))
    {
        if (!j["confidential_mode"].is_boolean())
            bad("confidential_mode", "expected a boolean");
        c.confidential_mode = j["confidential_mode"].get<bool>();
    }
    if (j.contains("data_dir"))
    {
        if (!j["data_dir"].is_string())
            bad("data_dir", "expected a string");
        c.data_dir = j["data_dir"].get<std::string>();
    }
    if (j.contains("transport"))
    {
        auto t = j["transport"].is_string() ? j["transport"].get<std::string>() : std::string();
        if (t == "tcp")
            c.transport = TransportKind::Tcp;
        else if (t == "loopback")
            c.transport = TransportKind::Loopback;
        else
            bad("transport", "expected \"tcp\" or \"loopback\"");
    }
    if (j.contains("tick_ms"))
    {
        if (!j["tick_ms"].is_number_unsigned() || j["tick_ms"].get<std::uint64_t>() == 0 ||
            j["tick_ms"].get<std::uint64_t>() > 1000)
            bad("tick_ms", "expected an integer in 1..1000");
        c.tick_ms = j["tick_ms"].get<std::uint32_t>();
    }
    return c;
}

NodeConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw Error(ErrorCode::Io, "cannot read config '" + path.string() + "'");
    json j;
    try
    {
        j = json::parse(in);
    }
    catch (const json::parse_error& e)
    {
        throw Error(ErrorCode::Parse, "config: invalid JSON: " + std::string(e.what()));
    }
    return parse_config(j);
}

json serialize_config(const NodeConfig& c)
{
    json j;
    j["version"] = kConfigVersion;
    j["command"] = c.command == Command::Start ? "start" : "join";
    if (c.start)
    {
        json members = json::array();
        for (const auto& m : c.start->initial_members)
            members.push_back({{"id", m.id}, {"public_key", m.public_key}});
        j["start"] = {{"constitution_path", c.start->constitution_path},
                      {"initial_members", members},
                      {"node_address", c.start->node_address},
                      {"rpc_address", c.start->rpc_address},
                      {"ledger_path", c.start->ledger_path}};
    }
    if (c.join)
        j["join"] = {{"target_rpc_address", c.join->target_rpc_address},
                     {"node_address", c.join->node_address},
                     {"rpc_address", c.join->rpc_address},
                     {"ledger_path", c.join->ledger_path}};
    j["enclave"] = {{"platform_id", c.enclave.platform_id}, {"code_blob_path", c.enclave.code_blob_path}};
    if (!c.enclave.trusted_platform_ids.empty())
        j["enclave"]["trusted_platform_ids"] = c.enclave.trusted_platform_ids;
    j["confidential_mode"] = c.confidential_mode;
    if (!c.data_dir.empty())
        j["data_dir"] = c.data_dir;
    j["transport"] = c.transport == TransportKind::Tcp ? "tcp" : "loopback";
    j["tick_ms"] = c.tick_ms;
    return j;
}

} // namespace ccl::node
