#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace ccl::node {

struct InitialMember
{
    std::string id;
    std::string public_key;

    bool operator==(const InitialMember&) const = default;
};

struct StartConfig
{
    std::string constitution_path;
    std::vector<InitialMember> initial_members;
    std::string node_address;
    std::string rpc_address;
    std::string ledger_path;

    bool operator==(const StartConfig&) const = default;
};

struct JoinConfig
{
    std::string target_rpc_address;
    std::string node_address;
    std::string rpc_address;
    std::string ledger_path;

    bool operator==(const JoinConfig&) const = default;
};

struct EnclaveConfig
{
    std::string platform_id;
    std::string code_blob_path;
    /// Start only: platforms trusted at genesis; defaults to the node's own platform.
    std::vector<std::string> trusted_platform_ids;

    bool operator==(const EnclaveConfig&) const = default;
};

enum class TransportKind
{
    Tcp,
    Loopback,
};

enum class Command
{
    Start,
    Join,
};

struct NodeConfig
{
    Command command = Command::Start;
    std::optional<StartConfig> start;
    std::optional<JoinConfig> join;
    EnclaveConfig enclave;
    bool confidential_mode = true;
    /// Defaults to "<ledger_path>.state"; overridden by CCL_DATA_DIR.
    std::string data_dir;
    TransportKind transport = TransportKind::Tcp;
    std::uint32_t tick_ms = 10;

    bool operator==(const NodeConfig&) const = default;

    const std::string& node_address() const;
    const std::string& rpc_address() const;
    const std::string& ledger_path() const;
    /// Resolved data directory, honouring CCL_DATA_DIR.
    std::filesystem::path resolved_data_dir() const;
};

inline constexpr const char* kDataDirEnv = "CCL_DATA_DIR";
/// Schema version; configs may omit it.
inline constexpr std::int64_t kConfigVersion = 1;

/// Throws Error(Parse) naming the offending field path (e.g. "start.rpc_address").
NodeConfig parse_config(const nlohmann::json& j);
NodeConfig load_config(const std::filesystem::path& path);
nlohmann::json serialize_config(const NodeConfig& c);

/// host:port with a non-empty host and port in 1..65535.
bool valid_address(const std::string& s);
std::pair<std::string, std::uint16_t> split_address(const std::string& s);

} // namespace ccl::node
