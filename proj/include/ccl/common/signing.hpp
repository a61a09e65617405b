#pragma once

#include "ccl/common/bytes.hpp"

#include <json.hpp>

#include <string_view>

namespace ccl {

/// Bytes a client signs for a request: "ccl-request-v1\n" ‖ path ‖ "\n" ‖ compact JSON with sorted keys.
Bytes request_signing_bytes(std::string_view path, const nlohmann::json& body);

} // namespace ccl
