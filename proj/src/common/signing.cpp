#include "ccl/common/signing.hpp"

namespace ccl {

Bytes request_signing_bytes(std::string_view path, const nlohmann::json& body)
{
    std::string s = "ccl-request-v1\n";
    s.append(path);
    s.push_back('\n');
    s += body.dump();
    return to_bytes(s);
}

} // namespace ccl
