#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ccl {

enum class ErrorCode
{
    Io,
    Config,
    Parse,
    Decode,
    NotFound,
    NotYetSigned,
    NotLeader,
    Authorization,
    Authentication,
    Validation,
    State,
    InsufficientFunds,
    InsufficientAsset,
    Backing,
    Duplicate,
    ServiceNotOpen,
    Timeout,
    Unavailable,
};

std::string_view error_code_name(ErrorCode code);

/// Library-wide exception; `code()` is stable and machine-readable.
class Error : public std::runtime_error
{
  public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

  private:
    ErrorCode code_;
};

} // namespace ccl
