#pragma once

#include <stdexcept>
#include <string>

namespace ilvr {

enum class IoErrc {
    open_failed,
    bad_magic,
    truncated,
    unsupported_dtype,
    malformed_header,
    unsupported_maxval,
    bad_document,
};

inline const char* to_string(IoErrc e) {
    switch (e) {
    case IoErrc::open_failed: return "open_failed";
    case IoErrc::bad_magic: return "bad_magic";
    case IoErrc::truncated: return "truncated";
    case IoErrc::unsupported_dtype: return "unsupported_dtype";
    case IoErrc::malformed_header: return "malformed_header";
    case IoErrc::unsupported_maxval: return "unsupported_maxval";
    case IoErrc::bad_document: return "bad_document";
    }
    return "?";
}

class IoError : public std::runtime_error {
public:
    IoError(IoErrc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    IoErrc code() const noexcept { return code_; }

private:
    IoErrc code_;
};

/// Non-finite values in a loss or sampler state.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

} // namespace ilvr
