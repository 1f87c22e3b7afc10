#pragma once

#include <stdexcept>
#include <string>

namespace bokeh {

enum class ErrorCode {
    file_unreadable,
    file_unwritable,
    unsupported_format,
    invalid_argument,
    shape_mismatch,
    kernel_too_large,
    non_finite,
    malformed_config,
    malformed_dataset,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
    throw Error(code, what);
}

} // namespace bokeh
