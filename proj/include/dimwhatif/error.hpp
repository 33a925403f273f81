#pragma once

#include <stdexcept>
#include <string>

namespace dimwhatif {

// Contract violation carrying a machine-readable code ("duplicate_row_id",
// "dimension_mismatch", ...). The message is for humans.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

inline void require(bool condition, const char* code, const std::string& message) {
    if (!condition) throw Error(code, message);
}

}  // namespace dimwhatif
