#pragma once

#include <stdexcept>
#include <string>

namespace dtk {

// Bad user input: missing/malformed files, invalid config values, schema
// violations. CLI maps this to exit code 2; everything else is exit 1.
class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace dtk
