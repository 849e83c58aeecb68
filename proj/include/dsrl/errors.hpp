#pragma once

#include <stdexcept>
#include <string>

namespace dsrl {

// Precondition or API-contract violation (caller bug).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

// Invalid configuration. Carries the name of the offending field so the
// CLI can report it.
struct ConfigError : std::runtime_error {
    ConfigError(std::string field_name, const std::string& message)
        : std::runtime_error(message), field(std::move(field_name)) {}
    std::string field;
};

// Operation requested before its data source is ready (e.g. sampling an
// underfilled replay buffer).
struct NotReadyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Training or evaluation produced non-finite values.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace dsrl
