#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace resparse {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid parameter or configuration value.
struct ConfigError : Error {
    using Error::Error;
};

/// A call violated an operation's preconditions (dimension mismatch, index
/// out of range, undefined measure).
struct ContractError : Error {
    using Error::Error;
};

/// Malformed external data (stimulus files, config files, checkpoints).
struct IngestError : Error {
    using Error::Error;
};

/// Training diverged or produced non-finite values.
struct TrainingError : Error {
    TrainingError(const std::string& what, std::uint64_t episode)
        : Error(what + " (episode " + std::to_string(episode) + ")"), episode(episode) {}
    std::uint64_t episode;
};

}  // namespace resparse
