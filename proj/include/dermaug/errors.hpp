#pragma once

#include <stdexcept>
#include <string>

namespace dermaug {

// Exit codes used by the CLI. Library code throws, the CLI maps to codes.
enum class ExitCode : int {
    ok = 0,
    config_error = 2,
    data_error = 3,
    training_divergence = 4,
    io_error = 5,
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or invariant-violating data (manifests, fixtures, degenerate inputs).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite loss or other optimization failure.
struct TrainingError : std::runtime_error {
    explicit TrainingError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

inline ExitCode exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return ExitCode::config_error;
    if (dynamic_cast<const DataError*>(&e)) return ExitCode::data_error;
    if (dynamic_cast<const TrainingError*>(&e)) return ExitCode::training_divergence;
    if (dynamic_cast<const IoError*>(&e)) return ExitCode::io_error;
    return ExitCode::config_error;
}

}  // namespace dermaug
