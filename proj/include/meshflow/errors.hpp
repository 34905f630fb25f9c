#pragma once

#include <stdexcept>
#include <string>

namespace meshflow {

// Error taxonomy mirrors the CLI exit codes: config errors (2), missing
// upstream artifacts (3), numerical failures (4). Everything else that is
// wrong with input data raises DataError and exits 1.

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class MissingArtifactError : public std::runtime_error {
public:
    MissingArtifactError(const std::string& stage, const std::string& path)
        : std::runtime_error("missing artifact '" + path +
                             "': run stage '" + stage + "' first"),
          stage_(stage) {}

    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace meshflow
