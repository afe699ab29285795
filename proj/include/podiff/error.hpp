#pragma once

#include <stdexcept>
#include <string>

namespace podiff {

// Exit codes used by the CLI. Library code signals them through the exception
// types below; plain precondition violations use std::invalid_argument.
enum class ExitCode : int {
    kOk = 0,
    kConfig = 2,
    kMissingPrerequisite = 3,
    kCorruptArtifact = 4,
    kNumerical = 5,
};

class Error : public std::runtime_error {
public:
    Error(ExitCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ExitCode code() const noexcept { return code_; }

private:
    ExitCode code_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ExitCode::kConfig, what) {}
};

class MissingPrerequisite : public Error {
public:
    explicit MissingPrerequisite(const std::string& what)
        : Error(ExitCode::kMissingPrerequisite, what) {}
};

class CorruptArtifact : public Error {
public:
    explicit CorruptArtifact(const std::string& what) : Error(ExitCode::kCorruptArtifact, what) {}
};

class NumericalFailure : public Error {
public:
    explicit NumericalFailure(const std::string& what) : Error(ExitCode::kNumerical, what) {}
};

}  // namespace podiff
