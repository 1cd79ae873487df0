#pragma once

#include <stdexcept>
#include <string>

namespace solvuln {

// Every failure the library reports is a solvuln::Error carrying a stable
// kind, so callers (the CLI in particular) can map it onto exit codes.
enum class ErrorKind {
    MissingData,
    SchemaError,
    LabelError,
    EncodingMismatch,
    DegenerateClass,
    InvalidArgument,
    ConfigError,
    CheckpointError,
    VocabMismatch,
    ShapeError,
    DivergenceError,
    EmptyDataset,
    LengthMismatch,
    EmptyInput,
    SplitMismatch,
    IOError,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace solvuln
