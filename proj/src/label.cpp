#include "solvuln/label.hpp"

#include "solvuln/errors.hpp"

namespace solvuln {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::MissingData: return "MissingData";
        case ErrorKind::SchemaError: return "SchemaError";
        case ErrorKind::LabelError: return "LabelError";
        case ErrorKind::EncodingMismatch: return "EncodingMismatch";
        case ErrorKind::DegenerateClass: return "DegenerateClass";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::CheckpointError: return "CheckpointError";
        case ErrorKind::VocabMismatch: return "VocabMismatch";
        case ErrorKind::ShapeError: return "ShapeError";
        case ErrorKind::DivergenceError: return "DivergenceError";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::LengthMismatch: return "LengthMismatch";
        case ErrorKind::EmptyInput: return "EmptyInput";
        case ErrorKind::SplitMismatch: return "SplitMismatch";
        case ErrorKind::IOError: return "IOError";
    }
    return "Error";
}

Label label_from_code(int code) {
    if (code < 0 || code >= static_cast<int>(kNumClasses)) {
        throw Error(ErrorKind::LabelError, "encoded label out of range: " + std::to_string(code));
    }
    return static_cast<Label>(code);
}

Label parse_label(std::string_view text) {
    if (text == "DD") return Label::DD;
    if (text == "IO") return Label::IO;
    if (text == "RE") return Label::RE;
    if (text == "TD") return Label::TD;
    throw Error(ErrorKind::LabelError, "unknown vulnerability label '" + std::string(text) + "'");
}

std::string_view to_string(Label label) noexcept {
    switch (label) {
        case Label::DD: return "DD";
        case Label::IO: return "IO";
        case Label::RE: return "RE";
        case Label::TD: return "TD";
    }
    return "?";
}

std::string_view long_name(Label label) noexcept {
    switch (label) {
        case Label::DD: return "Dangerous Delegatecall";
        case Label::IO: return "Integer Overflow";
        case Label::RE: return "Reentrancy";
        case Label::TD: return "Timestamp Dependency";
    }
    return "?";
}

}  // namespace solvuln
