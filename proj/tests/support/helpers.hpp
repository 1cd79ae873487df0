#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "solvuln/errors.hpp"

namespace solvuln::testing {

/// Kind of the solvuln::Error thrown by `fn`, or nullopt when nothing is thrown.
inline std::optional<ErrorKind> error_kind(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return std::nullopt;
}

inline std::string error_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

/// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("solvuln_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace solvuln::testing
