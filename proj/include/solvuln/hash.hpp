#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace solvuln {

/// Lower-case hex SHA-256.
std::string sha256_hex(std::string_view data);

/// Hash over the contents of the given files, in order, each prefixed by its
/// file name so renames change the digest.
std::string sha256_files(const std::filesystem::path& dir,
                         const std::vector<std::string>& names);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace solvuln
