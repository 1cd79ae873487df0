#pragma once

// Minimal RFC 4180 reader/writer for the dataset table. Quoted fields may
// span lines; "" inside quotes is a literal quote.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace solvuln::csv {

struct Row {
    std::vector<std::string> fields;
    std::size_t line = 0;  // 1-based line where the record starts
};

struct ParseResult {
    std::vector<Row> rows;
    bool unterminated_quote = false;
    std::size_t unterminated_line = 0;
};

ParseResult parse(std::string_view text);

std::string quote(std::string_view field);

}  // namespace solvuln::csv
