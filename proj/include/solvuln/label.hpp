#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace solvuln {

/// Vulnerability classes. The enumerator values are the fixed integer
/// encoding (alphabetical), and every per-class array and confusion-matrix
/// axis in the project uses this order.
enum class Label : int {
    DD = 0,  // Dangerous Delegatecall
    IO = 1,  // Integer Overflow
    RE = 2,  // Reentrancy
    TD = 3,  // Timestamp Dependency
};

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Label, kNumClasses> kAllLabels{Label::DD, Label::IO, Label::RE,
                                                           Label::TD};

constexpr int encode(Label label) noexcept { return static_cast<int>(label); }
constexpr std::size_t index_of(Label label) noexcept { return static_cast<std::size_t>(label); }

/// Throws Error(LabelError) for anything outside 0..3.
Label label_from_code(int code);

/// Accepts exactly "DD", "IO", "RE", "TD"; anything else is a LabelError.
Label parse_label(std::string_view text);

std::string_view to_string(Label label) noexcept;
std::string_view long_name(Label label) noexcept;

}  // namespace solvuln
