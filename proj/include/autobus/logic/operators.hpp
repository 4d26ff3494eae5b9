#pragma once

#include <optional>
#include <string_view>

namespace autobus::logic {

enum class Assoc { left, right, none };

struct OperatorInfo {
    int precedence;
    Assoc assoc;
};

// Infix operators of ABL. Lower precedence binds tighter.
//   ','                     1000 right (conjunction inside parentheses)
//   >= > =< < == !=          700 non-associative
//   + -                      500 left
//   * /                      400 left
std::optional<OperatorInfo> infix_operator(std::string_view name) noexcept;

bool is_comparison_operator(std::string_view name) noexcept;
bool is_arithmetic_operator(std::string_view name) noexcept;

inline constexpr int kArgumentPrecedence = 999;
inline constexpr int kMaxPrecedence = 1200;

}  // namespace autobus::logic
