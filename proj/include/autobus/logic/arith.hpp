#pragma once

#include "autobus/logic/term.hpp"

#include <string_view>

namespace autobus::logic {

// Evaluates a ground arithmetic expression over + - * / and unary minus.
// Integer operations stay integral except `/`, which always yields a float;
// mixed operands promote to float.
//
// Throws Error{type_error} for non-numeric operands, Error{instantiation_error}
// for unbound variables and Error{arithmetic_error} on division by zero or
// integer overflow.
Number eval_arith(const Term& t);

// Applies one of >=, >, =<, <, ==, != with int/float promotion.
bool compare_numbers(std::string_view op, const Number& a, const Number& b);

}  // namespace autobus::logic
