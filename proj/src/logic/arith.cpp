#include "autobus/logic/arith.hpp"

#include "autobus/error.hpp"

namespace autobus::logic {

namespace {

[[noreturn]] void overflow(const Term& t) {
    throw Error(ErrorCode::arithmetic_error, "integer overflow evaluating " + to_string(t));
}

}  // namespace

Number eval_arith(const Term& t) {
    switch (t.kind()) {
    case TermKind::integer: return Number{t.int_value()};
    case TermKind::floating: return Number{t.float_value()};
    case TermKind::variable:
        throw Error(ErrorCode::instantiation_error, "unbound variable " + to_string(t) + " in arithmetic");
    case TermKind::compound: break;
    default:
        throw Error(ErrorCode::type_error, "not a number: " + to_string(t));
    }

    const std::string& op = t.name();
    if (op == "-" && t.arity() == 1) {
        Number v = eval_arith(t.args()[0]);
        if (!v.is_int()) return Number{-v.as_double()};
        std::int64_t r;
        if (__builtin_sub_overflow(std::int64_t{0}, v.as_int(), &r)) overflow(t);
        return Number{r};
    }
    if (t.arity() != 2 || !(op == "+" || op == "-" || op == "*" || op == "/")) {
        throw Error(ErrorCode::type_error, "not an arithmetic expression: " + to_string(t));
    }

    Number a = eval_arith(t.args()[0]);
    Number b = eval_arith(t.args()[1]);
    if (op == "/") {
        if (b.as_double() == 0.0) {
            throw Error(ErrorCode::arithmetic_error, "division by zero in " + to_string(t));
        }
        return Number{a.as_double() / b.as_double()};
    }
    if (a.is_int() && b.is_int()) {
        std::int64_t r;
        bool bad = op == "+"   ? __builtin_add_overflow(a.as_int(), b.as_int(), &r)
                   : op == "-" ? __builtin_sub_overflow(a.as_int(), b.as_int(), &r)
                               : __builtin_mul_overflow(a.as_int(), b.as_int(), &r);
        if (bad) overflow(t);
        return Number{r};
    }
    double x = a.as_double(), y = b.as_double();
    if (op == "+") return Number{x + y};
    if (op == "-") return Number{x - y};
    return Number{x * y};
}

bool compare_numbers(std::string_view op, const Number& a, const Number& b) {
    int c;
    if (a.is_int() && b.is_int()) {
        c = a.as_int() < b.as_int() ? -1 : (a.as_int() > b.as_int() ? 1 : 0);
    } else {
        double x = a.as_double(), y = b.as_double();
        c = x < y ? -1 : (x > y ? 1 : 0);
    }
    if (op == ">=") return c >= 0;
    if (op == ">") return c > 0;
    if (op == "=<") return c <= 0;
    if (op == "<") return c < 0;
    if (op == "==") return c == 0;
    if (op == "!=") return c != 0;
    throw Error(ErrorCode::type_error, "unknown comparison operator " + std::string(op));
}

}  // namespace autobus::logic
