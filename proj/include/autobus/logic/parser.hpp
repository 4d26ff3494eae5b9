#pragma once

#include "autobus/error.hpp"
#include "autobus/logic/program.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace autobus::logic {

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t line, std::size_t column, std::string token, const std::string& what);

    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }
    const std::string& token() const noexcept { return token_; }

private:
    std::size_t line_;
    std::size_t column_;
    std::string token_;
};

// Parses ABL source. Clause order follows the source; `% SECTION: facts`,
// `% SECTION: rules` and `% SECTION: actions` comments switch the partition of
// subsequent clauses (unmarked source is task_rules).
//
// Throws SyntaxError, or Error{unsafe_negation} naming the offending variable.
Program parse_program(std::string_view source);

// A single term, e.g. `subscribe(C, s456)`. A trailing `.` is accepted.
Term parse_term(std::string_view source);

// A goal conjunction, e.g. `consumer(C), subscribe(C, S)`, folded into
// right-nested `,/2` terms. A trailing `.` is accepted.
Term parse_goal(std::string_view source);

// A clause body as a literal list (used when composing clauses from text).
std::vector<Literal> parse_body(std::string_view source);

// Splits a conjunction term into its conjuncts.
std::vector<Term> flatten_conjunction(const Term& goal);

}  // namespace autobus::logic
