#pragma once

#include "autobus/logic/program.hpp"
#include "autobus/logic/unify.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

namespace autobus::logic {

struct SolveLimits {
    std::size_t max_depth = 512;
    // nullopt means unbounded.
    std::optional<std::size_t> max_solutions;
};

class Engine;

// Lazy sequence of answers to one goal. Each answer binds the goal's named
// variables. Not thread-safe; the referenced Program must outlive it.
//
// Errors surface from next(): Error{depth_limit_exceeded} when a derivation
// would exceed max_depth, Error{nonground_negation} for `not(G)` with G
// non-ground at call time, Error{type_error}/Error{instantiation_error} for
// bad builtin arguments.
class Solutions {
public:
    Solutions(const Program& program, Term goal, SolveLimits limits);
    Solutions(Solutions&&) noexcept;
    Solutions& operator=(Solutions&&) noexcept;
    ~Solutions();

    std::optional<Substitution> next();

private:
    std::unique_ptr<Engine> engine_;
};

// Top-down SLD resolution: leftmost literal first, clauses in source order.
Solutions solve(const Term& goal, const Program& program, SolveLimits limits = {});

// Goal instances for every answer, in answer order, without structural
// duplicates.
std::vector<Term> solve_all(const Term& goal, const Program& program, SolveLimits limits = {});

std::optional<Substitution> solve_first(const Term& goal, const Program& program, SolveLimits limits = {});

bool derivable(const Term& goal, const Program& program, SolveLimits limits = {});

// Predicates handled by the engine itself: true/0, ','/2, not/1, findall/3,
// holds/2 and the six comparison operators.
bool is_builtin(const Indicator& ind);

}  // namespace autobus::logic
