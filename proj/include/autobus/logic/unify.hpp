#pragma once

#include "autobus/logic/term.hpp"

#include <map>
#include <optional>
#include <unordered_map>
#include <vector>

namespace autobus::logic {

// Variable -> term bindings in triangular form: a bound value may itself
// mention bound variables; apply() resolves chains completely.
class Substitution {
public:
    using Map = std::map<Term, Term, TermLess>;

    Substitution() = default;

    const Term* lookup(const Term& var) const;
    void bind(const Term& var, const Term& value);
    bool contains(const Term& var) const { return lookup(var) != nullptr; }

    // Follows variable bindings at the top level only.
    Term deref(const Term& t) const;
    // Fully applies the substitution to t.
    Term apply(const Term& t) const;

    // Value for a scope-0 variable by name.
    std::optional<Term> get(const std::string& var_name) const;

    const Map& bindings() const noexcept { return bindings_; }
    std::size_t size() const noexcept { return bindings_.size(); }
    bool empty() const noexcept { return bindings_.empty(); }

    // The same bindings with every value fully applied.
    Substitution resolved() const;

    friend bool operator==(const Substitution& a, const Substitution& b) {
        return a.bindings_ == b.bindings_;
    }

private:
    Map bindings_;
};

std::string to_string(const Substitution& s);

// Most general unifier of a and b extending s, with occurs check. nullopt when
// the terms do not unify.
std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s = {});

// Mutable binding store with an undo trail, used by the solver.
class BindingStore {
public:
    const Term* lookup(const Term& var) const;
    void bind(const Term& var, const Term& value);

    std::size_t mark() const noexcept { return trail_.size(); }
    void undo(std::size_t mark);

    Term deref(const Term& t) const;
    Term apply(const Term& t) const;

private:
    std::unordered_map<Term, Term, TermHash> bindings_;
    std::vector<Term> trail_;
};

// Unifies a and b, recording new bindings in store. On failure the store may
// hold partial bindings; callers undo to a mark.
bool unify_into(const Term& a, const Term& b, BindingStore& store);

}  // namespace autobus::logic
