#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace autobus::logic {

enum class TermKind : std::uint8_t { atom, variable, integer, floating, string, compound, list };

struct TermNode;

// Immutable, reference-counted first-order term. Copies share structure.
//
// Variables are identified by (name, scope). Terms produced by the parser use
// scope 0; the solver renames clause variables into fresh scopes. Anonymous
// `_` occurrences are parsed into distinct variables named `_#<n>`.
//
// Lists are kept canonical: a list term always has at least one item and its
// tail is never itself a list, so structurally equal lists compare equal.
class Term {
public:
    static Term atom(std::string name);
    static Term var(std::string name, std::uint32_t scope = 0);
    static Term integer(std::int64_t value);
    static Term floating(double value);
    static Term string(std::string value);
    static Term compound(std::string functor, std::vector<Term> args);
    static Term list(std::vector<Term> items, std::optional<Term> tail = std::nullopt);
    static Term nil();

    TermKind kind() const noexcept;
    bool is_atom() const noexcept { return kind() == TermKind::atom; }
    bool is_var() const noexcept { return kind() == TermKind::variable; }
    bool is_number() const noexcept {
        return kind() == TermKind::integer || kind() == TermKind::floating;
    }
    bool is_compound() const noexcept { return kind() == TermKind::compound; }
    bool is_list() const noexcept { return kind() == TermKind::list; }
    bool is_nil() const noexcept;
    // Atom or compound: something that can be called as a goal.
    bool is_callable() const noexcept { return is_atom() || is_compound(); }
    bool is_ground() const noexcept;

    // Atom name, variable name, string contents, or compound functor.
    const std::string& name() const noexcept;
    std::uint32_t scope() const noexcept;
    std::int64_t int_value() const noexcept;
    double float_value() const noexcept;
    // Compound arguments or list items.
    const std::vector<Term>& args() const noexcept;
    const Term& tail() const;
    std::size_t arity() const noexcept;

    std::size_t hash() const noexcept;
    const TermNode* node() const noexcept { return node_.get(); }

    friend bool operator==(const Term& a, const Term& b);
    friend bool operator!=(const Term& a, const Term& b) { return !(a == b); }

private:
    explicit Term(std::shared_ptr<const TermNode> node) : node_(std::move(node)) {}
    std::shared_ptr<const TermNode> node_;
};

struct TermNode {
    TermKind kind{};
    bool ground = true;
    std::uint32_t scope = 0;
    std::int64_t ival = 0;
    double fval = 0.0;
    std::string text;
    std::vector<Term> args;
    std::optional<Term> tail;
    std::size_t hash = 0;
};

// Standard order used wherever the engine needs a deterministic sort:
// variables < numbers < atoms < strings < compound/list; numbers by value.
int compare(const Term& a, const Term& b);

struct TermHash {
    std::size_t operator()(const Term& t) const noexcept { return t.hash(); }
};

struct TermLess {
    bool operator()(const Term& a, const Term& b) const { return compare(a, b) < 0; }
};

// Predicate indicator, e.g. `subscribe/2`.
struct Indicator {
    std::string name;
    std::size_t arity = 0;

    std::string str() const { return name + "/" + std::to_string(arity); }
    friend bool operator==(const Indicator&, const Indicator&) = default;
    friend auto operator<=>(const Indicator&, const Indicator&) = default;
};

struct IndicatorHash {
    std::size_t operator()(const Indicator& i) const noexcept {
        return std::hash<std::string>{}(i.name) * 31 + i.arity;
    }
};

// Indicator of a callable term; atoms have arity 0.
Indicator indicator_of(const Term& callable);

// Tagged 64-bit integer or binary float.
struct Number {
    std::variant<std::int64_t, double> value;

    bool is_int() const noexcept { return std::holds_alternative<std::int64_t>(value); }
    std::int64_t as_int() const { return std::get<std::int64_t>(value); }
    double as_double() const noexcept {
        return is_int() ? static_cast<double>(std::get<std::int64_t>(value))
                        : std::get<double>(value);
    }
    Term to_term() const;
    friend bool operator==(const Number&, const Number&) = default;
};

bool is_atom_name(std::string_view s) noexcept;
bool is_var_name(std::string_view s) noexcept;
bool is_anonymous(const Term& var) noexcept;

// Variables occurring in t, in first-occurrence order, without duplicates.
std::vector<Term> variables_of(const Term& t);

// ABL concrete syntax for a term (operators printed infix).
std::string to_string(const Term& t);
std::string format_number(double value);

}  // namespace autobus::logic
