#pragma once

#include "autobus/logic/term.hpp"

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace autobus::logic {

struct Literal {
    enum class Polarity { positive, negated };

    Polarity polarity = Polarity::positive;
    Term goal;

    bool negated() const noexcept { return polarity == Polarity::negated; }
    // The goal as the solver sees it: `not(G)` for negated literals.
    Term as_goal() const;

    friend bool operator==(const Literal&, const Literal&) = default;
};

struct Clause {
    Term head;
    std::vector<Literal> body;

    bool is_fact() const noexcept { return body.empty(); }
    bool is_ground_fact() const noexcept { return body.empty() && head.is_ground(); }
    Indicator indicator() const { return indicator_of(head); }

    friend bool operator==(const Clause&, const Clause&) = default;
};

Clause make_fact(Term head);

// The first variable of a negated literal that is bound neither by the head nor
// by a preceding positive literal, if any.
std::optional<Term> unsafe_negation_variable(const Clause& clause);

// The first head variable that no positive body literal binds, if any.
std::optional<Term> unbound_head_variable(const Clause& clause);

enum class Partition { facts_foundational, task_rules, actions };

std::string_view to_string(Partition p);
// Name used in `% SECTION: <name>` markers.
std::string_view section_name(Partition p);
std::optional<Partition> partition_from_section(std::string_view name);

struct Segment {
    Partition tag;
    std::size_t begin;
    std::size_t end;

    friend bool operator==(const Segment&, const Segment&) = default;
};

// An ordered, immutable clause list with section partitions and per-argument
// clause indexes.
//
// Segments are contiguous, disjoint, cover every clause, are never empty, and
// adjacent segments carry different tags.
class Program {
public:
    Program() = default;
    Program(std::vector<Clause> clauses, std::vector<Segment> segments);

    // All clauses in one partition.
    static Program of(std::vector<Clause> clauses, Partition tag = Partition::task_rules);

    const std::vector<Clause>& clauses() const noexcept { return clauses_; }
    const std::vector<Segment>& segments() const noexcept { return segments_; }
    std::size_t size() const noexcept { return clauses_.size(); }
    bool empty() const noexcept { return clauses_.empty(); }

    Partition partition_of(std::size_t clause_index) const;
    std::vector<Clause> partition(Partition p) const;

    // Appends other's clauses and segments after this program's.
    Program concat(const Program& other) const;

    // Clause indices, in source order, that may match goal. The list may
    // contain false positives but never omits a matching clause.
    std::span<const std::size_t> candidates(const Term& goal) const;
    bool defines(const Indicator& ind) const;

    // Snapshot identifier checked by the `holds/2` builtin. Not part of the
    // structural identity of the program.
    const std::optional<std::string>& state_id() const noexcept { return state_id_; }
    Program with_state(std::string id) const;

    friend bool operator==(const Program& a, const Program& b) {
        return a.clauses_ == b.clauses_ && a.segments_ == b.segments_;
    }

private:
    struct ArgIndex {
        std::unordered_map<std::string, std::vector<std::size_t>> by_key;
        std::vector<std::size_t> unkeyed;
    };
    struct PredicateIndex {
        std::vector<std::size_t> all;
        std::vector<ArgIndex> per_arg;
    };

    void build_index();

    std::vector<Clause> clauses_;
    std::vector<Segment> segments_;
    std::unordered_map<Indicator, PredicateIndex, IndicatorHash> index_;
    std::optional<std::string> state_id_;
};

// Key used by the argument index; nullopt for variables.
std::optional<std::string> index_key(const Term& arg);

std::string to_string(const Literal& lit);
std::string to_string(const Clause& clause);

// ABL text for a program: one clause per line, with a `% SECTION:` marker at
// the start of every segment.
std::string render(const Program& program);

}  // namespace autobus::logic
