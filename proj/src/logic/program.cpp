#include "autobus/logic/program.hpp"

#include "autobus/logic/operators.hpp"

#include <algorithm>
#include <stdexcept>
#include <unordered_set>

namespace autobus::logic {

Term Literal::as_goal() const {
    return negated() ? Term::compound("not", {goal}) : goal;
}

Clause make_fact(Term head) { return Clause{std::move(head), {}}; }

namespace {

bool is_comparison_goal(const Term& t) {
    return t.is_compound() && t.arity() == 2 && is_comparison_operator(t.name());
}

void add_vars(const Term& t, std::unordered_set<Term, TermHash>& out) {
    for (auto& v : variables_of(t)) out.insert(v);
}

}  // namespace

std::optional<Term> unsafe_negation_variable(const Clause& clause) {
    std::unordered_set<Term, TermHash> bound;
    add_vars(clause.head, bound);
    for (const auto& lit : clause.body) {
        if (lit.negated()) {
            for (const auto& v : variables_of(lit.goal)) {
                if (is_anonymous(v) || !bound.count(v)) return v;
            }
        } else {
            add_vars(lit.goal, bound);
        }
    }
    return std::nullopt;
}

std::optional<Term> unbound_head_variable(const Clause& clause) {
    std::unordered_set<Term, TermHash> bound;
    for (const auto& lit : clause.body) {
        if (!lit.negated() && !is_comparison_goal(lit.goal)) add_vars(lit.goal, bound);
    }
    for (const auto& v : variables_of(clause.head)) {
        if (!bound.count(v)) return v;
    }
    return std::nullopt;
}

std::string_view to_string(Partition p) {
    switch (p) {
    case Partition::facts_foundational: return "facts_foundational";
    case Partition::task_rules: return "task_rules";
    case Partition::actions: return "actions";
    }
    return "?";
}

std::string_view section_name(Partition p) {
    switch (p) {
    case Partition::facts_foundational: return "facts";
    case Partition::task_rules: return "rules";
    case Partition::actions: return "actions";
    }
    return "?";
}

std::optional<Partition> partition_from_section(std::string_view name) {
    if (name == "facts") return Partition::facts_foundational;
    if (name == "rules") return Partition::task_rules;
    if (name == "actions") return Partition::actions;
    return std::nullopt;
}

std::optional<std::string> index_key(const Term& arg) {
    switch (arg.kind()) {
    case TermKind::variable: return std::nullopt;
    case TermKind::atom: return "a:" + arg.name();
    case TermKind::integer: return "i:" + std::to_string(arg.int_value());
    case TermKind::floating: return "f:" + format_number(arg.float_value());
    case TermKind::string: return "s:" + arg.name();
    case TermKind::compound: return "c:" + arg.name() + "/" + std::to_string(arg.arity());
    case TermKind::list: return std::string("l:");
    }
    return std::nullopt;
}

Program::Program(std::vector<Clause> clauses, std::vector<Segment> segments)
    : clauses_(std::move(clauses)) {
    // Normalize: drop empty segments, merge adjacent ones with equal tags.
    std::size_t expected = 0;
    for (const auto& s : segments) {
        if (s.begin != expected || s.end < s.begin) {
            throw std::invalid_argument("program segments must be contiguous and ordered");
        }
        expected = s.end;
        if (s.begin == s.end) continue;
        if (!segments_.empty() && segments_.back().tag == s.tag) {
            segments_.back().end = s.end;
        } else {
            segments_.push_back(s);
        }
    }
    if (expected != clauses_.size()) {
        throw std::invalid_argument("program segments must cover every clause");
    }
    for (const auto& c : clauses_) {
        if (!c.head.is_callable()) {
            throw std::invalid_argument("clause head must be an atom or compound: " + to_string(c.head));
        }
    }
    build_index();
}

Program Program::of(std::vector<Clause> clauses, Partition tag) {
    std::size_t n = clauses.size();
    return Program(std::move(clauses), {Segment{tag, 0, n}});
}

Partition Program::partition_of(std::size_t clause_index) const {
    for (const auto& s : segments_) {
        if (clause_index >= s.begin && clause_index < s.end) return s.tag;
    }
    throw std::out_of_range("clause index outside program");
}

std::vector<Clause> Program::partition(Partition p) const {
    std::vector<Clause> out;
    for (const auto& s : segments_) {
        if (s.tag != p) continue;
        out.insert(out.end(), clauses_.begin() + static_cast<std::ptrdiff_t>(s.begin),
                   clauses_.begin() + static_cast<std::ptrdiff_t>(s.end));
    }
    return out;
}

Program Program::concat(const Program& other) const {
    std::vector<Clause> clauses = clauses_;
    clauses.insert(clauses.end(), other.clauses_.begin(), other.clauses_.end());
    std::vector<Segment> segments = segments_;
    std::size_t offset = clauses_.size();
    for (auto s : other.segments_) {
        s.begin += offset;
        s.end += offset;
        segments.push_back(s);
    }
    Program out(std::move(clauses), std::move(segments));
    out.state_id_ = other.state_id_ ? other.state_id_ : state_id_;
    return out;
}

Program Program::with_state(std::string id) const {
    Program out = *this;
    out.state_id_ = std::move(id);
    return out;
}

void Program::build_index() {
    for (std::size_t i = 0; i < clauses_.size(); ++i) {
        const Term& head = clauses_[i].head;
        auto& pred = index_[indicator_of(head)];
        pred.all.push_back(i);
        if (pred.per_arg.size() < head.arity()) pred.per_arg.resize(head.arity());
        for (std::size_t a = 0; a < head.arity(); ++a) {
            ArgIndex& idx = pred.per_arg[a];
            if (auto key = index_key(head.args()[a])) {
                auto [it, inserted] = idx.by_key.try_emplace(*key);
                if (inserted) it->second = idx.unkeyed;
                it->second.push_back(i);
            } else {
                idx.unkeyed.push_back(i);
                for (auto& [k, list] : idx.by_key) list.push_back(i);
            }
        }
    }
}

std::span<const std::size_t> Program::candidates(const Term& goal) const {
    if (!goal.is_callable()) return {};
    auto it = index_.find(indicator_of(goal));
    if (it == index_.end()) return {};
    const PredicateIndex& pred = it->second;
    std::span<const std::size_t> best(pred.all);
    for (std::size_t a = 0; a < goal.arity() && a < pred.per_arg.size(); ++a) {
        auto key = index_key(goal.args()[a]);
        if (!key) continue;
        const ArgIndex& idx = pred.per_arg[a];
        auto k = idx.by_key.find(*key);
        std::span<const std::size_t> cand = k == idx.by_key.end()
                                                ? std::span<const std::size_t>(idx.unkeyed)
                                                : std::span<const std::size_t>(k->second);
        if (cand.size() < best.size()) best = cand;
        if (best.empty()) break;
    }
    return best;
}

bool Program::defines(const Indicator& ind) const { return index_.count(ind) > 0; }

std::string to_string(const Literal& lit) {
    if (lit.negated()) return "not(" + to_string(lit.goal) + ")";
    const Term& g = lit.goal;
    // Conjunctions are not body literals; parenthesize to keep them one literal.
    if (g.is_compound() && g.arity() == 2 && g.name() == ",") return "(" + to_string(g) + ")";
    return to_string(g);
}

std::string to_string(const Clause& clause) {
    std::string out = to_string(clause.head);
    if (!clause.body.empty()) {
        out += " :- ";
        for (std::size_t i = 0; i < clause.body.size(); ++i) {
            if (i) out += ", ";
            out += to_string(clause.body[i]);
        }
    }
    out += '.';
    return out;
}

std::string render(const Program& program) {
    std::string out;
    for (const auto& seg : program.segments()) {
        out += "% SECTION: ";
        out += section_name(seg.tag);
        out += '\n';
        for (std::size_t i = seg.begin; i < seg.end; ++i) {
            out += to_string(program.clauses()[i]);
            out += '\n';
        }
    }
    return out;
}

}  // namespace autobus::logic
