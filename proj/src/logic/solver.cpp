#include "autobus/logic/solver.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/arith.hpp"
#include "autobus/logic/operators.hpp"

#include <unordered_set>

namespace autobus::logic {

namespace {

struct GoalNode;
using Goals = std::shared_ptr<const GoalNode>;

struct GoalNode {
    Term goal;
    std::uint32_t depth;
    Goals next;
};

Goals push(Term goal, std::uint32_t depth, Goals next) {
    return std::make_shared<const GoalNode>(GoalNode{std::move(goal), depth, std::move(next)});
}

Term rename(const Term& t, std::uint32_t scope) {
    if (t.is_ground()) return t;
    switch (t.kind()) {
    case TermKind::variable:
        return Term::var(t.name(), scope);
    case TermKind::compound: {
        std::vector<Term> args;
        args.reserve(t.arity());
        for (const auto& a : t.args()) args.push_back(rename(a, scope));
        return Term::compound(t.name(), std::move(args));
    }
    case TermKind::list: {
        std::vector<Term> items;
        items.reserve(t.args().size());
        for (const auto& a : t.args()) items.push_back(rename(a, scope));
        return Term::list(std::move(items), rename(t.tail(), scope));
    }
    default:
        return t;
    }
}

std::string var_label(const Term& v) { return is_anonymous(v) ? std::string("_") : to_string(v); }

}  // namespace

class Engine {
public:
    Engine(const Program& program, Term goal, SolveLimits limits, std::shared_ptr<std::uint32_t> scopes)
        : program_(program), goal_(std::move(goal)), limits_(limits), scopes_(std::move(scopes)) {
        if (limits_.max_depth < 1) limits_.max_depth = 1;
        goals_ = push(goal_, 0, nullptr);
    }

    std::optional<Substitution> next() {
        if (done_) return std::nullopt;
        if (limits_.max_solutions && solutions_ >= *limits_.max_solutions) {
            done_ = true;
            return std::nullopt;
        }
        if (started_ && !backtrack()) {
            done_ = true;
            return std::nullopt;
        }
        started_ = true;
        if (!run()) {
            done_ = true;
            return std::nullopt;
        }
        ++solutions_;
        Substitution answer;
        for (const auto& v : variables_of(goal_)) {
            if (is_anonymous(v)) continue;
            Term value = store_.apply(v);
            if (value != v) answer.bind(v, value);
        }
        return answer;
    }

    Term instance(const Term& t) const { return store_.apply(t); }

private:
    struct ChoicePoint {
        Term goal;
        std::uint32_t depth;
        Goals rest;
        std::span<const std::size_t> candidates;
        std::size_t next;
        std::size_t trail_mark;
    };

    bool run() {
        while (goals_) {
            Goals g = goals_;
            goals_ = g->next;
            if (!step(g->goal, g->depth) && !backtrack()) return false;
        }
        return true;
    }

    bool backtrack() {
        while (!choices_.empty()) {
            if (resume_top()) return true;
        }
        return false;
    }

    // Tries the remaining candidate clauses of the newest choice point.
    bool resume_top() {
        ChoicePoint& cp = choices_.back();
        const auto& clauses = program_.clauses();
        while (cp.next < cp.candidates.size()) {
            const Clause& clause = clauses[cp.candidates[cp.next++]];
            store_.undo(cp.trail_mark);
            if (clause.is_ground_fact()) {
                if (!unify_into(cp.goal, clause.head, store_)) continue;
                Goals rest = cp.rest;
                if (cp.next == cp.candidates.size()) choices_.pop_back();
                goals_ = std::move(rest);
                return true;
            }
            std::uint32_t scope = ++*scopes_;
            if (!unify_into(cp.goal, rename(clause.head, scope), store_)) continue;
            if (!clause.body.empty() && cp.depth + 1 > limits_.max_depth) {
                throw Error(ErrorCode::depth_limit_exceeded,
                            "depth limit " + std::to_string(limits_.max_depth) + " exceeded while solving " +
                                to_string(store_.apply(cp.goal)));
            }
            Goals g = cp.rest;
            for (auto it = clause.body.rbegin(); it != clause.body.rend(); ++it) {
                g = push(rename(it->as_goal(), scope), cp.depth + 1, std::move(g));
            }
            if (cp.next == cp.candidates.size()) choices_.pop_back();
            goals_ = std::move(g);
            return true;
        }
        store_.undo(cp.trail_mark);
        choices_.pop_back();
        return false;
    }

    bool step(const Term& raw, std::uint32_t depth) {
        Term g = store_.deref(raw);
        if (g.is_var()) {
            throw Error(ErrorCode::instantiation_error, "unbound variable " + var_label(g) + " called as a goal");
        }
        if (!g.is_callable()) throw Error(ErrorCode::type_error, "not a callable goal: " + to_string(g));

        const std::string& name = g.name();
        const std::size_t arity = g.arity();
        if (arity == 0 && name == "true") return true;
        if (arity == 2 && name == ",") {
            goals_ = push(g.args()[0], depth, push(g.args()[1], depth, goals_));
            return true;
        }
        if (arity == 1 && name == "not") return negation(g.args()[0], depth);
        if (arity == 2 && is_comparison_operator(name)) return comparison(g);
        if (arity == 3 && name == "findall") return findall(g, depth);
        if (arity == 2 && name == "holds") return holds(g, depth);

        Term goal = g;
        if (arity > 0 && !g.is_ground()) {
            // Shallow-resolve arguments so the argument index sees bound values.
            std::vector<Term> args;
            args.reserve(arity);
            for (const auto& a : g.args()) args.push_back(store_.deref(a));
            goal = Term::compound(name, std::move(args));
        }
        auto cands = program_.candidates(goal);
        if (cands.empty()) return false;
        choices_.push_back(ChoicePoint{goal, depth, goals_, cands, 0, store_.mark()});
        return resume_top();
    }

    SolveLimits sub_limits(std::uint32_t depth, std::optional<std::size_t> max_solutions) const {
        std::size_t remaining = limits_.max_depth > depth ? limits_.max_depth - depth : 1;
        return SolveLimits{remaining, max_solutions};
    }

    bool negation(const Term& arg, std::uint32_t depth) {
        Term inner = store_.apply(arg);
        if (!inner.is_ground()) {
            auto vars = variables_of(inner);
            throw Error(ErrorCode::nonground_negation,
                        "negation of non-ground goal " + to_string(inner) + ": variable " + var_label(vars.front()) +
                            " is unbound");
        }
        Engine sub(program_, inner, sub_limits(depth, 1), scopes_);
        return !sub.next().has_value();
    }

    bool comparison(const Term& g) {
        Term lhs = store_.apply(g.args()[0]);
        Term rhs = store_.apply(g.args()[1]);
        auto operand = [&](const Term& t) {
            if (t.is_var()) {
                throw Error(ErrorCode::instantiation_error,
                            "unbound variable " + var_label(t) + " in comparison " + to_string(store_.apply(g)));
            }
            if (!t.is_number() && !(t.is_compound() && (is_arithmetic_operator(t.name())))) {
                throw Error(ErrorCode::type_error,
                            "comparison operand is not a number: " + to_string(t) + " in " +
                                to_string(store_.apply(g)));
            }
            return eval_arith(t);
        };
        return compare_numbers(g.name(), operand(lhs), operand(rhs));
    }

    bool findall(const Term& g, std::uint32_t depth) {
        Term tmpl = store_.apply(g.args()[0]);
        Term goal = store_.apply(g.args()[1]);
        Engine sub(program_, goal, sub_limits(depth, std::nullopt), scopes_);
        std::vector<Term> items;
        std::unordered_set<Term, TermHash> seen;
        while (sub.next()) {
            Term item = sub.instance(tmpl);
            if (seen.insert(item).second) items.push_back(std::move(item));
        }
        return unify_into(g.args()[2], Term::list(std::move(items)), store_);
    }

    bool holds(const Term& g, std::uint32_t depth) {
        Term state = store_.deref(g.args()[1]);
        if (state.is_var()) {
            throw Error(ErrorCode::instantiation_error, "holds/2 needs a bound state, got " + var_label(state));
        }
        const auto& id = program_.state_id();
        if (!id || !state.is_atom() || state.name() != *id) return false;
        goals_ = push(g.args()[0], depth, goals_);
        return true;
    }

    const Program& program_;
    Term goal_;
    SolveLimits limits_;
    std::shared_ptr<std::uint32_t> scopes_;
    BindingStore store_;
    std::vector<ChoicePoint> choices_;
    Goals goals_;
    std::size_t solutions_ = 0;
    bool started_ = false;
    bool done_ = false;
};

Solutions::Solutions(const Program& program, Term goal, SolveLimits limits)
    : engine_(std::make_unique<Engine>(program, std::move(goal), limits, std::make_shared<std::uint32_t>(0))) {}

Solutions::Solutions(Solutions&&) noexcept = default;
Solutions& Solutions::operator=(Solutions&&) noexcept = default;
Solutions::~Solutions() = default;

std::optional<Substitution> Solutions::next() { return engine_->next(); }

Solutions solve(const Term& goal, const Program& program, SolveLimits limits) {
    if (!goal.is_callable()) throw Error(ErrorCode::type_error, "goal must be an atom or compound: " + to_string(goal));
    return Solutions(program, goal, limits);
}

std::vector<Term> solve_all(const Term& goal, const Program& program, SolveLimits limits) {
    auto solutions = solve(goal, program, limits);
    std::vector<Term> out;
    std::unordered_set<Term, TermHash> seen;
    while (auto s = solutions.next()) {
        Term instance = s->apply(goal);
        if (seen.insert(instance).second) out.push_back(std::move(instance));
    }
    return out;
}

std::optional<Substitution> solve_first(const Term& goal, const Program& program, SolveLimits limits) {
    limits.max_solutions = 1;
    return solve(goal, program, limits).next();
}

bool derivable(const Term& goal, const Program& program, SolveLimits limits) {
    return solve_first(goal, program, limits).has_value();
}

bool is_builtin(const Indicator& ind) {
    if (ind.arity == 0) return ind.name == "true";
    if (ind.arity == 1) return ind.name == "not";
    if (ind.arity == 2) return ind.name == "," || ind.name == "holds" || is_comparison_operator(ind.name);
    if (ind.arity == 3) return ind.name == "findall";
    return false;
}

}  // namespace autobus::logic
