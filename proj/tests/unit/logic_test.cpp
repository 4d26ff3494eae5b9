#include "doctest.h"

#include "autobus/logic/arith.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"
#include "support/fixpoint_oracle.hpp"

#include <algorithm>
#include <random>

using namespace autobus;
using namespace autobus::logic;

namespace {

const char* kSemanticsSnippet = R"(
consumer(c123).
subscription(s456).
subscribe(c123, s456).
has_status(s456, active).

active_subscription(S):-
    has_status(S, active),
    subscribe(_, S).

precondition(send_promotion(C)):-
    consumer(C),
    subscribe(C, S),
    active_subscription(S).
)";

const char* kEvaluationRules = R"(
resolved(I) :- outcome(I, resolved) .
success(I) :-
    resolved(I),
    customer_satisfaction(I, Score),
    Score >= 4.0 .
)";

std::vector<std::string> rendered(const std::vector<Term>& terms) {
    std::vector<std::string> out;
    for (const auto& t : terms) out.push_back(to_string(t));
    return out;
}

ErrorCode error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an autobus::Error");
    return ErrorCode::invalid_input;
}

// Random terms over a small vocabulary, for unifier and round-trip properties.
Term random_term(std::mt19937_64& rng, int depth) {
    auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
    static const char* atoms[] = {"a", "b", "c123", "active"};
    static const char* vars[] = {"X", "Y", "Z"};
    std::size_t roll = pick(depth <= 0 ? 5 : 9);
    switch (roll) {
    case 0: case 1: return Term::atom(atoms[pick(4)]);
    case 2: case 3: return Term::var(vars[pick(3)]);
    case 4: return pick(2) ? Term::integer(static_cast<std::int64_t>(pick(7)) - 3) : Term::floating(pick(9) / 4.0);
    case 5: case 6: {
        std::vector<Term> args;
        std::size_t n = 1 + pick(2);
        for (std::size_t i = 0; i < n; ++i) args.push_back(random_term(rng, depth - 1));
        return Term::compound(n == 1 ? "f" : "g", std::move(args));
    }
    case 7: {
        std::vector<Term> items;
        std::size_t n = 1 + pick(3);
        for (std::size_t i = 0; i < n; ++i) items.push_back(random_term(rng, depth - 1));
        std::optional<Term> tail;
        if (pick(3) == 0) tail = Term::var(vars[pick(3)]);
        return Term::list(std::move(items), tail);
    }
    default: {
        static const char* ops[] = {"+", "-", "*", "/", ">=", "=<"};
        return Term::compound(ops[pick(6)], {random_term(rng, depth - 1), random_term(rng, depth - 1)});
    }
    }
}

}  // namespace

TEST_SUITE("parse_program") {
    TEST_CASE("single fact from the enterprise snippet") {
        Program p = parse_program("consumer(c123).");
        REQUIRE(p.size() == 1);
        CHECK(p.clauses()[0].is_fact());
        CHECK(to_string(p.clauses()[0].head) == "consumer(c123)");
    }

    TEST_CASE("empty input is an empty program") {
        Program p = parse_program("");
        CHECK(p.empty());
        CHECK(p.segments().empty());
    }

    TEST_CASE("foundational rule with anonymous variable") {
        Program p = parse_program("active_subscription(S):- has_status(S, active), subscribe(_, S).");
        REQUIRE(p.size() == 1);
        const Clause& c = p.clauses()[0];
        CHECK(c.head.arity() == 1);
        REQUIRE(c.body.size() == 2);
        CHECK_FALSE(c.body[0].negated());
        CHECK_FALSE(c.body[1].negated());
        CHECK(is_anonymous(c.body[1].goal.args()[0]));
        CHECK(to_string(c) == "active_subscription(S) :- has_status(S, active), subscribe(_, S).");
    }

    TEST_CASE("spaced terminator and multi-line bodies") {
        Program p = parse_program(kEvaluationRules);
        REQUIRE(p.size() == 2);
        CHECK(to_string(p.clauses()[1]) ==
              "success(I) :- resolved(I), customer_satisfaction(I, Score), Score >= 4.0.");
    }

    TEST_CASE("all comparison operators and arithmetic precedence") {
        Program p = parse_program("p(X) :- q(X, Y), X >= 1, X > 0, X =< 9, X < 10, X == Y, X != 3 + 2 * Y - 1.");
        const auto& body = p.clauses()[0].body;
        REQUIRE(body.size() == 7);
        const Term& last = body[6].goal;
        CHECK(last.name() == "!=");
        // 3 + 2 * Y - 1 parses as (3 + (2 * Y)) - 1
        const Term& rhs = last.args()[1];
        CHECK(rhs.name() == "-");
        CHECK(rhs.args()[0].name() == "+");
        CHECK(rhs.args()[0].args()[1].name() == "*");
    }

    TEST_CASE("numbers, strings, lists") {
        Term t = parse_term("f(-3, 4.0, 2.5e3, \"Rivertown \\\"north\\\"\", [a, b|T], [])");
        CHECK(t.args()[0].int_value() == -3);
        CHECK(t.args()[1].kind() == TermKind::floating);
        CHECK(t.args()[2].float_value() == 2500.0);
        CHECK(t.args()[3].name() == "Rivertown \"north\"");
        CHECK(t.args()[4].is_list());
        CHECK(t.args()[4].tail().is_var());
        CHECK(t.args()[5].is_nil());
        CHECK(to_string(t) == "f(-3, 4.0, 2500.0, \"Rivertown \\\"north\\\"\", [a, b|T], [])");
    }

    TEST_CASE("negation literal") {
        Program p = parse_program("lapsed(S) :- subscription(S), not(active_subscription(S)).");
        const auto& body = p.clauses()[0].body;
        REQUIRE(body.size() == 2);
        CHECK(body[1].negated());
        CHECK(to_string(body[1].goal) == "active_subscription(S)");
    }

    TEST_CASE("section markers partition clauses") {
        Program p = parse_program(R"(
consumer(c1).
% SECTION: facts
consumer(c2).
subscription(s1).
% SECTION: rules
target(C) :- consumer(C).
% a plain comment
% SECTION: actions
invoke(marketing_send, C) :- target(C).
)");
        REQUIRE(p.segments().size() == 4);
        CHECK(p.segments()[0] == Segment{Partition::task_rules, 0, 1});
        CHECK(p.segments()[1] == Segment{Partition::facts_foundational, 1, 3});
        CHECK(p.segments()[2] == Segment{Partition::task_rules, 3, 4});
        CHECK(p.segments()[3] == Segment{Partition::actions, 4, 5});
        CHECK(p.partition(Partition::task_rules).size() == 2);
        CHECK(p.partition(Partition::actions).size() == 1);
    }

    TEST_CASE("syntax errors report line, column and token") {
        try {
            parse_program("consumer(c1).\nsubscribe(c1 s1).");
            FAIL("expected syntax error");
        } catch (const SyntaxError& e) {
            CHECK(e.code() == ErrorCode::syntax_error);
            CHECK(e.line() == 2);
            CHECK(e.column() == 14);
            CHECK(e.token() == "s1");
        }
        CHECK(error_code_of([] { parse_program("p(X) :- q(X)"); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("X :- q(X)."); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("p :- 3."); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("p() ."); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("p(a) :- X < Y < Z."); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("% SECTION: bogus\np."); }) == ErrorCode::syntax_error);
        CHECK(error_code_of([] { parse_program("p(\"open)."); }) == ErrorCode::syntax_error);
    }

    TEST_CASE("unsafe negation names the unbound variable") {
        try {
            parse_program("orphan(S) :- not(subscribe(C, S)), subscription(S).");
            FAIL("expected unsafe negation");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::unsafe_negation);
            CHECK(std::string(e.what()).find("variable C") != std::string::npos);
        }
        CHECK(error_code_of([] { parse_program("orphan(S) :- subscription(S), not(subscribe(_, S))."); }) ==
              ErrorCode::unsafe_negation);
        CHECK_NOTHROW(parse_program("lapsed(S) :- subscription(S), not(active(S))."));
    }

    TEST_CASE("render/parse round trip on random programs") {
        std::mt19937_64 rng(7);
        for (int i = 0; i < 300; ++i) {
            std::vector<Clause> clauses;
            std::size_t n = 1 + rng() % 4;
            for (std::size_t k = 0; k < n; ++k) {
                std::vector<Term> head_args{random_term(rng, 2)};
                Clause c{Term::compound("h", head_args), {}};
                std::size_t body = rng() % 3;
                for (std::size_t b = 0; b < body; ++b) {
                    c.body.push_back(Literal{Literal::Polarity::positive, Term::compound("q", {random_term(rng, 2)})});
                }
                clauses.push_back(c);
            }
            std::size_t split = rng() % (clauses.size() + 1);
            Program original(clauses, {Segment{Partition::facts_foundational, 0, split},
                                       Segment{Partition::actions, split, clauses.size()}});
            Program reparsed = parse_program(render(original));
            CHECK_MESSAGE(reparsed == original, render(original));
            CHECK(render(reparsed) == render(original));
        }
    }
}

TEST_SUITE("unify") {
    TEST_CASE("binds a variable against a ground fact") {
        auto s = unify(parse_term("subscribe(C, s456)"), parse_term("subscribe(c123, s456)"));
        REQUIRE(s);
        CHECK(s->size() == 1);
        CHECK(to_string(*s->get("C")) == "c123");
    }

    TEST_CASE("identical atoms give the empty substitution") {
        auto s = unify(Term::atom("x"), Term::atom("x"));
        REQUIRE(s);
        CHECK(s->empty());
    }

    TEST_CASE("occurs check") {
        CHECK_FALSE(unify(parse_term("X"), parse_term("f(X)")));
        CHECK_FALSE(unify(parse_term("[X|T]"), parse_term("T")));
    }

    TEST_CASE("lists of different shapes") {
        auto s = unify(parse_term("[a, b|T]"), parse_term("[a, b, c, d]"));
        REQUIRE(s);
        CHECK(to_string(*s->get("T")) == "[c, d]");
        CHECK_FALSE(unify(parse_term("[a]"), parse_term("[]")));
        CHECK_FALSE(unify(parse_term("[a, b]"), parse_term("[a]")));
    }

    TEST_CASE("integers and floats are distinct terms") {
        CHECK_FALSE(unify(Term::integer(4), Term::floating(4.0)));
    }

    TEST_CASE("extends the incoming substitution") {
        Substitution s;
        s.bind(Term::var("X"), Term::atom("a"));
        auto r = unify(parse_term("f(X, Y)"), parse_term("f(Z, b)"), s);
        REQUIRE(r);
        CHECK(to_string(r->apply(parse_term("Z"))) == "a");
        CHECK(to_string(*r->get("X")) == "a");
    }

    TEST_CASE("soundness and idempotence on random term pairs") {
        std::mt19937_64 rng(11);
        int unified = 0;
        for (int i = 0; i < 2000; ++i) {
            Term a = random_term(rng, 3);
            Term b = random_term(rng, 3);
            auto s = unify(a, b);
            if (!s) continue;
            ++unified;
            CHECK(s->apply(a) == s->apply(b));
            Substitution r = s->resolved();
            CHECK(r.apply(r.apply(a)) == r.apply(a));
        }
        CHECK(unified > 100);
    }
}

TEST_SUITE("eval_arith") {
    TEST_CASE("literals and closed forms") {
        CHECK(eval_arith(parse_term("4.2")).as_double() == 4.2);
        Number four = eval_arith(parse_term("3 + 1"));
        CHECK(four.is_int());
        CHECK(four.as_int() == 4);
        Number half = eval_arith(parse_term("1 / 2"));
        CHECK_FALSE(half.is_int());
        CHECK(half.as_double() == 0.5);
        CHECK_FALSE(eval_arith(parse_term("2 * 1.5")).is_int());
        CHECK(eval_arith(parse_term("-(2 - 5)")).as_int() == 3);
    }

    TEST_CASE("errors") {
        CHECK(error_code_of([] { eval_arith(parse_term("1 / 0")); }) == ErrorCode::arithmetic_error);
        CHECK(error_code_of([] { eval_arith(parse_term("1.0 / 0.0")); }) == ErrorCode::arithmetic_error);
        CHECK(error_code_of([] { eval_arith(parse_term("a + 1")); }) == ErrorCode::type_error);
        CHECK(error_code_of([] { eval_arith(parse_term("X + 1")); }) == ErrorCode::instantiation_error);
        CHECK(error_code_of([] { eval_arith(parse_term("9223372036854775807 + 1")); }) ==
              ErrorCode::arithmetic_error);
    }

    TEST_CASE("comparisons promote") {
        CHECK(compare_numbers(">=", Number{4.2}, Number{4.0}));
        CHECK(compare_numbers(">=", Number{std::int64_t{4}}, Number{4.0}));
        CHECK_FALSE(compare_numbers(">", Number{std::int64_t{4}}, Number{4.0}));
        CHECK(compare_numbers("==", Number{std::int64_t{4}}, Number{4.0}));
    }
}

TEST_SUITE("solve") {
    TEST_CASE("active subscription from the enterprise snippet") {
        Program p = parse_program(kSemanticsSnippet);
        auto solutions = solve(parse_term("active_subscription(S)"), p);
        auto first = solutions.next();
        REQUIRE(first);
        CHECK(first->size() == 1);
        CHECK(to_string(*first->get("S")) == "s456");
        CHECK_FALSE(solutions.next());
    }

    TEST_CASE("success threshold") {
        Program rules = parse_program(kEvaluationRules);
        auto with_score = [&](const char* score) {
            Program facts = parse_program(std::string("outcome(i1, resolved).\ncustomer_satisfaction(i1, ") + score + ").");
            return solve_all(parse_term("success(i1)"), facts.concat(rules)).size();
        };
        CHECK(with_score("4.2") == 1);
        CHECK(with_score("4.0") == 1);
        CHECK(with_score("4") == 1);
        CHECK(with_score("3.9") == 0);
    }

    TEST_CASE("empty program has no solutions") {
        CHECK_FALSE(solve(parse_term("anything(X)"), Program{}).next());
    }

    TEST_CASE("solve_all enumerates in order without duplicates") {
        Program p = parse_program("consumer(c1). consumer(c2). consumer(c1).");
        CHECK(rendered(solve_all(parse_term("consumer(C)"), p)) ==
              std::vector<std::string>{"consumer(c1)", "consumer(c2)"});
    }

    TEST_CASE("solve_all over the foundational precondition rule") {
        Program p = parse_program(kSemanticsSnippet);
        CHECK(rendered(solve_all(parse_term("precondition(send_promotion(C))"), p)) ==
              std::vector<std::string>{"precondition(send_promotion(c123))"});
    }

    TEST_CASE("max_solutions truncates") {
        Program p = parse_program("n(1). n(2). n(3).");
        CHECK(solve_all(parse_term("n(X)"), p, SolveLimits{512, 2}).size() == 2);
    }

    TEST_CASE("negation as failure on ground goals") {
        Program p = parse_program(R"(
subscription(s1). subscription(s2).
has_status(s1, active).
lapsed(S) :- subscription(S), not(has_status(S, active)).
)");
        CHECK(rendered(solve_all(parse_term("lapsed(S)"), p)) == std::vector<std::string>{"lapsed(s2)"});
    }

    TEST_CASE("negation of a non-ground goal is an error naming the variable") {
        Program p = parse_program("q(a). p(X) :- not(q(X)).");
        try {
            solve_all(parse_term("p(Y)"), p);
            FAIL("expected nonground negation error");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::nonground_negation);
            CHECK(std::string(e.what()).find("variable") != std::string::npos);
        }
        CHECK(error_code_of([] { solve_all(parse_term("not(q(Z))"), Program{}); }) == ErrorCode::nonground_negation);
    }

    TEST_CASE("comparison operands must be numbers") {
        Program p = parse_program("rate(s1, cheap). ok(S) :- rate(S, R), R >= 10.0.");
        CHECK(error_code_of([&] { solve_all(parse_term("ok(S)"), p); }) == ErrorCode::type_error);
        Program q = parse_program("ok :- X >= 10.0.");
        CHECK(error_code_of([&] { solve_all(parse_term("ok"), q); }) == ErrorCode::instantiation_error);
    }

    TEST_CASE("depth limit is an error, not a failure") {
        Program p = parse_program("loop(X) :- loop(X).");
        CHECK(error_code_of([&] { solve_all(parse_term("loop(a)"), p, SolveLimits{16, std::nullopt}); }) ==
              ErrorCode::depth_limit_exceeded);
        Program chain = parse_program("n(0). n(X) :- m(X). m(X) :- n(X).");
        CHECK(solve_first(parse_term("n(0)"), chain, SolveLimits{1, std::nullopt}).has_value());
    }

    TEST_CASE("recursion within the depth limit") {
        Program p = parse_program(R"(
edge(a, b). edge(b, c). edge(c, d).
path(X, Y) :- edge(X, Y).
path(X, Y) :- edge(X, Z), path(Z, Y).
)");
        CHECK(rendered(solve_all(parse_term("path(a, Y)"), p)) ==
              std::vector<std::string>{"path(a, b)", "path(a, c)", "path(a, d)"});
    }

    TEST_CASE("findall collects distinct instances") {
        Program p = parse_program(R"(
target(c2). target(c1). target(c2).
batch(L) :- findall(C, target(C), L).
none(L) :- findall(C, missing(C), L).
)");
        CHECK(rendered(solve_all(parse_term("batch(L)"), p)) == std::vector<std::string>{"batch([c2, c1])"});
        CHECK(rendered(solve_all(parse_term("none(L)"), p)) == std::vector<std::string>{"none([])"});
    }

    TEST_CASE("holds evaluates derivability against the program's snapshot") {
        Program p = parse_program(kSemanticsSnippet).with_state("snap_1");
        CHECK(derivable(parse_term("holds(precondition(send_promotion(c123)), snap_1)"), p));
        CHECK_FALSE(derivable(parse_term("holds(precondition(send_promotion(c123)), snap_0)"), p));
        auto s = solve_first(parse_term("holds(active_subscription(S), snap_1)"), p);
        REQUIRE(s);
        CHECK(to_string(*s->get("S")) == "s456");
        CHECK(error_code_of([&] { solve_all(parse_term("holds(consumer(C), St)"), p); }) ==
              ErrorCode::instantiation_error);
    }

    TEST_CASE("conjunctive queries") {
        Program p = parse_program(kSemanticsSnippet);
        auto all = solve_all(parse_goal("consumer(C), subscribe(C, S)"), p);
        REQUIRE(all.size() == 1);
        CHECK(to_string(all[0]) == "consumer(c123), subscribe(c123, s456)");
    }

    TEST_CASE("argument indexing does not change answers") {
        Program p = parse_program(R"(
r(a, X) :- s(X).
r(Y, b) :- s(Y).
r(c, c).
s(a). s(b).
)");
        CHECK(rendered(solve_all(parse_term("r(a, Q)"), p)) ==
              std::vector<std::string>{"r(a, a)", "r(a, b)"});
        CHECK(rendered(solve_all(parse_term("r(Q, b)"), p)) ==
              std::vector<std::string>{"r(a, b)", "r(b, b)"});
        CHECK(rendered(solve_all(parse_term("r(c, Q)"), p)) == std::vector<std::string>{"r(c, c)"});
    }
}

TEST_SUITE("solver properties") {
    TEST_CASE("matches the bottom-up fixpoint oracle on random negation-free programs") {
        std::mt19937_64 rng(2024);
        for (int i = 0; i < 200; ++i) {
            auto g = oracle::generate(rng);
            std::string src = oracle::render_program(g.program);
            Program p = parse_program(src);
            auto got = rendered(solve_all(parse_term(oracle::render_atom(g.query)), p));
            std::sort(got.begin(), got.end());
            CHECK_MESSAGE(got == oracle::answers(g.program, g.query), src, "\nquery: ", oracle::render_atom(g.query));
        }
    }

    TEST_CASE("determinism and monotonicity") {
        std::mt19937_64 rng(99);
        for (int i = 0; i < 100; ++i) {
            auto g = oracle::generate(rng);
            Term query = parse_term(oracle::render_atom(g.query));
            Program p = parse_program(oracle::render_program(g.program));
            auto first = solve_all(query, p);
            CHECK(first == solve_all(query, p));

            auto extended = g.program;
            auto extra = oracle::generate(rng, 3, 0).program.facts;
            extended.facts.insert(extended.facts.end(), extra.begin(), extra.end());
            auto larger = solve_all(query, parse_program(oracle::render_program(extended)));
            for (const auto& t : first) {
                CHECK(std::find(larger.begin(), larger.end(), t) != larger.end());
            }
        }
    }
}
