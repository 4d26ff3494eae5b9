#include "autobus/logic/parser.hpp"

#include "autobus/logic/operators.hpp"

#include <cctype>
#include <charconv>
#include <limits>

namespace autobus::logic {

SyntaxError::SyntaxError(std::size_t line, std::size_t column, std::string token, const std::string& what)
    : Error(ErrorCode::syntax_error,
            "syntax error at " + std::to_string(line) + ":" + std::to_string(column) + " near '" + token +
                "': " + what),
      line_(line),
      column_(column),
      token_(std::move(token)) {}

namespace {

enum class Tok { atom, var, integer, floating, string, punct, end, section, eof };

struct Token {
    Tok kind;
    std::string text;
    std::size_t line;
    std::size_t column;
    std::int64_t ival = 0;
    double fval = 0.0;
};

bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space_and_comments(out);
            if (pos_ >= src_.size()) {
                out.push_back(Token{Tok::eof, "<eof>", line_, col_});
                return out;
            }
            out.push_back(next());
        }
    }

private:
    char peek(std::size_t ahead = 0) const {
        return pos_ + ahead < src_.size() ? src_[pos_ + ahead] : '\0';
    }

    void advance() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    [[noreturn]] void fail(const std::string& token, const std::string& what) const {
        throw SyntaxError(line_, col_, token, what);
    }

    void skip_space_and_comments(std::vector<Token>& out) {
        while (pos_ < src_.size()) {
            char c = peek();
            if (std::isspace(static_cast<unsigned char>(c))) {
                advance();
            } else if (c == '%') {
                std::size_t line = line_, col = col_;
                std::size_t start = pos_;
                while (pos_ < src_.size() && peek() != '\n') advance();
                section_marker(src_.substr(start + 1, pos_ - start - 1), line, col, out);
            } else {
                return;
            }
        }
    }

    void section_marker(std::string_view body, std::size_t line, std::size_t col, std::vector<Token>& out) {
        auto trim = [](std::string_view s) {
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
            while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
            return s;
        };
        body = trim(body);
        constexpr std::string_view kPrefix = "SECTION:";
        if (body.substr(0, kPrefix.size()) != kPrefix) return;
        std::string_view name = trim(body.substr(kPrefix.size()));
        if (!partition_from_section(name)) {
            throw SyntaxError(line, col, std::string(name), "unknown section (expected facts, rules or actions)");
        }
        out.push_back(Token{Tok::section, std::string(name), line, col});
    }

    Token next() {
        std::size_t line = line_, col = col_;
        char c = peek();
        auto make = [&](Tok kind, std::string text) { return Token{kind, std::move(text), line, col}; };

        if (std::islower(static_cast<unsigned char>(c))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() && ident_char(peek())) advance();
            return make(Tok::atom, std::string(src_.substr(start, pos_ - start)));
        }
        if (std::isupper(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() && ident_char(peek())) advance();
            return make(Tok::var, std::string(src_.substr(start, pos_ - start)));
        }
        if (std::isdigit(static_cast<unsigned char>(c))) return number(line, col);
        if (c == '"') return string_literal(line, col);
        if (c == '.') {
            char n = peek(1);
            if (n == '\0' || std::isspace(static_cast<unsigned char>(n)) || n == '%') {
                advance();
                return make(Tok::end, ".");
            }
            fail(".", "'.' must end a clause");
        }

        static constexpr std::string_view kTwoChar[] = {":-", ">=", "=<", "==", "!="};
        for (auto op : kTwoChar) {
            if (peek() == op[0] && peek(1) == op[1]) {
                advance();
                advance();
                return make(Tok::punct, std::string(op));
            }
        }
        static constexpr std::string_view kOneChar = "()[]|,+-*/<>";
        if (kOneChar.find(c) != std::string_view::npos) {
            advance();
            return make(Tok::punct, std::string(1, c));
        }
        fail(std::string(1, c), "unexpected character");
    }

    Token number(std::size_t line, std::size_t col) {
        std::size_t start = pos_;
        bool is_float = false;
        while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        if (peek() == '.' && std::isdigit(static_cast<unsigned char>(peek(1)))) {
            is_float = true;
            advance();
            while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            std::size_t k = 1;
            if (peek(1) == '+' || peek(1) == '-') k = 2;
            if (std::isdigit(static_cast<unsigned char>(peek(k)))) {
                is_float = true;
                for (std::size_t i = 0; i < k; ++i) advance();
                while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
            }
        }
        std::string text(src_.substr(start, pos_ - start));
        Token t{is_float ? Tok::floating : Tok::integer, text, line, col};
        if (is_float) {
            auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), t.fval);
            if (ec != std::errc()) throw SyntaxError(line, col, text, "malformed number");
        }
        return t;
    }

    Token string_literal(std::size_t line, std::size_t col) {
        advance();  // opening quote
        std::string value;
        while (true) {
            if (pos_ >= src_.size()) throw SyntaxError(line, col, "\"", "unterminated string");
            char c = peek();
            if (c == '"') {
                advance();
                break;
            }
            if (c == '\\') {
                advance();
                char e = peek();
                switch (e) {
                case 'n': value += '\n'; break;
                case 't': value += '\t'; break;
                case '"': value += '"'; break;
                case '\\': value += '\\'; break;
                default: fail(std::string("\\") + e, "unknown escape");
                }
                advance();
                continue;
            }
            value += c;
            advance();
        }
        return Token{Tok::string, value, line, col};
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    std::size_t line_ = 1;
    std::size_t col_ = 1;
};

class Parser {
public:
    explicit Parser(std::string_view src) : tokens_(Lexer(src).run()) {}

    Program program() {
        std::vector<Clause> clauses;
        std::vector<Segment> segments;
        Partition current = Partition::task_rules;
        while (true) {
            while (at(Tok::section)) {
                current = *partition_from_section(take().text);
            }
            if (at(Tok::eof)) break;
            anon_counter_ = 0;
            std::size_t line = cur().line;
            Clause clause = this->clause();
            if (auto v = unsafe_negation_variable(clause)) {
                throw Error(ErrorCode::unsafe_negation,
                            "unsafe negation: variable " + (is_anonymous(*v) ? std::string("_") : v->name()) +
                                " in clause at line " + std::to_string(line) +
                                " is not bound by the head or a preceding positive literal");
            }
            if (segments.empty() || segments.back().tag != current) {
                segments.push_back(Segment{current, clauses.size(), clauses.size()});
            }
            clauses.push_back(std::move(clause));
            segments.back().end = clauses.size();
        }
        return Program(std::move(clauses), std::move(segments));
    }

    Term single_term() {
        Term t = expr(kMaxPrecedence);
        finish();
        return t;
    }

    Term goal() {
        Term t = expr(kMaxPrecedence);
        check_goal(t);
        finish();
        return t;
    }

    std::vector<Literal> body_only() {
        std::vector<Literal> body = body_literals();
        finish();
        return body;
    }

private:
    const Token& cur() const { return tokens_[pos_]; }
    bool at(Tok k) const { return cur().kind == k; }
    bool at_punct(std::string_view p) const { return cur().kind == Tok::punct && cur().text == p; }
    Token take() { return tokens_[pos_++]; }

    [[noreturn]] void fail(const std::string& what) const {
        throw SyntaxError(cur().line, cur().column, cur().text, what);
    }

    void expect_punct(std::string_view p) {
        if (!at_punct(p)) fail("expected '" + std::string(p) + "'");
        ++pos_;
    }

    void finish() {
        if (at(Tok::end)) ++pos_;
        if (!at(Tok::eof)) fail("unexpected trailing input");
    }

    Clause clause() {
        const Token& start = cur();
        Term head = expr(kArgumentPrecedence);
        if (!head.is_callable() || !is_atom_name(head.name())) {
            throw SyntaxError(start.line, start.column, start.text,
                              "clause head must be an atom or compound term");
        }
        std::vector<Literal> body;
        if (at_punct(":-")) {
            ++pos_;
            body = body_literals();
        }
        if (!at(Tok::end)) fail("expected '.' at end of clause");
        ++pos_;
        return Clause{std::move(head), std::move(body)};
    }

    std::vector<Literal> body_literals() {
        std::vector<Literal> body;
        do {
            if (!body.empty()) ++pos_;
            const Token& start = cur();
            Term t = expr(kArgumentPrecedence);
            if (t.is_compound() && t.name() == "not" && t.arity() == 1) {
                check_goal(t.args()[0], start);
                body.push_back(Literal{Literal::Polarity::negated, t.args()[0]});
            } else {
                check_goal(t, start);
                body.push_back(Literal{Literal::Polarity::positive, t});
            }
        } while (at_punct(","));
        return body;
    }

    void check_goal(const Term& t) const { check_goal(t, cur()); }

    void check_goal(const Term& t, const Token& at_token) const {
        if (!t.is_callable()) {
            throw SyntaxError(at_token.line, at_token.column, at_token.text,
                              "goal must be an atom or compound term, got " + to_string(t));
        }
    }

    // Precedence climbing over the infix operator table.
    Term expr(int max_prec) {
        Term left = unary();
        int left_prec = 0;
        while (cur().kind == Tok::punct) {
            auto op = infix_operator(cur().text);
            if (!op || op->precedence > max_prec) break;
            bool left_ok = op->assoc == Assoc::left ? left_prec <= op->precedence : left_prec < op->precedence;
            if (!left_ok) break;
            std::string name = take().text;
            int right_max = op->assoc == Assoc::right ? op->precedence : op->precedence - 1;
            Term right = expr(right_max);
            left = Term::compound(name, {left, right});
            left_prec = op->precedence;
        }
        return left;
    }

    Term unary() {
        if (at_punct("-")) {
            ++pos_;
            if (at(Tok::integer)) return integer_literal(take(), true);
            if (at(Tok::floating)) return Term::floating(-take().fval);
            return Term::compound("-", {unary()});
        }
        return primary();
    }

    Term integer_literal(const Token& t, bool negative) {
        std::uint64_t magnitude = 0;
        auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), magnitude);
        constexpr auto kMax = static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max());
        if (ec != std::errc() || magnitude > kMax + (negative ? 1 : 0)) {
            throw SyntaxError(t.line, t.column, t.text, "integer literal out of range");
        }
        if (negative) {
            return Term::integer(magnitude == kMax + 1 ? std::numeric_limits<std::int64_t>::min()
                                                       : -static_cast<std::int64_t>(magnitude));
        }
        return Term::integer(static_cast<std::int64_t>(magnitude));
    }

    Term primary() {
        switch (cur().kind) {
        case Tok::integer: return integer_literal(take(), false);
        case Tok::floating: return Term::floating(take().fval);
        case Tok::string: return Term::string(take().text);
        case Tok::var: {
            std::string name = take().text;
            if (name == "_") name = "_#" + std::to_string(++anon_counter_);
            return Term::var(std::move(name));
        }
        case Tok::atom: {
            std::string name = take().text;
            if (!at_punct("(")) return Term::atom(std::move(name));
            ++pos_;
            if (at_punct(")")) fail("compound term needs at least one argument");
            std::vector<Term> args;
            args.push_back(expr(kArgumentPrecedence));
            while (at_punct(",")) {
                ++pos_;
                args.push_back(expr(kArgumentPrecedence));
            }
            expect_punct(")");
            return Term::compound(std::move(name), std::move(args));
        }
        case Tok::punct:
            if (at_punct("[")) return list();
            if (at_punct("(")) {
                ++pos_;
                Term inner = expr(kMaxPrecedence);
                expect_punct(")");
                return inner;
            }
            break;
        default:
            break;
        }
        fail("unexpected token");
    }

    Term list() {
        expect_punct("[");
        if (at_punct("]")) {
            ++pos_;
            return Term::nil();
        }
        std::vector<Term> items;
        items.push_back(expr(kArgumentPrecedence));
        while (at_punct(",")) {
            ++pos_;
            items.push_back(expr(kArgumentPrecedence));
        }
        std::optional<Term> tail;
        if (at_punct("|")) {
            ++pos_;
            tail = expr(kArgumentPrecedence);
        }
        expect_punct("]");
        return Term::list(std::move(items), std::move(tail));
    }

    std::vector<Token> tokens_;
    std::size_t pos_ = 0;
    int anon_counter_ = 0;
};

}  // namespace

Program parse_program(std::string_view source) { return Parser(source).program(); }

Term parse_term(std::string_view source) { return Parser(source).single_term(); }

Term parse_goal(std::string_view source) { return Parser(source).goal(); }

std::vector<Literal> parse_body(std::string_view source) { return Parser(source).body_only(); }

std::vector<Term> flatten_conjunction(const Term& goal) {
    std::vector<Term> out;
    Term t = goal;
    while (t.is_compound() && t.name() == "," && t.arity() == 2) {
        auto inner = flatten_conjunction(t.args()[0]);
        out.insert(out.end(), inner.begin(), inner.end());
        t = t.args()[1];
    }
    out.push_back(t);
    return out;
}

}  // namespace autobus::logic
