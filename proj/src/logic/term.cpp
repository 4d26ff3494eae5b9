#include "autobus/logic/term.hpp"

#include "autobus/logic/operators.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace autobus::logic {

namespace {

std::size_t mix(std::size_t seed, std::size_t v) {
    return seed ^ (v + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
}

const std::vector<Term>& empty_terms() {
    static const std::vector<Term> empty;
    return empty;
}

std::shared_ptr<TermNode> make_node(TermKind kind) {
    auto n = std::make_shared<TermNode>();
    n->kind = kind;
    n->hash = static_cast<std::size_t>(kind) * 0x100000001b3ULL;
    return n;
}

}  // namespace

Term Term::atom(std::string name) {
    auto n = make_node(TermKind::atom);
    n->hash = mix(n->hash, std::hash<std::string>{}(name));
    n->text = std::move(name);
    return Term(std::move(n));
}

Term Term::var(std::string name, std::uint32_t scope) {
    auto n = make_node(TermKind::variable);
    n->ground = false;
    n->scope = scope;
    n->hash = mix(mix(n->hash, std::hash<std::string>{}(name)), scope);
    n->text = std::move(name);
    return Term(std::move(n));
}

Term Term::integer(std::int64_t value) {
    auto n = make_node(TermKind::integer);
    n->ival = value;
    n->hash = mix(n->hash, std::hash<std::int64_t>{}(value));
    return Term(std::move(n));
}

Term Term::floating(double value) {
    auto n = make_node(TermKind::floating);
    n->fval = value;
    n->hash = mix(n->hash, std::hash<double>{}(value));
    return Term(std::move(n));
}

Term Term::string(std::string value) {
    auto n = make_node(TermKind::string);
    n->hash = mix(n->hash, std::hash<std::string>{}(value));
    n->text = std::move(value);
    return Term(std::move(n));
}

Term Term::compound(std::string functor, std::vector<Term> args) {
    if (args.empty()) {
        throw std::invalid_argument("compound term '" + functor + "' needs at least one argument");
    }
    auto n = make_node(TermKind::compound);
    n->hash = mix(n->hash, std::hash<std::string>{}(functor));
    for (const auto& a : args) {
        n->ground = n->ground && a.is_ground();
        n->hash = mix(n->hash, a.hash());
    }
    n->text = std::move(functor);
    n->args = std::move(args);
    return Term(std::move(n));
}

Term Term::list(std::vector<Term> items, std::optional<Term> tail) {
    Term t = tail ? *tail : nil();
    if (items.empty()) return t;
    if (t.is_list()) {
        items.insert(items.end(), t.args().begin(), t.args().end());
        t = t.tail();
    }
    auto n = make_node(TermKind::list);
    for (const auto& a : items) {
        n->ground = n->ground && a.is_ground();
        n->hash = mix(n->hash, a.hash());
    }
    n->ground = n->ground && t.is_ground();
    n->hash = mix(n->hash, t.hash());
    n->args = std::move(items);
    n->tail = std::move(t);
    return Term(std::move(n));
}

Term Term::nil() {
    static const Term empty = Term::atom("[]");
    return empty;
}

TermKind Term::kind() const noexcept { return node_->kind; }
bool Term::is_nil() const noexcept { return is_atom() && node_->text == "[]"; }
bool Term::is_ground() const noexcept { return node_->ground; }
const std::string& Term::name() const noexcept { return node_->text; }
std::uint32_t Term::scope() const noexcept { return node_->scope; }
std::int64_t Term::int_value() const noexcept { return node_->ival; }
double Term::float_value() const noexcept { return node_->fval; }

const std::vector<Term>& Term::args() const noexcept {
    if (is_compound() || is_list()) return node_->args;
    return empty_terms();
}

const Term& Term::tail() const {
    if (!is_list()) throw std::logic_error("tail() on a non-list term");
    return *node_->tail;
}

std::size_t Term::arity() const noexcept { return is_compound() ? node_->args.size() : 0; }
std::size_t Term::hash() const noexcept { return node_->hash; }

bool operator==(const Term& a, const Term& b) {
    if (a.node_ == b.node_) return true;
    const TermNode& x = *a.node_;
    const TermNode& y = *b.node_;
    if (x.kind != y.kind || x.hash != y.hash) return false;
    switch (x.kind) {
    case TermKind::atom:
    case TermKind::string:
        return x.text == y.text;
    case TermKind::variable:
        return x.scope == y.scope && x.text == y.text;
    case TermKind::integer:
        return x.ival == y.ival;
    case TermKind::floating:
        return x.fval == y.fval || (std::isnan(x.fval) && std::isnan(y.fval));
    case TermKind::compound:
        return x.text == y.text && x.args == y.args;
    case TermKind::list:
        return x.args == y.args && *x.tail == *y.tail;
    }
    return false;
}

namespace {

int kind_rank(TermKind k) {
    switch (k) {
    case TermKind::variable: return 0;
    case TermKind::integer:
    case TermKind::floating: return 1;
    case TermKind::atom: return 2;
    case TermKind::string: return 3;
    case TermKind::compound: return 4;
    case TermKind::list: return 5;
    }
    return 6;
}

template <class T>
int three_way(const T& a, const T& b) {
    return a < b ? -1 : (b < a ? 1 : 0);
}

}  // namespace

int compare(const Term& a, const Term& b) {
    if (a.node() == b.node()) return 0;
    int ra = kind_rank(a.kind());
    int rb = kind_rank(b.kind());
    if (ra != rb) return ra < rb ? -1 : 1;
    switch (a.kind()) {
    case TermKind::variable:
        if (int c = a.name().compare(b.name())) return c < 0 ? -1 : 1;
        return three_way(a.scope(), b.scope());
    case TermKind::integer:
    case TermKind::floating: {
        if (a.kind() == TermKind::integer && b.kind() == TermKind::integer) {
            return three_way(a.int_value(), b.int_value());
        }
        double x = a.kind() == TermKind::integer ? static_cast<double>(a.int_value()) : a.float_value();
        double y = b.kind() == TermKind::integer ? static_cast<double>(b.int_value()) : b.float_value();
        if (int c = three_way(x, y)) return c;
        // Equal value: integer sorts before float.
        return three_way(a.kind() == TermKind::floating, b.kind() == TermKind::floating);
    }
    case TermKind::atom:
    case TermKind::string: {
        int c = a.name().compare(b.name());
        return c < 0 ? -1 : (c > 0 ? 1 : 0);
    }
    case TermKind::compound: {
        if (int c = three_way(a.arity(), b.arity())) return c;
        if (int c = a.name().compare(b.name())) return c < 0 ? -1 : 1;
        for (std::size_t i = 0; i < a.arity(); ++i) {
            if (int c = compare(a.args()[i], b.args()[i])) return c;
        }
        return 0;
    }
    case TermKind::list: {
        const auto& xs = a.args();
        const auto& ys = b.args();
        for (std::size_t i = 0; i < std::min(xs.size(), ys.size()); ++i) {
            if (int c = compare(xs[i], ys[i])) return c;
        }
        if (int c = three_way(xs.size(), ys.size())) return c;
        return compare(a.tail(), b.tail());
    }
    }
    return 0;
}

Indicator indicator_of(const Term& callable) {
    return Indicator{callable.name(), callable.arity()};
}

Term Number::to_term() const {
    return is_int() ? Term::integer(as_int()) : Term::floating(std::get<double>(value));
}

bool is_atom_name(std::string_view s) noexcept {
    if (s.empty() || !(s[0] >= 'a' && s[0] <= 'z')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

bool is_var_name(std::string_view s) noexcept {
    if (s.empty() || !((s[0] >= 'A' && s[0] <= 'Z') || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
    });
}

bool is_anonymous(const Term& var) noexcept {
    return var.is_var() && var.name().size() >= 2 && var.name()[0] == '_' && var.name()[1] == '#';
}

namespace {

void collect_vars(const Term& t, std::vector<Term>& out, std::unordered_set<Term, TermHash>& seen) {
    if (t.is_ground()) return;
    switch (t.kind()) {
    case TermKind::variable:
        if (seen.insert(t).second) out.push_back(t);
        break;
    case TermKind::compound:
        for (const auto& a : t.args()) collect_vars(a, out, seen);
        break;
    case TermKind::list:
        for (const auto& a : t.args()) collect_vars(a, out, seen);
        collect_vars(t.tail(), out, seen);
        break;
    default:
        break;
    }
}

}  // namespace

std::vector<Term> variables_of(const Term& t) {
    std::vector<Term> out;
    std::unordered_set<Term, TermHash> seen;
    collect_vars(t, out, seen);
    return out;
}

std::string format_number(double value) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
    std::string s(buf, end);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

namespace {

void quote_string(const std::string& s, std::string& out) {
    out += '"';
    for (char c : s) {
        switch (c) {
        case '"': out += "\\\""; break;
        case '\\': out += "\\\\"; break;
        case '\n': out += "\\n"; break;
        case '\t': out += "\\t"; break;
        default: out += c;
        }
    }
    out += '"';
}

void render(const Term& t, int max_prec, std::string& out);

void render_args(const std::vector<Term>& args, std::string& out) {
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (i) out += ", ";
        render(args[i], kArgumentPrecedence, out);
    }
}

void render(const Term& t, int max_prec, std::string& out) {
    switch (t.kind()) {
    case TermKind::atom:
        out += t.name();
        return;
    case TermKind::variable:
        if (is_anonymous(t)) {
            out += '_';
        } else {
            out += t.name();
            if (t.scope() != 0) out += "_" + std::to_string(t.scope());
        }
        return;
    case TermKind::integer:
        out += std::to_string(t.int_value());
        return;
    case TermKind::floating:
        out += format_number(t.float_value());
        return;
    case TermKind::string:
        quote_string(t.name(), out);
        return;
    case TermKind::list:
        out += '[';
        render_args(t.args(), out);
        if (!t.tail().is_nil()) {
            out += '|';
            render(t.tail(), kArgumentPrecedence, out);
        }
        out += ']';
        return;
    case TermKind::compound:
        break;
    }

    if (t.arity() == 2) {
        if (auto op = infix_operator(t.name())) {
            int left_max = op->assoc == Assoc::left ? op->precedence : op->precedence - 1;
            int right_max = op->assoc == Assoc::right ? op->precedence : op->precedence - 1;
            bool paren = op->precedence > max_prec;
            if (paren) out += '(';
            render(t.args()[0], left_max, out);
            out += t.name() == "," ? ", " : " " + t.name() + " ";
            render(t.args()[1], right_max, out);
            if (paren) out += ')';
            return;
        }
    }
    out += t.name();
    out += '(';
    render_args(t.args(), out);
    out += ')';
}

}  // namespace

std::string to_string(const Term& t) {
    std::string out;
    render(t, kMaxPrecedence, out);
    return out;
}

std::optional<OperatorInfo> infix_operator(std::string_view name) noexcept {
    if (name == ",") return OperatorInfo{1000, Assoc::right};
    if (is_comparison_operator(name)) return OperatorInfo{700, Assoc::none};
    if (name == "+" || name == "-") return OperatorInfo{500, Assoc::left};
    if (name == "*" || name == "/") return OperatorInfo{400, Assoc::left};
    return std::nullopt;
}

bool is_comparison_operator(std::string_view name) noexcept {
    return name == ">=" || name == ">" || name == "=<" || name == "<" || name == "==" || name == "!=";
}

bool is_arithmetic_operator(std::string_view name) noexcept {
    return name == "+" || name == "-" || name == "*" || name == "/";
}

}  // namespace autobus::logic
