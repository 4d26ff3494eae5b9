#include "autobus/logic/unify.hpp"

namespace autobus::logic {

namespace {

template <class Store>
Term deref_in(const Term& t, const Store& s) {
    Term cur = t;
    while (cur.is_var()) {
        const Term* v = s.lookup(cur);
        if (!v) break;
        cur = *v;
    }
    return cur;
}

template <class Store>
Term apply_in(const Term& t, const Store& s) {
    if (t.is_ground()) return t;
    Term d = deref_in(t, s);
    switch (d.kind()) {
    case TermKind::compound: {
        std::vector<Term> args;
        args.reserve(d.arity());
        for (const auto& a : d.args()) args.push_back(apply_in(a, s));
        return Term::compound(d.name(), std::move(args));
    }
    case TermKind::list: {
        std::vector<Term> items;
        items.reserve(d.args().size());
        for (const auto& a : d.args()) items.push_back(apply_in(a, s));
        return Term::list(std::move(items), apply_in(d.tail(), s));
    }
    default:
        return d;
    }
}

template <class Store>
bool occurs_in(const Term& var, const Term& t, const Store& s) {
    if (t.is_ground()) return false;
    Term d = deref_in(t, s);
    switch (d.kind()) {
    case TermKind::variable:
        return d == var;
    case TermKind::compound:
        for (const auto& a : d.args()) {
            if (occurs_in(var, a, s)) return true;
        }
        return false;
    case TermKind::list:
        for (const auto& a : d.args()) {
            if (occurs_in(var, a, s)) return true;
        }
        return occurs_in(var, d.tail(), s);
    default:
        return false;
    }
}

// Remainder of a list after skipping its first k items.
Term list_rest(const Term& list, std::size_t k) {
    const auto& items = list.args();
    if (k >= items.size()) return list.tail();
    return Term::list(std::vector<Term>(items.begin() + static_cast<std::ptrdiff_t>(k), items.end()),
                      list.tail());
}

template <class Store>
bool unify_in(const Term& a, const Term& b, Store& s) {
    Term x = deref_in(a, s);
    Term y = deref_in(b, s);
    if (x.node() == y.node()) return true;
    if (x.is_var()) {
        if (y.is_var() && x == y) return true;
        if (occurs_in(x, y, s)) return false;
        s.bind(x, y);
        return true;
    }
    if (y.is_var()) {
        if (occurs_in(y, x, s)) return false;
        s.bind(y, x);
        return true;
    }
    if (x.kind() != y.kind()) return false;
    switch (x.kind()) {
    case TermKind::compound: {
        if (x.name() != y.name() || x.arity() != y.arity()) return false;
        for (std::size_t i = 0; i < x.arity(); ++i) {
            if (!unify_in(x.args()[i], y.args()[i], s)) return false;
        }
        return true;
    }
    case TermKind::list: {
        const auto& xs = x.args();
        const auto& ys = y.args();
        std::size_t n = std::min(xs.size(), ys.size());
        for (std::size_t i = 0; i < n; ++i) {
            if (!unify_in(xs[i], ys[i], s)) return false;
        }
        return unify_in(list_rest(x, n), list_rest(y, n), s);
    }
    default:
        return x == y;
    }
}

}  // namespace

const Term* Substitution::lookup(const Term& var) const {
    auto it = bindings_.find(var);
    return it == bindings_.end() ? nullptr : &it->second;
}

void Substitution::bind(const Term& var, const Term& value) { bindings_.insert_or_assign(var, value); }

Term Substitution::deref(const Term& t) const { return deref_in(t, *this); }

Term Substitution::apply(const Term& t) const { return apply_in(t, *this); }

std::optional<Term> Substitution::get(const std::string& var_name) const {
    const Term* v = lookup(Term::var(var_name));
    if (!v) return std::nullopt;
    return apply(*v);
}

Substitution Substitution::resolved() const {
    Substitution out;
    for (const auto& [k, v] : bindings_) out.bindings_.emplace(k, apply(v));
    return out;
}

std::string to_string(const Substitution& s) {
    std::string out = "{";
    bool first = true;
    for (const auto& [k, v] : s.bindings()) {
        if (!first) out += ", ";
        first = false;
        out += to_string(k) + " = " + to_string(v);
    }
    return out + "}";
}

std::optional<Substitution> unify(const Term& a, const Term& b, const Substitution& s) {
    Substitution out = s;
    if (!unify_in(a, b, out)) return std::nullopt;
    return out;
}

const Term* BindingStore::lookup(const Term& var) const {
    auto it = bindings_.find(var);
    return it == bindings_.end() ? nullptr : &it->second;
}

void BindingStore::bind(const Term& var, const Term& value) {
    bindings_.emplace(var, value);
    trail_.push_back(var);
}

void BindingStore::undo(std::size_t mark) {
    while (trail_.size() > mark) {
        bindings_.erase(trail_.back());
        trail_.pop_back();
    }
}

Term BindingStore::deref(const Term& t) const { return deref_in(t, *this); }

Term BindingStore::apply(const Term& t) const { return apply_in(t, *this); }

bool unify_into(const Term& a, const Term& b, BindingStore& store) { return unify_in(a, b, store); }

}  // namespace autobus::logic
