#include "autobus/synthesis/synthesis.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/operators.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"

#include <algorithm>
#include <regex>
#include <set>

namespace autobus::synthesis {

using logic::Clause;
using logic::Indicator;
using logic::Literal;
using logic::Partition;
using logic::Term;

namespace {

[[noreturn]] void bad(const std::string& task, const std::string& what) {
    throw Error(ErrorCode::invalid_instruction, "instruction " + (task.empty() ? "?" : task) + ": " + what);
}

std::string param_text(const nlohmann::json& v) {
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number()) return logic::format_number(v.get<double>());
    if (v.is_string()) return v.get<std::string>();
    return v.dump();
}

std::string substitute(const std::string& text, const nlohmann::json& params, const std::string& task) {
    static const std::regex ref(R"(\$([A-Za-z_][A-Za-z0-9_]*))");
    std::string out;
    auto last = text.cbegin();
    for (std::sregex_iterator it(text.begin(), text.end(), ref), end; it != end; ++it) {
        const auto& m = *it;
        std::string name = m[1].str();
        if (!params.contains(name)) bad(task, "unknown parameter $" + name);
        out.append(last, m[0].first);
        out += param_text(params[name]);
        last = m[0].second;
    }
    out.append(last, text.cend());
    return out;
}

// Gives anonymous variables instruction-wide unique names so that pieces
// parsed separately do not share them.
Term separate_anonymous(const Term& t, std::size_t& counter) {
    if (t.is_ground()) return t;
    switch (t.kind()) {
    case logic::TermKind::variable:
        return logic::is_anonymous(t) ? Term::var("_#" + std::to_string(++counter)) : t;
    case logic::TermKind::compound: {
        std::vector<Term> args;
        for (const auto& a : t.args()) args.push_back(separate_anonymous(a, counter));
        return Term::compound(t.name(), std::move(args));
    }
    case logic::TermKind::list: {
        std::vector<Term> items;
        for (const auto& a : t.args()) items.push_back(separate_anonymous(a, counter));
        return Term::list(std::move(items), separate_anonymous(t.tail(), counter));
    }
    default: return t;
    }
}

// Renumbers anonymous variables from 1 in reading order, as the parser does.
Term renumber(const Term& t, std::map<std::string, std::string>& names) {
    if (t.is_ground()) return t;
    switch (t.kind()) {
    case logic::TermKind::variable: {
        if (!logic::is_anonymous(t)) return t;
        auto [it, fresh] = names.emplace(t.name(), "");
        if (fresh) it->second = "_#" + std::to_string(names.size());
        return Term::var(it->second);
    }
    case logic::TermKind::compound: {
        std::vector<Term> args;
        for (const auto& a : t.args()) args.push_back(renumber(a, names));
        return Term::compound(t.name(), std::move(args));
    }
    case logic::TermKind::list: {
        std::vector<Term> items;
        for (const auto& a : t.args()) items.push_back(renumber(a, names));
        return Term::list(std::move(items), renumber(t.tail(), names));
    }
    default: return t;
    }
}

Clause canonical(Clause c) {
    std::map<std::string, std::string> names;
    c.head = renumber(c.head, names);
    for (auto& lit : c.body) lit.goal = renumber(lit.goal, names);
    return c;
}

class Reader {
public:
    Reader(const nlohmann::json& params, std::string task) : params_(params), task_(std::move(task)) {}

    Term term(const nlohmann::json& v, const std::string& field) {
        if (v.is_number_integer()) return Term::integer(v.get<std::int64_t>());
        if (v.is_number()) return Term::floating(v.get<double>());
        if (!v.is_string()) bad(task_, field + " must be a string or number");
        return separate_anonymous(logic::parse_term(substitute(v.get<std::string>(), params_, task_)), counter_);
    }

    Term callable(const nlohmann::json& v, const std::string& field) {
        Term t = term(v, field);
        if (!t.is_callable()) bad(task_, field + " must be an atom or compound term");
        return t;
    }

private:
    const nlohmann::json& params_;
    std::string task_;
    std::size_t counter_ = 0;
};

Literal positive(Term goal) { return Literal{Literal::Polarity::positive, std::move(goal)}; }

// `not(G)` in a join is the negated literal G.
Literal join_literal(const Term& t) {
    if (t.is_compound() && t.name() == "not" && t.arity() == 1) return Literal{Literal::Polarity::negated, t.args()[0]};
    return positive(t);
}

std::vector<Literal> filter_literals(const FilterDecl& f) {
    if (f.predicate.empty()) return {positive(Term::compound(f.op, {f.subject, f.value}))};
    if (f.op == "=") return {positive(Term::compound(f.predicate, {f.subject, f.value}))};
    return {positive(Term::compound(f.predicate, {f.subject, *f.var})),
            positive(Term::compound(f.op, {*f.var, f.value}))};
}

// Predicates the goal calls, looking through `not`.
std::optional<Indicator> called(const Literal& lit) {
    Indicator ind = logic::indicator_of(lit.goal);
    if (logic::is_builtin(ind)) return std::nullopt;
    return ind;
}

std::string location(const logic::Program& p, std::size_t i) {
    return std::string(logic::section_name(p.partition_of(i))) + " clause " + std::to_string(i + 1);
}

}  // namespace

TaskInstruction parse_instruction(const nlohmann::json& doc, const nlohmann::json& params) {
    if (!doc.is_object()) bad("", "must be an object");
    TaskInstruction instr;
    instr.task_id = doc.value("task_id", std::string());
    if (!logic::is_atom_name(instr.task_id)) bad(instr.task_id, "task_id must be an ABL atom");
    instr.goal_text = substitute(doc.value("goal_text", std::string()), params, instr.task_id);
    Reader read(params, instr.task_id);
    if (!doc.contains("target")) bad(instr.task_id, "target is required");
    instr.target = read.callable(doc["target"], "target");
    for (const auto& j : doc.value("joins", nlohmann::json::array())) instr.joins.push_back(read.callable(j, "joins"));
    for (const auto& f : doc.value("filters", nlohmann::json::array())) {
        FilterDecl decl;
        decl.predicate = f.value("predicate", std::string());
        decl.op = f.value("op", std::string("="));
        if (!f.contains("subject") || !f.contains("value")) bad(instr.task_id, "filters need subject and value");
        decl.subject = read.term(f["subject"], "filters.subject");
        decl.value = read.term(f["value"], "filters.value");
        if (f.contains("var")) decl.var = read.term(f["var"], "filters.var");
        if (decl.op != "=" && !logic::is_comparison_operator(decl.op)) bad(instr.task_id, "unknown filter op " + decl.op);
        if (decl.predicate.empty() && decl.op == "=") bad(instr.task_id, "a filter without predicate needs a comparison op");
        if (!decl.predicate.empty() && decl.op != "=" && !decl.var) {
            bad(instr.task_id, "filter on " + decl.predicate + " with op " + decl.op + " needs var");
        }
        instr.filters.push_back(std::move(decl));
    }
    for (const auto& a : doc.value("actions", nlohmann::json::array())) {
        ActionBinding b;
        b.tool = a.value("tool", std::string());
        if (b.tool.empty()) bad(instr.task_id, "action without tool");
        if (a.contains("params")) b.params = read.term(a["params"], "actions.params");
        if (a.contains("fact")) b.fact = read.callable(a["fact"], "actions.fact");
        b.store = a.value("store", std::string());
        if (b.tool == "persist") {
            if (b.store.empty()) b.store = logic::indicator_of(b.fact.value_or(instr.target)).name;
            if (!logic::is_atom_name(b.store)) bad(instr.task_id, "store must be an ABL atom");
        } else if (!b.params) {
            bad(instr.task_id, "action " + b.tool + " needs params");
        }
        instr.actions.push_back(std::move(b));
    }
    return instr;
}

std::map<std::string, TaskInstruction> parse_instructions(const nlohmann::json& doc, const nlohmann::json& params) {
    const nlohmann::json& list = doc.is_object() ? doc.at("instructions") : doc;
    if (!list.is_array()) throw Error(ErrorCode::invalid_instruction, "instructions must be an array");
    std::map<std::string, TaskInstruction> out;
    for (const auto& item : list) {
        TaskInstruction instr = parse_instruction(item, params);
        std::string id = instr.task_id;
        if (!out.emplace(id, std::move(instr)).second) {
            throw Error(ErrorCode::invalid_instruction, "instruction " + id + " is defined twice");
        }
    }
    return out;
}

std::string to_string(const Provenance& p) {
    switch (p.origin) {
    case Origin::semantics: return "semantics";
    case Origin::instruction: return "instruction";
    case Origin::prior_task: return "prior_task(" + p.source + ")";
    case Origin::tool_grounding: return "tool_grounding(" + p.source + ")";
    }
    return "?";
}

const Clause* LogicProgram::target_rule() const {
    Indicator ind = logic::indicator_of(target);
    const auto& clauses = program.clauses();
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (program.partition_of(i) == Partition::task_rules && clauses[i].indicator() == ind) return &clauses[i];
    }
    return nullptr;
}

LogicProgram synthesize_program(const TaskInstruction& instr, const semantics::FactSet& facts,
                                const std::vector<PriorOutcome>& prior, const tools::ToolRegistry& registry) {
    Clause rule{instr.target, {}};
    for (const auto& j : instr.joins) rule.body.push_back(join_literal(j));
    for (const auto& f : instr.filters) {
        auto lits = filter_literals(f);
        rule.body.insert(rule.body.end(), lits.begin(), lits.end());
    }
    rule = canonical(std::move(rule));

    std::set<Indicator> known;
    for (const auto& c : facts.facts) known.insert(c.indicator());
    for (const auto& c : facts.foundational_rules) known.insert(c.indicator());
    for (const auto& p : prior) {
        for (const auto& c : p.facts) known.insert(c.indicator());
        known.insert(p.relations.begin(), p.relations.end());
    }
    for (const auto& lit : rule.body) {
        auto ind = called(lit);
        if (ind && !known.count(*ind) && !registry.producer_of(*ind)) {
            throw Error(ErrorCode::undefined_predicate, "instruction " + instr.task_id + ": " + ind->str() +
                                                            " has no facts, rules, prior outcomes or producing tool");
        }
    }

    std::vector<Clause> actions;
    for (const auto& a : instr.actions) {
        if (!registry.find(a.tool)) {
            throw Error(ErrorCode::unregistered_tool, "instruction " + instr.task_id + ": tool " + a.tool + " is not registered");
        }
        Term head = a.tool == "persist"
                        ? Term::compound("persist", {Term::atom(a.store), a.fact.value_or(instr.target)})
                        : Term::compound("invoke", {Term::atom(a.tool), *a.params});
        actions.push_back(canonical(Clause{head, {positive(instr.target)}}));
    }

    // Predicates reachable from the target rule, through foundational rules.
    std::set<Indicator> reachable;
    std::vector<Indicator> frontier;
    for (const auto& lit : rule.body) {
        if (auto ind = called(lit); ind && reachable.insert(*ind).second) frontier.push_back(*ind);
    }
    while (!frontier.empty()) {
        Indicator ind = frontier.back();
        frontier.pop_back();
        for (const auto& r : facts.foundational_rules) {
            if (r.indicator() != ind) continue;
            for (const auto& lit : r.body) {
                if (auto b = called(lit); b && reachable.insert(*b).second) frontier.push_back(*b);
            }
        }
    }

    std::vector<Clause> clauses;
    std::vector<Provenance> provenance;
    auto keep = [&](const Clause& c, Provenance p) {
        if (!reachable.count(c.indicator())) return;
        clauses.push_back(c);
        provenance.push_back(std::move(p));
    };
    for (const auto& c : facts.facts) keep(c, {Origin::semantics, ""});
    for (const auto& c : facts.foundational_rules) keep(c, {Origin::semantics, ""});
    for (const auto& p : prior) {
        for (const auto& c : p.facts) keep(c, {Origin::prior_task, p.task_id});
    }
    std::vector<logic::Segment> segments;
    if (!clauses.empty()) segments.push_back({Partition::facts_foundational, 0, clauses.size()});
    segments.push_back({Partition::task_rules, clauses.size(), clauses.size() + 1});
    clauses.push_back(rule);
    provenance.push_back({Origin::instruction, ""});
    if (!actions.empty()) {
        segments.push_back({Partition::actions, clauses.size(), clauses.size() + actions.size()});
        for (auto& a : actions) {
            clauses.push_back(std::move(a));
            provenance.push_back({Origin::instruction, ""});
        }
    }
    std::set<Indicator> present;
    for (const auto& c : clauses) present.insert(c.indicator());
    std::vector<Indicator> empty;
    for (const auto& p : prior) {
        for (const auto& r : p.relations) {
            if (reachable.count(r) && !present.count(r) && std::find(empty.begin(), empty.end(), r) == empty.end()) {
                empty.push_back(r);
            }
        }
    }
    return LogicProgram{instr.task_id, instr.target, logic::Program(std::move(clauses), std::move(segments)),
                        std::move(provenance), std::move(empty)};
}

LogicProgram with_groundings(const LogicProgram& lp, const std::string& tool, const std::vector<Clause>& facts) {
    if (facts.empty()) return lp;
    const auto& old = lp.program.clauses();
    std::size_t split = 0;
    while (split < old.size() && lp.program.partition_of(split) == Partition::facts_foundational) ++split;
    std::vector<Clause> clauses(old.begin(), old.begin() + split);
    std::vector<Provenance> provenance(lp.provenance.begin(), lp.provenance.begin() + split);
    for (const auto& f : facts) {
        clauses.push_back(f);
        provenance.push_back({Origin::tool_grounding, tool});
    }
    std::vector<logic::Segment> segments{{Partition::facts_foundational, 0, clauses.size()}};
    std::size_t shift = clauses.size() - split;
    for (const auto& seg : lp.program.segments()) {
        if (seg.tag != Partition::facts_foundational) segments.push_back({seg.tag, seg.begin + shift, seg.end + shift});
    }
    clauses.insert(clauses.end(), old.begin() + split, old.end());
    provenance.insert(provenance.end(), lp.provenance.begin() + split, lp.provenance.end());
    return LogicProgram{lp.task_id, lp.target, logic::Program(std::move(clauses), std::move(segments)),
                        std::move(provenance), lp.empty_relations};
}

std::string render_program(const LogicProgram& lp) {
    std::string out;
    const auto& clauses = lp.program.clauses();
    for (Partition part : {Partition::facts_foundational, Partition::task_rules, Partition::actions}) {
        out += "% SECTION: ";
        out += logic::section_name(part);
        out += '\n';
        std::optional<Provenance> last;
        for (std::size_t i = 0; i < clauses.size(); ++i) {
            if (lp.program.partition_of(i) != part) continue;
            Provenance p = i < lp.provenance.size() ? lp.provenance[i] : Provenance{};
            if (!last || !(*last == p)) {
                out += "% origin: " + to_string(p) + '\n';
                last = p;
            }
            out += logic::to_string(clauses[i]);
            out += '\n';
        }
        if (part == Partition::facts_foundational) {
            for (const auto& r : lp.empty_relations) out += "% empty: " + r.str() + '\n';
        }
    }
    return out;
}

ValidationReport validate_program(const LogicProgram& lp, const tools::ToolRegistry& registry) {
    ValidationReport report;
    const logic::Program& p = lp.program;
    const auto& clauses = p.clauses();

    std::set<Indicator> defined(lp.empty_relations.begin(), lp.empty_relations.end());
    for (const auto& c : clauses) defined.insert(c.indicator());

    bool has_actions = false;
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        const Clause& c = clauses[i];
        Partition part = p.partition_of(i);
        std::string where = location(p, i);
        for (const auto& lit : c.body) {
            auto ind = called(lit);
            if (ind && !defined.count(*ind) && !registry.producer_of(*ind)) {
                report.error(ErrorCode::undefined_predicate,
                             ind->str() + " is used but not defined by facts, rules or a grounding tool", where);
            }
        }
        if (c.body.empty() && !c.head.is_ground()) {
            if (part == Partition::facts_foundational) {
                report.error(ErrorCode::nonground_fact, "fact " + logic::to_string(c) + " is not ground", where);
            }
        } else if (auto v = logic::unsafe_negation_variable(c)) {
            report.error(ErrorCode::unsafe_negation,
                         "variable " + logic::to_string(*v) + " occurs only under negation", where);
        } else if (auto h = logic::unbound_head_variable(c)) {
            report.error(ErrorCode::unsafe_rule, "head variable " + logic::to_string(*h) + " is unbound", where);
        }
        if (part != Partition::actions) continue;
        has_actions = true;
        Indicator ind = c.indicator();
        if (ind == Indicator{"invoke", 2} || ind == Indicator{"persist", 2}) {
            const Term& first = c.head.args()[0];
            std::string tool = ind.name == "persist" ? "persist" : (first.is_atom() ? first.name() : "");
            if (ind.name == "invoke" && !first.is_atom()) {
                report.error(ErrorCode::bad_action_head, "invoke/2 needs an atom tool name", where);
            } else if (ind.name == "persist" && !first.is_atom()) {
                report.error(ErrorCode::bad_action_head, "persist/2 needs an atom store name", where);
            } else if (!registry.find(tool)) {
                report.error(ErrorCode::unregistered_tool, "tool " + tool + " is not registered", where);
            }
        } else {
            report.error(ErrorCode::bad_action_head, "action head must be invoke/2 or persist/2, got " + ind.str(), where);
        }
    }

    if (!has_actions) {
        report.warn(ErrorCode::no_actions, "program has no actions", std::string(logic::section_name(Partition::actions)));
        return report;
    }
    // Task rules not reachable from any action body.
    std::set<Indicator> reached;
    std::vector<Indicator> frontier;
    auto reach = [&](const Clause& c) {
        for (const auto& lit : c.body) {
            if (auto b = called(lit); b && reached.insert(*b).second) frontier.push_back(*b);
        }
    };
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (p.partition_of(i) == Partition::actions) reach(clauses[i]);
    }
    while (!frontier.empty()) {
        Indicator ind = frontier.back();
        frontier.pop_back();
        for (std::size_t i = 0; i < clauses.size(); ++i) {
            if (p.partition_of(i) == Partition::task_rules && clauses[i].indicator() == ind) reach(clauses[i]);
        }
    }
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (p.partition_of(i) == Partition::task_rules && !reached.count(clauses[i].indicator())) {
            report.warn(ErrorCode::unreachable_rule, clauses[i].indicator().str() + " is not used by any action",
                        location(p, i));
        }
    }
    return report;
}

ImpactClass classify_impact(const LogicProgram& lp, const tools::ToolRegistry& registry, const ValidationReport& report) {
    ImpactClass out;
    std::set<std::string> seen;
    const auto& clauses = lp.program.clauses();
    for (std::size_t i = 0; i < clauses.size(); ++i) {
        if (lp.program.partition_of(i) != Partition::actions) continue;
        const Term& head = clauses[i].head;
        if (head.is_compound() && head.arity() == 2 && head.args()[0].is_atom()) {
            std::string tool = head.name() == "persist" ? "persist" : head.args()[0].name();
            const auto* d = registry.find(tool);
            if (d && d->impact == tools::Impact::high && seen.insert(tool).second) {
                out.reasons.push_back("invokes high-impact tool " + tool);
            }
        }
    }
    for (const auto& w : report.warnings) {
        if (w.code != ErrorCode::no_actions) out.reasons.push_back("validation warning: " + to_string(w));
    }
    out.needs_approval = !out.reasons.empty();
    return out;
}

nlohmann::json to_json(const ImpactClass& c) {
    return {{"class", c.needs_approval ? "needs_human_approval" : "auto_approve"}, {"reasons", c.reasons}};
}

}  // namespace autobus::synthesis
