#include "autobus/initiative/model.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"
#include "autobus/logic/unify.hpp"

#include <fstream>
#include <functional>

namespace autobus::initiative {

using logic::Clause;
using logic::Term;

const TaskSpec* InitiativeSpec::task(std::string_view id) const {
    for (const auto& t : tasks) {
        if (t.id == id) return &t;
    }
    return nullptr;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_config, "initiative: " + what); }

std::vector<Term> parse_terms(const nlohmann::json& arr, const std::string& where, std::vector<Finding>& errors) {
    std::vector<Term> out;
    if (arr.is_null()) return out;
    if (!arr.is_array()) bad(where + " must be an array of ABL terms");
    for (const auto& item : arr) {
        if (!item.is_string()) bad(where + " must contain strings");
        try {
            out.push_back(logic::parse_goal(item.get<std::string>()));
        } catch (const Error& e) {
            errors.push_back(Finding{e.code(), "cannot parse \"" + item.get<std::string>() + "\": " + e.what(), where});
        }
    }
    return out;
}

std::string indicator_key(const Term& t) { return logic::indicator_of(t).str(); }

Term rescoped(const Term& t, std::uint32_t scope) {
    switch (t.kind()) {
    case logic::TermKind::variable: return Term::var(t.name(), scope);
    case logic::TermKind::compound: {
        std::vector<Term> args;
        for (const auto& a : t.args()) args.push_back(rescoped(a, scope));
        return Term::compound(t.name(), std::move(args));
    }
    case logic::TermKind::list: {
        std::vector<Term> items;
        for (const auto& a : t.args()) items.push_back(rescoped(a, scope));
        return Term::list(std::move(items), rescoped(t.tail(), scope));
    }
    default: return t;
    }
}

// Whether a postcondition can satisfy a precondition (variables kept apart).
bool may_satisfy(const Term& post, const Term& pre) {
    return logic::unify(rescoped(post, 1), rescoped(pre, 2)).has_value();
}

Term holds(const Term& p, const std::string& snapshot) { return Term::compound("holds", {p, Term::atom(snapshot)}); }

}  // namespace

InitiativeSpec parse_initiative(const nlohmann::json& doc) {
    if (!doc.is_object()) bad("document must be an object");
    InitiativeSpec spec;
    spec.id = doc.value("id", std::string());
    if (!logic::is_atom_name(spec.id)) bad("id must be an ABL atom, got \"" + spec.id + "\"");
    spec.name = doc.value("name", spec.id);
    auto tasks = doc.value("tasks", nlohmann::json::array());
    if (!tasks.is_array()) bad("tasks must be an array");
    for (const auto& t : tasks) {
        if (!t.is_object()) bad("each task must be an object");
        TaskSpec task;
        task.id = t.value("id", std::string());
        if (!logic::is_atom_name(task.id)) bad("task id must be an ABL atom, got \"" + task.id + "\"");
        task.instruction = t.value("instruction", task.id);
        task.description = t.value("description", std::string());
        task.required_data = parse_terms(t.value("requires", nlohmann::json()), task.id + " requires", spec.load_errors);
        task.preconditions = parse_terms(t.value("preconditions", nlohmann::json()), task.id + " preconditions", spec.load_errors);
        task.postconditions = parse_terms(t.value("postconditions", nlohmann::json()), task.id + " postconditions", spec.load_errors);
        for (const auto& name : t.value("allowed_tools", nlohmann::json::array())) task.allowed_tools.push_back(name.get<std::string>());
        if (t.contains("repeat_until")) {
            const auto& r = t["repeat_until"];
            std::vector<Term> goal = parse_terms(nlohmann::json::array({r.value("goal", std::string())}),
                                                 task.id + " repeat_until", spec.load_errors);
            std::int64_t max = r.value("max_iterations", std::int64_t{0});
            if (max < 1) bad(task.id + ": repeat_until.max_iterations must be a positive integer");
            if (!goal.empty()) task.repeat_until = RepeatSpec{goal[0], static_cast<std::size_t>(max)};
        }
        spec.tasks.push_back(std::move(task));
    }
    if (doc.contains("evaluation_rules")) {
        try {
            spec.evaluation_rules = logic::parse_program(doc["evaluation_rules"].get<std::string>()).clauses();
        } catch (const Error& e) {
            spec.load_errors.push_back(Finding{e.code(), e.what(), "evaluation_rules"});
        }
    }
    spec.metrics_inputs = parse_terms(doc.value("metrics_inputs", nlohmann::json()), "metrics_inputs", spec.load_errors);
    return spec;
}

InitiativeSpec load_initiative(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path);
    try {
        return parse_initiative(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path + ": " + e.what());
    }
}

ValidationReport validate_initiative(const InitiativeSpec& spec, const Environment& env) {
    ValidationReport report;
    for (const auto& f : spec.load_errors) report.errors.push_back(f);

    std::set<std::string> ids;
    for (const auto& t : spec.tasks) {
        if (!ids.insert(t.id).second) report.error(ErrorCode::duplicate_task, "task id " + t.id + " is used twice", t.id);
    }

    // Predicates available without running any task.
    std::set<std::string> base = env.data_predicates;
    base.insert(env.tool_predicates.begin(), env.tool_predicates.end());
    for (const auto& r : spec.evaluation_rules) base.insert(r.indicator().str());
    std::map<std::string, std::vector<std::size_t>> produced_by;
    for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
        for (const auto& q : spec.tasks[i].postconditions) produced_by[indicator_key(q)].push_back(i);
    }

    for (const auto& t : spec.tasks) {
        for (const auto& p : t.preconditions) {
            std::string key = indicator_key(p);
            if (!base.count(key) && !produced_by.count(key) && !logic::is_builtin(logic::indicator_of(p))) {
                report.error(ErrorCode::undefined_predicate,
                             "precondition " + logic::to_string(p) + " uses " + key +
                                 ", which no data, tool or task postcondition provides",
                             t.id);
            }
        }
        for (const auto& d : t.required_data) {
            std::string key = indicator_key(d);
            if (!env.data_predicates.count(key) && !env.tool_predicates.count(key)) {
                report.error(ErrorCode::undefined_predicate,
                             "required data " + key + " has no facts and no producing tool", t.id);
            }
        }
        for (const auto& tool : t.allowed_tools) {
            if (!env.tool_names.count(tool)) report.error(ErrorCode::unregistered_tool, "tool " + tool + " is not registered", t.id);
        }
    }
    for (const auto& r : spec.evaluation_rules) {
        if (auto v = logic::unbound_head_variable(r)) {
            report.error(ErrorCode::unsafe_rule,
                         "head variable " + logic::to_string(*v) + " is unbound in " + logic::to_string(r),
                         "evaluation_rules");
        }
    }

    // Task dependency edges: consumer -> producer of a precondition.
    std::vector<std::set<std::size_t>> deps(spec.tasks.size());
    for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
        for (const auto& p : spec.tasks[i].preconditions) {
            if (base.count(indicator_key(p))) continue;
            for (std::size_t j = 0; j < spec.tasks.size(); ++j) {
                for (const auto& q : spec.tasks[j].postconditions) {
                    if (may_satisfy(q, p)) deps[i].insert(j);
                }
            }
        }
    }
    std::vector<int> color(spec.tasks.size(), 0);
    std::vector<std::size_t> path;
    std::function<void(std::size_t)> visit = [&](std::size_t i) {
        color[i] = 1;
        path.push_back(i);
        for (std::size_t j : deps[i]) {
            if (color[j] == 1) {
                auto start = std::find(path.begin(), path.end(), j);
                bool guarded = false;
                std::string cycle;
                for (auto it = start; it != path.end(); ++it) {
                    guarded = guarded || spec.tasks[*it].repeat_until.has_value();
                    cycle += spec.tasks[*it].id + " -> ";
                }
                if (!guarded) {
                    report.error(ErrorCode::dependency_cycle, "precondition cycle " + cycle + spec.tasks[j].id,
                                 spec.tasks[j].id);
                }
            } else if (color[j] == 0) {
                visit(j);
            }
        }
        path.pop_back();
        color[i] = 2;
    };
    for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
        if (color[i] == 0) visit(i);
    }

    // Reachability: a task can become ready once all its precondition
    // conditions can be met; its postconditions then become available.
    std::vector<Term> available;
    std::vector<bool> reachable(spec.tasks.size(), false);
    auto satisfiable = [&](const Term& p) {
        if (base.count(indicator_key(p)) || logic::is_builtin(logic::indicator_of(p))) return true;
        return std::any_of(available.begin(), available.end(), [&](const Term& q) { return may_satisfy(q, p); });
    };
    for (bool changed = true; changed;) {
        changed = false;
        for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
            if (reachable[i]) continue;
            const auto& pre = spec.tasks[i].preconditions;
            if (!std::all_of(pre.begin(), pre.end(), satisfiable)) continue;
            reachable[i] = true;
            changed = true;
            const auto& post = spec.tasks[i].postconditions;
            available.insert(available.end(), post.begin(), post.end());
        }
    }
    for (std::size_t i = 0; i < spec.tasks.size(); ++i) {
        if (!reachable[i]) {
            report.warn(ErrorCode::unreachable_task, "task " + spec.tasks[i].id + " can never become ready",
                        spec.tasks[i].id);
        }
    }
    return report;
}

std::string_view to_string(TaskStatus s) {
    switch (s) {
    case TaskStatus::pending: return "pending";
    case TaskStatus::ready: return "ready";
    case TaskStatus::running: return "running";
    case TaskStatus::awaiting_approval: return "awaiting_approval";
    case TaskStatus::completed: return "completed";
    case TaskStatus::failed: return "failed";
    case TaskStatus::exhausted: return "exhausted";
    case TaskStatus::cancelled: return "cancelled";
    }
    return "?";
}

std::optional<TaskStatus> task_status_from(std::string_view s) {
    for (auto st : {TaskStatus::pending, TaskStatus::ready, TaskStatus::running, TaskStatus::awaiting_approval,
                    TaskStatus::completed, TaskStatus::failed, TaskStatus::exhausted, TaskStatus::cancelled}) {
        if (to_string(st) == s) return st;
    }
    return std::nullopt;
}

bool is_terminal(TaskStatus s) {
    return s == TaskStatus::completed || s == TaskStatus::failed || s == TaskStatus::exhausted ||
           s == TaskStatus::cancelled;
}

ExecutionState::ExecutionState(std::string run_id, std::shared_ptr<const logic::Program> base, const InitiativeSpec& spec)
    : run_id_(std::move(run_id)), base_(std::move(base)) {
    if (!base_) base_ = std::make_shared<const logic::Program>();
    for (const auto& t : spec.tasks) {
        statuses_.emplace(t.id, TaskStatus::pending);
        iterations_.emplace(t.id, 0);
    }
    rebuild();
}

std::string ExecutionState::snapshot_id() const { return "snap_" + std::to_string(snapshot_); }

TaskStatus ExecutionState::status(const std::string& task) const {
    auto it = statuses_.find(task);
    if (it == statuses_.end()) throw Error(ErrorCode::invalid_input, "unknown task " + task);
    return it->second;
}

std::size_t ExecutionState::iteration(const std::string& task) const {
    auto it = iterations_.find(task);
    return it == iterations_.end() ? 0 : it->second;
}

void ExecutionState::rebuild() {
    logic::Program outcomes = logic::Program::of(outcomes_, logic::Partition::facts_foundational);
    program_ = std::make_shared<const logic::Program>(base_->concat(outcomes).with_state(snapshot_id()));
}

ExecutionState ExecutionState::with_outcomes(const std::vector<Clause>& facts) const {
    ExecutionState next = *this;
    std::set<std::string> seen;
    for (const auto& c : outcomes_) seen.insert(logic::to_string(c));
    for (const auto& f : facts) {
        if (!f.is_ground_fact()) throw Error(ErrorCode::nonground_fact, "outcome is not a ground fact: " + logic::to_string(f));
        if (seen.insert(logic::to_string(f)).second) next.outcomes_.push_back(f);
    }
    ++next.snapshot_;
    next.rebuild();
    return next;
}

ExecutionState ExecutionState::with_status(const std::string& task, TaskStatus s) const {
    ExecutionState next = *this;
    next.statuses_[task] = s;
    return next;
}

ExecutionState ExecutionState::with_iteration(const std::string& task, std::size_t n) const {
    ExecutionState next = *this;
    next.iterations_[task] = n;
    return next;
}

std::set<std::string> ready_tasks(const InitiativeSpec& spec, const ExecutionState& state) {
    std::set<std::string> out;
    std::string snap = state.snapshot_id();
    for (const auto& t : spec.tasks) {
        TaskStatus s = state.status(t.id);
        if (s != TaskStatus::pending && s != TaskStatus::ready) continue;
        try {
            bool ok = std::all_of(t.preconditions.begin(), t.preconditions.end(),
                                  [&](const Term& p) { return logic::derivable(holds(p, snap), state.program()); });
            if (ok) out.insert(t.id);
        } catch (const Error& e) {
            throw Error(e.code(), "task " + t.id + ": " + e.what());
        }
    }
    return out;
}

Completion complete_task(const TaskSpec& task, const ExecutionState& state, const std::vector<Clause>& outcomes) {
    ExecutionState next = state.with_outcomes(outcomes);
    std::string snap = next.snapshot_id();
    for (const auto& q : task.postconditions) {
        if (!logic::derivable(holds(q, snap), next.program())) {
            return Completion{next.with_status(task.id, TaskStatus::failed), false, q};
        }
    }
    return Completion{next.with_status(task.id, TaskStatus::completed), true, std::nullopt};
}

std::string_view to_string(RepeatDecision d) {
    switch (d) {
    case RepeatDecision::stop: return "stop";
    case RepeatDecision::reactivate: return "reactivate";
    case RepeatDecision::exhausted: return "exhausted";
    }
    return "?";
}

RepeatDecision check_repeat(const TaskSpec& task, const ExecutionState& state, std::size_t iteration) {
    if (!task.repeat_until) return RepeatDecision::stop;
    if (logic::derivable(holds(task.repeat_until->goal, state.snapshot_id()), state.program())) {
        return RepeatDecision::stop;
    }
    return iteration < task.repeat_until->max_iterations ? RepeatDecision::reactivate : RepeatDecision::exhausted;
}

Evaluation evaluate_initiative(const InitiativeSpec& spec, const ExecutionState& state,
                               const std::vector<Clause>& metric_facts) {
    std::vector<Clause> extra = spec.evaluation_rules;
    extra.insert(extra.end(), metric_facts.begin(), metric_facts.end());
    logic::Program program = state.program().concat(logic::Program::of(std::move(extra)));
    Evaluation out;
    out.success = logic::derivable(Term::compound("success", {Term::atom(spec.id)}), program);
    for (const auto& m : spec.metrics_inputs) {
        auto s = logic::solve_first(m, program);
        if (!s) continue;
        for (const auto& v : logic::variables_of(m)) {
            if (logic::is_anonymous(v)) continue;
            if (auto value = s->get(v.name())) out.bindings.emplace(v.name(), *value);
        }
    }
    return out;
}

nlohmann::json to_json(const Evaluation& e) {
    nlohmann::json b = nlohmann::json::object();
    for (const auto& [k, v] : e.bindings) b[k] = logic::to_string(v);
    return {{"result", e.success ? "success" : "not_success"}, {"bindings", b}};
}

}  // namespace autobus::initiative
