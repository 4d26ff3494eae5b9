#pragma once

#include "autobus/logic/program.hpp"
#include "autobus/report.hpp"

#include "json.hpp"

#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace autobus::initiative {

struct RepeatSpec {
    logic::Term goal;
    std::size_t max_iterations = 1;
};

struct TaskSpec {
    std::string id;
    // Instruction id; defaults to the task id.
    std::string instruction;
    std::string description;
    std::vector<logic::Term> required_data;
    std::vector<logic::Term> preconditions;
    std::vector<logic::Term> postconditions;
    std::vector<std::string> allowed_tools;
    std::optional<RepeatSpec> repeat_until;
};

struct InitiativeSpec {
    std::string id;
    std::string name;
    std::vector<TaskSpec> tasks;
    std::vector<logic::Clause> evaluation_rules;
    std::vector<logic::Term> metrics_inputs;
    // Problems found while loading (e.g. unparseable conditions); reported by
    // validate_initiative.
    std::vector<Finding> load_errors;

    const TaskSpec* task(std::string_view id) const;
};

// initiative.json:
//   {"id", "name"?, "tasks": [{"id", "instruction"?, "description"?,
//      "requires"?: [term], "preconditions"?: [term], "postconditions"?: [term],
//      "allowed_tools"?: [name], "repeat_until"?: {"goal", "max_iterations"}}],
//    "evaluation_rules"?: "ABL text", "metrics_inputs"?: [term]}
// Condition and rule text that fails to parse is recorded in load_errors.
// Throws Error{invalid_config} when the document shape is wrong.
InitiativeSpec parse_initiative(const nlohmann::json& doc);
InitiativeSpec load_initiative(const std::string& path);

// What exists outside the initiative: predicates with facts or rules in the
// semantics layer, predicates produced by grounding tools, and tool names.
struct Environment {
    std::set<std::string> data_predicates;
    std::set<std::string> tool_predicates;
    std::set<std::string> tool_names;
};

// Errors: duplicate task ids, load errors, precondition predicates nothing
// produces, required data without facts or producers, unknown tools, unsafe
// evaluation rules, dependency cycles not broken by a repeat_until task.
// Warnings: tasks that can never become ready.
ValidationReport validate_initiative(const InitiativeSpec& spec, const Environment& env);

enum class TaskStatus { pending, ready, running, awaiting_approval, completed, failed, exhausted, cancelled };

std::string_view to_string(TaskStatus s);
std::optional<TaskStatus> task_status_from(std::string_view s);
bool is_terminal(TaskStatus s);

// An immutable view of run state. Every change produces a new value with a
// fresh snapshot id; the fact base is the semantics program plus the outcomes
// asserted so far.
class ExecutionState {
public:
    ExecutionState(std::string run_id, std::shared_ptr<const logic::Program> base, const InitiativeSpec& spec);

    const std::string& run_id() const noexcept { return run_id_; }
    std::uint64_t snapshot() const noexcept { return snapshot_; }
    // The reified State atom: `snap_<n>`.
    std::string snapshot_id() const;
    // Semantics program plus outcomes, tagged with snapshot_id().
    const logic::Program& program() const noexcept { return *program_; }
    const logic::Program& base() const noexcept { return *base_; }
    const std::vector<logic::Clause>& outcomes() const noexcept { return outcomes_; }
    const std::map<std::string, TaskStatus>& statuses() const noexcept { return statuses_; }
    TaskStatus status(const std::string& task) const;
    std::size_t iteration(const std::string& task) const;

    // New snapshot with facts appended (duplicates skipped). Throws
    // Error{nonground_fact}.
    ExecutionState with_outcomes(const std::vector<logic::Clause>& facts) const;
    ExecutionState with_status(const std::string& task, TaskStatus s) const;
    ExecutionState with_iteration(const std::string& task, std::size_t n) const;

private:
    void rebuild();

    std::string run_id_;
    std::uint64_t snapshot_ = 0;
    std::shared_ptr<const logic::Program> base_;
    std::vector<logic::Clause> outcomes_;
    std::shared_ptr<const logic::Program> program_;
    std::map<std::string, TaskStatus> statuses_;
    std::map<std::string, std::size_t> iterations_;
};

// Tasks that are pending or ready and whose every precondition P satisfies
// `holds(P, snapshot)`. Solver errors are rethrown with the task id prefixed.
std::set<std::string> ready_tasks(const InitiativeSpec& spec, const ExecutionState& state);

struct Completion {
    ExecutionState state;
    bool completed;
    // First postcondition that is not derivable, when !completed.
    std::optional<logic::Term> failed_condition;
};

// Asserts outcome facts into a new snapshot, then checks every postcondition
// against it. The task becomes completed or failed.
Completion complete_task(const TaskSpec& task, const ExecutionState& state, const std::vector<logic::Clause>& outcomes);

enum class RepeatDecision { stop, reactivate, exhausted };

std::string_view to_string(RepeatDecision d);

// `iteration` counts finished runs of the task, starting at 1.
RepeatDecision check_repeat(const TaskSpec& task, const ExecutionState& state, std::size_t iteration);

struct Evaluation {
    bool success = false;
    // Variable bindings from the first solution of each metrics input.
    std::map<std::string, logic::Term> bindings;
};

// Solves `success(<id>)` over the snapshot, the evaluation rules and the
// injected metric facts.
Evaluation evaluate_initiative(const InitiativeSpec& spec, const ExecutionState& state,
                               const std::vector<logic::Clause>& metric_facts = {});

nlohmann::json to_json(const Evaluation& e);

}  // namespace autobus::initiative
