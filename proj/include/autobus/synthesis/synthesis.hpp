#pragma once

#include "autobus/logic/program.hpp"
#include "autobus/report.hpp"
#include "autobus/semantics/graph.hpp"
#include "autobus/tools/registry.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace autobus::synthesis {

// One attribute constraint. With a predicate it becomes either
// `predicate(subject, value)` (op "=") or `predicate(subject, var), var op value`;
// without one it is the bare comparison `subject op value`.
struct FilterDecl {
    std::string predicate;
    logic::Term subject = logic::Term::nil();
    std::optional<logic::Term> var;
    std::string op = "=";
    logic::Term value = logic::Term::nil();
};

// `persist(store, fact)` when tool is "persist" (fact defaults to the target
// head); otherwise `invoke(tool, params)`.
struct ActionBinding {
    std::string tool;
    std::optional<logic::Term> params;
    std::string store;
    std::optional<logic::Term> fact;
};

struct TaskInstruction {
    std::string task_id;
    std::string goal_text;
    logic::Term target = logic::Term::nil();
    std::vector<logic::Term> joins;
    std::vector<FilterDecl> filters;
    std::vector<ActionBinding> actions;
};

// Instruction JSON:
//   {"task_id", "goal_text"?, "target": "savable_churn(C)",
//    "joins"?: ["subscribe(C, S)"],
//    "filters"?: [{"predicate"?, "subject", "var"?, "op"?, "value"}],
//    "actions"?: [{"tool", "params"?, "store"?, "fact"?}]}
// Strings are ABL terms (goal_text is plain text); `$name` is replaced by the rendered value of
// params[name] before parsing. JSON numbers are taken as numbers.
//
// Throws Error{invalid_instruction} naming the field, or a SyntaxError.
TaskInstruction parse_instruction(const nlohmann::json& doc, const nlohmann::json& params = nlohmann::json::object());

// {"instructions": [...]} or a bare array; keyed by task id.
std::map<std::string, TaskInstruction> parse_instructions(const nlohmann::json& doc,
                                                          const nlohmann::json& params = nlohmann::json::object());

enum class Origin { semantics, prior_task, instruction, tool_grounding };

struct Provenance {
    Origin origin = Origin::instruction;
    // Task id for prior_task, tool name for tool_grounding.
    std::string source;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

std::string to_string(const Provenance& p);

struct PriorOutcome {
    std::string task_id;
    std::vector<logic::Clause> facts;
    // Predicates the task produces, including ones it produced no facts for.
    std::vector<logic::Indicator> relations;
};

struct LogicProgram {
    std::string task_id;
    logic::Term target = logic::Term::nil();
    logic::Program program;
    // Parallel to program.clauses().
    std::vector<Provenance> provenance;
    // Prior-task relations the program reads that hold no facts.
    std::vector<logic::Indicator> empty_relations;

    // The clause defining the target predicate, if present.
    const logic::Clause* target_rule() const;
};

// Facts partition: semantics facts and foundational rules whose predicates
// are reachable from the target rule body, then reachable prior outcomes.
// Rules partition: the target rule, joins then filters in declared order.
// Actions partition: one clause per action binding, bodied by the target.
//
// Throws Error{undefined_predicate} for a join or filter predicate with no
// facts, rules, prior outcomes or producing tool; Error{unregistered_tool} for
// an unknown action tool.
LogicProgram synthesize_program(const TaskInstruction& instr, const semantics::FactSet& facts,
                                const std::vector<PriorOutcome>& prior, const tools::ToolRegistry& registry);

// Appends tool-produced facts to the facts partition.
LogicProgram with_groundings(const LogicProgram& lp, const std::string& tool, const std::vector<logic::Clause>& facts);

// Three SECTION headers, each clause preceded by a `% origin:` comment
// whenever the origin changes. Empty relations are listed as `% empty:`
// comments at the end of the facts section.
std::string render_program(const LogicProgram& lp);

// Errors: undefined_predicate, unsafe_negation, unsafe_rule, bad_action_head,
// unregistered_tool, nonground_fact. Warnings: unreachable_rule, no_actions.
ValidationReport validate_program(const LogicProgram& lp, const tools::ToolRegistry& registry);

struct ImpactClass {
    bool needs_approval = false;
    std::vector<std::string> reasons;
};

// Approval is needed when an action invokes a high-impact tool or the report
// carries a warning other than no_actions.
ImpactClass classify_impact(const LogicProgram& lp, const tools::ToolRegistry& registry,
                            const ValidationReport& report = {});

nlohmann::json to_json(const ImpactClass& c);

// Turns a task instruction into a candidate program.
class AgentAdapter {
public:
    virtual ~AgentAdapter() = default;
    virtual std::string name() const = 0;
    virtual LogicProgram synthesize(const TaskInstruction& instr, const semantics::FactSet& facts,
                                    const std::vector<PriorOutcome>& prior,
                                    const tools::ToolRegistry& registry) const = 0;
};

// Deterministic compiler over structured instructions.
class TemplateAgent : public AgentAdapter {
public:
    std::string name() const override { return "template"; }
    LogicProgram synthesize(const TaskInstruction& instr, const semantics::FactSet& facts,
                            const std::vector<PriorOutcome>& prior,
                            const tools::ToolRegistry& registry) const override {
        return synthesize_program(instr, facts, prior, registry);
    }
};

}  // namespace autobus::synthesis
