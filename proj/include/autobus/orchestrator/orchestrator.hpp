#pragma once

#include "autobus/initiative/model.hpp"
#include "autobus/semantics/graph.hpp"
#include "autobus/synthesis/synthesis.hpp"
#include "autobus/tools/registry.hpp"

#include "json.hpp"

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace autobus::orchestrator {

enum class EventKind {
    run_started,
    task_ready,
    program_synthesized,
    approval_requested,
    approval_decided,
    grounding_fetched,
    task_completed,
    task_failed,
    action_invoked,
    initiative_evaluated,
    run_finished,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> event_kind_from(std::string_view s);

struct Event {
    std::uint64_t seq = 0;
    std::string timestamp;
    EventKind kind = EventKind::run_started;
    nlohmann::json payload;
};

nlohmann::json to_json(const Event& e);
// Throws Error{unknown_event} for an unknown kind, Error{invalid_input} for a
// malformed object.
Event event_from_json(const nlohmann::json& j);
// One JSON event per line. Throws Error{io_error} or the parse errors above
// (with the line number).
std::vector<Event> read_events(const std::filesystem::path& path);

enum class Decision { pending, approved, rejected };

std::string_view to_string(Decision d);
std::optional<Decision> decision_from(std::string_view s);

struct ApprovalRequest {
    std::string id;
    std::string task_id;
    std::string program_text;
    std::vector<std::string> reasons;
    Decision decision = Decision::pending;
    std::string decider;
};

nlohmann::json to_json(const ApprovalRequest& a);

// Everything a run reads. Shared, immutable once built.
struct Bundle {
    initiative::InitiativeSpec spec;
    std::map<std::string, synthesis::TaskInstruction> instructions;
    semantics::FactSet facts;
    std::shared_ptr<const tools::ToolRegistry> registry;
    std::shared_ptr<const synthesis::AgentAdapter> agent;
};

struct BundlePaths {
    std::filesystem::path schema;
    std::filesystem::path tables;
    std::filesystem::path initiative;
    std::filesystem::path instructions;
    std::filesystem::path params;
    std::filesystem::path tools;
    // Where tool fixture files are looked up; the tools file's directory when
    // empty.
    std::filesystem::path tool_fixtures;

    // schema.json, initiative.json, instructions.json, params.json and
    // tools.json in dir, with the tables alongside.
    static BundlePaths in(const std::filesystem::path& dir);
};

// Loads and cross-checks a bundle with the template agent. Throws Error with
// the failing file named (io_error, invalid_config, invalid_instruction, ...).
std::shared_ptr<const Bundle> load_bundle(const BundlePaths& paths);

// The initiative environment seen from a bundle: predicates with facts or
// rules, grounding-tool predicates, tool names.
initiative::Environment environment(const Bundle& b);

struct RunConfig {
    std::string run_id;
    bool auto_approve = false;
    // Run directory; nothing is written when empty.
    std::filesystem::path run_dir;
    // Injected metric facts such as `customer_satisfaction(i1, 4.2)`.
    std::vector<logic::Clause> metric_facts;
    // Launch the tasks of a round one at a time, in reverse id order. Results
    // are still applied in id order.
    bool serial_reversed = false;
};

// Final state of a run as JSON: run id, snapshot, statuses, iterations and
// asserted outcomes. replay() produces the same object from the event log.
nlohmann::json state_json(const initiative::ExecutionState& s);

enum class RunPhase { running, awaiting_approval, finished };

std::string_view to_string(RunPhase p);

struct RunResult {
    bool timed_out = false;
    initiative::Evaluation evaluation;
    std::map<std::string, initiative::TaskStatus> statuses;
    std::vector<tools::Receipt> receipts;
    // Persist store -> facts.
    std::map<std::string, std::vector<logic::Clause>> persisted;

    bool all_completed() const;
};

// One initiative run. The orchestration loop runs on its own thread and is
// the only writer of run state; readers get copies.
class Run {
public:
    Run(std::shared_ptr<const Bundle> bundle, RunConfig cfg);
    ~Run();
    Run(const Run&) = delete;
    Run& operator=(const Run&) = delete;

    const std::string& id() const noexcept { return cfg_.run_id; }
    const Bundle& bundle() const noexcept { return *bundle_; }
    const RunConfig& config() const noexcept { return cfg_; }

    void start();
    void wait();
    bool wait_for(std::chrono::milliseconds timeout);
    // Cancels tasks still awaiting approval and lets the run finish.
    void abort(const std::string& reason);

    RunPhase phase() const;
    std::vector<Event> events(std::uint64_t since = 0) const;
    // Blocks until an event with seq > since exists or the run is finished.
    bool wait_events(std::uint64_t since, std::chrono::milliseconds timeout) const;
    std::vector<ApprovalRequest> approvals() const;
    std::map<std::string, initiative::TaskStatus> statuses() const;
    std::optional<std::string> program(const std::string& task) const;
    nlohmann::json state() const;
    // Valid once finished.
    RunResult result() const;

    // Throws Error{unknown_approval}, Error{already_decided}.
    ApprovalRequest submit_approval(const std::string& approval_id, Decision decision, const std::string& decider);

private:
    struct Message;
    struct Prepared;
    struct Executed;

    void loop();
    void emit(EventKind kind, nlohmann::json payload);
    void publish(const initiative::ExecutionState& s);
    void post(std::shared_ptr<Message> m);
    std::shared_ptr<Message> next_message();
    Prepared prepare(const std::string& task, const std::vector<synthesis::PriorOutcome>& prior) const;
    Executed execute(const std::string& task, synthesis::LogicProgram lp) const;
    void write_file(const std::filesystem::path& rel, const std::string& text) const;

    std::shared_ptr<const Bundle> bundle_;
    RunConfig cfg_;
    std::unique_ptr<tools::RunStore> store_;

    mutable std::mutex mu_;
    mutable std::condition_variable changed_;
    std::vector<Event> events_;
    std::vector<ApprovalRequest> approvals_;
    std::map<std::string, std::string> programs_;
    std::optional<initiative::ExecutionState> state_;
    RunPhase phase_ = RunPhase::running;
    bool started_ = false;
    RunResult result_;

    std::unique_ptr<std::ofstream> log_;

    std::mutex inbox_mu_;
    std::condition_variable inbox_cv_;
    std::deque<std::shared_ptr<Message>> inbox_;

    std::thread thread_;
};

// Runs to completion on the calling thread's behalf. Without auto_approve a
// gated task waits for an approval that only another thread can submit.
RunResult run_initiative(std::shared_ptr<const Bundle> bundle, RunConfig cfg,
                         std::vector<Event>* events = nullptr);

// Rebuilds the final state from an event log.
// Throws Error{log_gap} naming the missing seq, Error{unknown_event}.
nlohmann::json replay(const std::vector<Event>& events);

}  // namespace autobus::orchestrator
