#pragma once

#include "autobus/logic/program.hpp"

#include "json.hpp"

#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace autobus::tools {

enum class ToolKind { grounding, action };
enum class Impact { normal, high };
enum class Transport { in_process, http };

struct ToolDescriptor {
    std::string name;
    ToolKind kind = ToolKind::action;
    // Grounding tools: the predicate they produce. Action tools: the shape
    // their params must have.
    logic::Indicator signature;
    // Grounding tools: how many leading arguments of the signature are inputs.
    std::size_t inputs = 0;
    Impact impact = Impact::normal;
    Transport transport = Transport::in_process;
    std::string endpoint;
    bool idempotent = true;
    std::string description;
};

struct ToolInvocation {
    std::string tool;
    logic::Term params;
    std::string idempotency_key;
};

// Hex SHA-256 of (run, task, tool, rendered params).
std::string idempotency_key(std::string_view run_id, std::string_view task_id, std::string_view tool,
                            const logic::Term& params);

struct ToolResult {
    enum class Status { ok, failed };

    Status status = Status::ok;
    std::vector<logic::Clause> facts_out;
    nlohmann::json receipt;
    std::string error;

    bool ok() const noexcept { return status == Status::ok; }
};

struct Receipt {
    std::string tool;
    std::string idempotency_key;
    std::string params;
    std::string task_id;
    nlohmann::json body;
};

// Per-run sink for persisted facts, action receipts and the idempotency cache.
// All members are safe to call from concurrent invocations.
class RunStore {
public:
    void append_fact(const std::string& store, const logic::Clause& fact);
    // Store name -> facts, each list in append order without duplicates.
    std::map<std::string, std::vector<logic::Clause>> facts() const;
    std::vector<logic::Clause> facts(const std::string& store) const;

    void add_receipt(Receipt r);
    std::vector<Receipt> receipts() const;
    // Number of times the tool's side effect actually ran.
    std::size_t effect_count(const std::string& tool) const;

    // Single-flight idempotency cache. acquire() returns the cached result for
    // a finished key; otherwise it waits while another caller holds the key,
    // then claims it and returns nullopt. The claimant must call release(),
    // passing the result to cache or nullopt to let the next caller retry.
    std::optional<ToolResult> acquire(const std::string& key);
    void release(const std::string& key, const std::optional<ToolResult>& result);

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<logic::Clause>> facts_;
    std::map<std::string, std::vector<std::string>> fact_keys_;
    std::vector<Receipt> receipts_;
    std::map<std::string, ToolResult> cache_;
    std::set<std::string> in_flight_;
    std::condition_variable released_;
};

struct ToolContext {
    std::string run_id;
    std::string task_id;
    std::string idempotency_key;
    RunStore* store = nullptr;
};

using ToolHandler = std::function<ToolResult(const logic::Term& params, ToolContext& ctx)>;

// Name -> (descriptor, handler). Populated at startup and read-only afterwards.
class ToolRegistry {
public:
    // Throws Error{duplicate_tool}, or Error{invalid_config} for a descriptor
    // that breaks its kind's contract.
    void register_tool(ToolDescriptor d, ToolHandler handler);

    const ToolDescriptor* find(std::string_view name) const;
    // Descriptors sorted by name.
    std::vector<ToolDescriptor> catalog() const;
    // One line per tool, sorted by name; input for synthesis.
    std::string catalog_summary() const;
    // The grounding tool producing `ind`, if any.
    const ToolDescriptor* producer_of(const logic::Indicator& ind) const;

    // Runs one invocation. Idempotent tools return the cached result for a
    // repeated key without running the handler again. Successful action
    // results are recorded as receipts in ctx.store.
    //
    // Throws Error{unknown_tool}, Error{nonground_params},
    // Error{transport_failure} after retries, Error{signature_mismatch}.
    ToolResult invoke(const ToolInvocation& inv, ToolContext& ctx) const;

private:
    struct Entry {
        ToolDescriptor descriptor;
        ToolHandler handler;
    };
    std::map<std::string, Entry, std::less<>> tools_;
};

struct Grounding {
    std::vector<logic::Clause> facts;
    std::size_t calls = 0;
};

// Invokes the producer of `predicate` once per distinct input tuple (each
// tuple a list of the input arguments) and merges the returned facts.
//
// Throws Error{no_producer}, Error{tool_failed}, or propagates invoke errors.
Grounding ground_predicate(const ToolRegistry& registry, const logic::Indicator& predicate,
                           const std::vector<std::vector<logic::Term>>& bindings_needed, ToolContext& ctx);

// Params term for a grounding call: the single input, or a list of inputs.
logic::Term grounding_params(const std::vector<logic::Term>& inputs);

std::string_view to_string(ToolKind k);
std::string_view to_string(Impact i);
std::string_view to_string(Transport t);
nlohmann::json to_json(const ToolDescriptor& d);

}  // namespace autobus::tools
