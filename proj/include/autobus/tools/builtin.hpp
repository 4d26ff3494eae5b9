#pragma once

#include "autobus/tools/registry.hpp"

#include <chrono>
#include <filesystem>

namespace autobus::tools {

// params `persist(Store, Fact)`: appends the ground Fact to the run store.
ToolDescriptor persist_descriptor();
ToolHandler persist_handler();

// params `F(Campaign, Recipient)` or `F(Campaign, [Recipient, ...])`: records
// one send. The receipt lists the recipient ids.
ToolHandler recorder_handler();

// Grounding from a committed table: params is the input value, the fact is
// `predicate(Input, table[Input])`. Unknown inputs fail the call.
ToolHandler fixture_handler(std::string predicate, std::map<std::string, logic::Term> table);

// Reads a fixture file: a JSON object mapping input lexical forms to numbers
// or strings.
std::map<std::string, logic::Term> load_fixture(const std::filesystem::path& path);

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_delay{50};
};

// JSON over HTTP POST. Request {tool, params, idempotency_key}; response
// {status: "ok"|"failed", facts: [ABL clause text], receipt, error}.
// Connection errors and 502/503/504 are retried with exponential backoff;
// when attempts run out the call throws Error{transport_failure}.
ToolHandler http_handler(std::string tool, std::string endpoint, RetryPolicy policy = {});

// Catalog document:
//   {"tools": [{"name", "kind": "grounding"|"action", "signature": "p/2",
//               "inputs"?, "impact"?: "normal"|"high", "transport"?,
//               "endpoint"?, "idempotent"?, "description"?,
//               "handler"?: "recorder"|"fixture", "fixture"?: path}]}
// The persist tool is always registered. Fixture paths are relative to
// base_dir. Throws Error{invalid_config}.
ToolRegistry load_catalog(const nlohmann::json& doc, const std::filesystem::path& base_dir,
                          RetryPolicy policy = {});
ToolRegistry load_catalog_file(const std::filesystem::path& path, RetryPolicy policy = {});

}  // namespace autobus::tools
