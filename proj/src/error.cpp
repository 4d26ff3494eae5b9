#include "autobus/error.hpp"

namespace autobus {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::syntax_error: return "syntax_error";
    case ErrorCode::unsafe_negation: return "unsafe_negation";
    case ErrorCode::depth_limit_exceeded: return "depth_limit_exceeded";
    case ErrorCode::nonground_negation: return "nonground_negation";
    case ErrorCode::instantiation_error: return "instantiation_error";
    case ErrorCode::type_error: return "type_error";
    case ErrorCode::arithmetic_error: return "arithmetic_error";
    case ErrorCode::duplicate_key: return "duplicate_key";
    case ErrorCode::missing_column: return "missing_column";
    case ErrorCode::type_coercion: return "type_coercion";
    case ErrorCode::kind_conflict: return "kind_conflict";
    case ErrorCode::dangling_reference: return "dangling_reference";
    case ErrorCode::undeclared_predicate: return "undeclared_predicate";
    case ErrorCode::unsafe_rule: return "unsafe_rule";
    case ErrorCode::unknown_predicate: return "unknown_predicate";
    case ErrorCode::undefined_predicate: return "undefined_predicate";
    case ErrorCode::unregistered_tool: return "unregistered_tool";
    case ErrorCode::duplicate_tool: return "duplicate_tool";
    case ErrorCode::unknown_tool: return "unknown_tool";
    case ErrorCode::nonground_params: return "nonground_params";
    case ErrorCode::transport_failure: return "transport_failure";
    case ErrorCode::signature_mismatch: return "signature_mismatch";
    case ErrorCode::no_producer: return "no_producer";
    case ErrorCode::tool_failed: return "tool_failed";
    case ErrorCode::nonground_fact: return "nonground_fact";
    case ErrorCode::bad_action_head: return "bad_action_head";
    case ErrorCode::duplicate_task: return "duplicate_task";
    case ErrorCode::dependency_cycle: return "dependency_cycle";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::city_missing: return "city_missing";
    case ErrorCode::unknown_run: return "unknown_run";
    case ErrorCode::unknown_approval: return "unknown_approval";
    case ErrorCode::already_decided: return "already_decided";
    case ErrorCode::log_gap: return "log_gap";
    case ErrorCode::unknown_event: return "unknown_event";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::invalid_input: return "invalid_input";
    case ErrorCode::bind_failure: return "bind_failure";
    case ErrorCode::unreachable_task: return "unreachable_task";
    case ErrorCode::unreachable_rule: return "unreachable_rule";
    case ErrorCode::no_actions: return "no_actions";
    case ErrorCode::high_impact_tool: return "high_impact_tool";
    case ErrorCode::invalid_instruction: return "invalid_instruction";
    case ErrorCode::postcondition_failed: return "postcondition_failed";
    case ErrorCode::timeout: return "timeout";
    }
    return "unknown";
}

}  // namespace autobus
