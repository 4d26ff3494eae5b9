#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace autobus {

// Stable error codes. The string forms appear in validation reports, the
// HTTP API and CLI output, so renaming one is a breaking change.
enum class ErrorCode {
    syntax_error,
    unsafe_negation,
    depth_limit_exceeded,
    nonground_negation,
    instantiation_error,
    type_error,
    arithmetic_error,
    duplicate_key,
    missing_column,
    type_coercion,
    kind_conflict,
    dangling_reference,
    undeclared_predicate,
    unsafe_rule,
    unknown_predicate,
    undefined_predicate,
    unregistered_tool,
    duplicate_tool,
    unknown_tool,
    nonground_params,
    transport_failure,
    signature_mismatch,
    no_producer,
    tool_failed,
    nonground_fact,
    bad_action_head,
    duplicate_task,
    dependency_cycle,
    invalid_config,
    city_missing,
    unknown_run,
    unknown_approval,
    already_decided,
    log_gap,
    unknown_event,
    io_error,
    invalid_input,
    bind_failure,
    unreachable_task,
    unreachable_rule,
    no_actions,
    high_impact_tool,
    invalid_instruction,
    postcondition_failed,
    timeout,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace autobus
