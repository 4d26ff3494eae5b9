#pragma once

#include "autobus/casestudy/dataset.hpp"
#include "autobus/orchestrator/orchestrator.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace autobus::casestudy {

struct StudyConfig {
    // schema.json, initiative.json, instructions.json, tools.json, params.json.
    std::filesystem::path bundle_dir;
    // consumer.csv, subscription.csv, product.csv, median_income.json;
    // bundle_dir when empty.
    std::filesystem::path data_dir;
    std::filesystem::path run_dir;
    std::vector<logic::Clause> metric_facts;
    bool serial_reversed = false;
};

struct StudyReport {
    bool exact_match = false;
    std::set<std::string> oracle;
    // Persisted target/1 facts.
    std::set<std::string> engine;
    // Recipients of marketing receipts.
    std::set<std::string> recipients;
    // Smallest id on one side only.
    std::optional<std::string> first_difference;
    // Task -> event kind -> count.
    std::map<std::string, std::map<std::string, std::size_t>> task_events;
    std::map<std::string, std::string> statuses;
    std::size_t grounding_calls = 0;
    std::size_t grounding_facts = 0;
    bool success = false;
    std::vector<orchestrator::Event> events;

    // Everything except the raw events.
    nlohmann::json to_json() const;
};

// Loads the bundle, runs the initiative with auto-approval and compares the
// engine's targets and marketing recipients with oracle_target_set.
StudyReport run_case_study(const StudyConfig& cfg);

}  // namespace autobus::casestudy
