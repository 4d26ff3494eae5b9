#include "autobus/casestudy/study.hpp"

#include "autobus/error.hpp"
#include "autobus/semantics/schema.hpp"

#include <algorithm>
#include <iterator>

namespace autobus::casestudy {

using orchestrator::EventKind;

namespace {

std::string lexical(const logic::Term& t) { return t.is_atom() ? t.name() : logic::to_string(t); }

}  // namespace

nlohmann::json StudyReport::to_json() const {
    return {{"exact_match", exact_match},
            {"oracle_count", oracle.size()},
            {"engine_count", engine.size()},
            {"recipient_count", recipients.size()},
            {"first_difference", first_difference ? nlohmann::json(*first_difference) : nlohmann::json(nullptr)},
            {"targets", engine},
            {"statuses", statuses},
            {"task_events", task_events},
            {"grounding_calls", grounding_calls},
            {"grounding_facts", grounding_facts},
            {"success", success}};
}

StudyReport run_case_study(const StudyConfig& cfg) {
    auto data = cfg.data_dir.empty() ? cfg.bundle_dir : cfg.data_dir;
    auto paths = orchestrator::BundlePaths::in(cfg.bundle_dir);
    paths.tables = data;
    paths.tool_fixtures = data;
    auto bundle = orchestrator::load_bundle(paths);

    StudyReport report;
    auto schema = semantics::load_schema(paths.schema.string());
    auto tables = semantics::read_tables(data.string(), schema);
    report.oracle = oracle_target_set(tables, load_medians(data / "median_income.json"), load_params(paths.params));

    orchestrator::RunConfig rc;
    rc.run_id = "study";
    rc.auto_approve = true;
    rc.run_dir = cfg.run_dir;
    rc.metric_facts = cfg.metric_facts;
    rc.serial_reversed = cfg.serial_reversed;
    auto result = orchestrator::run_initiative(bundle, rc, &report.events);

    if (auto it = result.persisted.find("target"); it != result.persisted.end()) {
        for (const auto& f : it->second) {
            if (f.head.arity() == 1) report.engine.insert(lexical(f.head.args()[0]));
        }
    }
    for (const auto& r : result.receipts) {
        if (r.tool != "marketing_send") continue;
        for (const auto& who : r.body.value("recipients", nlohmann::json::array())) {
            report.recipients.insert(who.get<std::string>());
        }
    }
    for (const auto& e : report.events) {
        if (e.payload.contains("task")) {
            ++report.task_events[e.payload["task"].get<std::string>()][std::string(orchestrator::to_string(e.kind))];
        }
        if (e.kind == EventKind::grounding_fetched) {
            report.grounding_calls += e.payload.value("calls", std::size_t{0});
            report.grounding_facts += e.payload.value("facts", std::size_t{0});
        }
    }
    for (const auto& [t, s] : result.statuses) report.statuses[t] = std::string(initiative::to_string(s));
    report.success = result.evaluation.success;

    std::set<std::string> diff;
    for (const auto* side : {&report.engine, &report.recipients}) {
        std::set_symmetric_difference(side->begin(), side->end(), report.oracle.begin(), report.oracle.end(),
                                      std::inserter(diff, diff.end()));
    }
    if (!diff.empty()) report.first_difference = *diff.begin();
    report.exact_match = diff.empty() && result.all_completed();
    return report;
}

}  // namespace autobus::casestudy
