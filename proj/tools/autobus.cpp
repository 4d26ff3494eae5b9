#include "autobus/casestudy/study.hpp"
#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"
#include "autobus/orchestrator/api.hpp"
#include "autobus/semantics/schema.hpp"

#include "CLI11.hpp"

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

using namespace autobus;
using nlohmann::json;

namespace {

enum Exit { ok = 0, domain_failure = 1, input_error = 2, timed_out = 3 };

int exit_for(const Error& e) {
    switch (e.code()) {
    case ErrorCode::io_error:
    case ErrorCode::invalid_config:
    case ErrorCode::invalid_input:
    case ErrorCode::syntax_error:
    case ErrorCode::log_gap:
    case ErrorCode::unknown_event:
    case ErrorCode::missing_column:
    case ErrorCode::type_coercion:
    case ErrorCode::invalid_instruction: return input_error;
    case ErrorCode::timeout: return timed_out;
    default: return domain_failure;
    }
}

int report_error(const Error& e, bool as_json) {
    if (as_json) {
        std::cout << json{{"error", {{"code", to_string(e.code())}, {"message", e.what()}}}}.dump(2) << '\n';
    } else {
        std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << '\n';
    }
    return exit_for(e);
}

struct BundleOptions {
    std::string dir = "fixtures";
    std::string schema, tables, initiative, instructions, params, tools;

    void add(CLI::App* cmd) {
        cmd->add_option("--bundle", dir, "Directory holding the bundle files")->capture_default_str();
        cmd->add_option("--schema", schema, "Schema JSON");
        cmd->add_option("--tables", tables, "Directory with the entity tables");
        cmd->add_option("--initiative", initiative, "Initiative JSON");
        cmd->add_option("--instructions", instructions, "Task instructions JSON");
        cmd->add_option("--params", params, "Study parameters JSON");
        cmd->add_option("--tools", tools, "Tool catalog JSON");
    }

    orchestrator::BundlePaths paths() const {
        auto p = orchestrator::BundlePaths::in(dir);
        auto set = [](std::filesystem::path& field, const std::string& v) {
            if (!v.empty()) field = v;
        };
        set(p.schema, schema);
        set(p.tables, tables);
        set(p.initiative, initiative);
        set(p.instructions, instructions);
        set(p.params, params);
        set(p.tools, tools);
        if (!tables.empty()) p.tool_fixtures = tables;
        return p;
    }
};

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + p.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

std::vector<logic::Clause> parse_metrics(const std::vector<std::string>& texts) {
    std::vector<logic::Clause> out;
    for (const auto& t : texts) {
        auto term = logic::parse_term(t);
        if (!term.is_ground()) throw Error(ErrorCode::invalid_input, "metric " + t + " is not ground");
        out.push_back(logic::make_fact(term));
    }
    return out;
}

// validate

int cmd_validate(const BundleOptions& opts, bool as_json) {
    auto bundle = orchestrator::load_bundle(opts.paths());
    auto report = initiative::validate_initiative(bundle->spec, orchestrator::environment(*bundle));
    for (const auto& t : bundle->spec.tasks) {
        if (!bundle->instructions.count(t.instruction)) {
            report.error(ErrorCode::invalid_instruction, "no instruction " + t.instruction, t.id);
            continue;
        }
        const auto& instr = bundle->instructions.at(t.instruction);
        for (const auto& a : instr.actions) {
            if (a.tool != "persist" && !bundle->registry->find(a.tool)) {
                report.error(ErrorCode::unregistered_tool, "action tool " + a.tool + " is not registered", t.id);
            }
        }
    }
    if (as_json) {
        std::cout << json{{"ok", report.ok()}, {"report", to_json(report)}}.dump(2) << '\n';
    } else {
        for (const auto& f : report.errors) std::cout << "error   " << to_string(f) << '\n';
        for (const auto& f : report.warnings) std::cout << "warning " << to_string(f) << '\n';
        std::cout << (report.ok() ? "valid" : "invalid") << ": " << bundle->spec.tasks.size() << " tasks, "
                  << bundle->facts.facts.size() << " facts, " << bundle->facts.foundational_rules.size()
                  << " foundational rules, " << bundle->registry->catalog().size() << " tools\n";
    }
    return report.ok() ? ok : domain_failure;
}

// run

struct RunOptions {
    bool auto_approve = false;
    double timeout = 0;
    std::string out;
    std::string run_id = "run";
    std::string initiative_id;
    std::vector<std::string> metrics;
    std::string host = "127.0.0.1";
    int port = 0;
};

void print_summary(const orchestrator::Run& run, const orchestrator::RunResult& r, bool as_json) {
    if (as_json) {
        json statuses = json::object();
        for (const auto& [t, s] : r.statuses) statuses[t] = initiative::to_string(s);
        std::cout << json{{"run_id", run.id()},
                          {"timed_out", r.timed_out},
                          {"statuses", statuses},
                          {"evaluation", initiative::to_json(r.evaluation)},
                          {"receipts", r.receipts.size()},
                          {"events", run.events().size()}}
                         .dump(2)
                  << '\n';
        return;
    }
    auto state = run.state();
    std::printf("%-12s %-18s %s\n", "task", "status", "iterations");
    for (const auto& [t, s] : r.statuses) {
        std::printf("%-12s %-18s %zu\n", t.c_str(), std::string(initiative::to_string(s)).c_str(),
                    state["iterations"].value(t, std::size_t{0}));
    }
    std::printf("evaluation: %s\n", r.evaluation.success ? "success" : "not_success");
    std::printf("receipts: %zu, events: %zu%s\n", r.receipts.size(), run.events().size(),
                r.timed_out ? ", timed out" : "");
}

int cmd_run(const BundleOptions& opts, const RunOptions& ro, bool as_json) {
    auto bundle = orchestrator::load_bundle(opts.paths());
    if (!ro.initiative_id.empty() && ro.initiative_id != bundle->spec.id) {
        throw Error(ErrorCode::invalid_input, "unknown initiative " + ro.initiative_id + " (bundle holds " + bundle->spec.id + ")");
    }
    auto report = initiative::validate_initiative(bundle->spec, orchestrator::environment(*bundle));
    if (!report.ok()) {
        for (const auto& f : report.errors) std::cerr << "error   " << to_string(f) << '\n';
        return domain_failure;
    }
    orchestrator::RunConfig cfg;
    cfg.run_id = ro.run_id;
    cfg.auto_approve = ro.auto_approve;
    cfg.run_dir = ro.out.empty() ? std::filesystem::path("runs") / ro.run_id : std::filesystem::path(ro.out);
    cfg.metric_facts = parse_metrics(ro.metrics);

    orchestrator::Service service({{bundle->spec.id, bundle}});
    auto run = service.create_run(bundle->spec.id, cfg);
    if (!ro.auto_approve) {
        int port = service.bind(ro.host, ro.port);
        service.start();
        std::cerr << "approvals: POST http://" << ro.host << ":" << port << "/runs/" << run->id()
                  << "/approvals/{id}\n";
    }
    bool finished = ro.timeout > 0
                        ? run->wait_for(std::chrono::milliseconds(static_cast<long long>(ro.timeout * 1000)))
                        : (run->wait(), true);
    if (!finished) {
        run->abort("timeout");
        run->wait();
    }
    service.stop();
    auto r = run->result();
    print_summary(*run, r, as_json);
    if (!finished || r.timed_out) return timed_out;
    return r.all_completed() ? ok : domain_failure;
}

// query

int cmd_query(const std::vector<std::string>& files, const std::string& bundle_dir, const std::string& goal_text,
              bool as_json) {
    logic::Term goal = logic::parse_goal(goal_text);
    logic::Program program;
    if (!bundle_dir.empty()) {
        auto paths = orchestrator::BundlePaths::in(bundle_dir);
        auto schema = semantics::load_schema(paths.schema.string());
        program = semantics::build_fact_set(semantics::read_tables(paths.tables.string(), schema), schema).program();
    }
    for (const auto& f : files) program = program.concat(logic::parse_program(read_file(f)));
    auto answers = logic::solve_all(goal, program);
    if (as_json) {
        json out = json::array();
        for (const auto& a : answers) out.push_back(logic::to_string(a));
        std::cout << out.dump(2) << '\n';
    } else {
        for (const auto& a : answers) std::cout << logic::to_string(a) << '\n';
    }
    return ok;
}

// replay

int cmd_replay(const std::string& log, bool check, const std::string& state_file, bool as_json) {
    auto events = orchestrator::read_events(log);
    auto state = orchestrator::replay(events);
    bool match = true;
    if (check) {
        auto path = state_file.empty() ? std::filesystem::path(log).parent_path() / "final_state.json"
                                       : std::filesystem::path(state_file);
        json recorded;
        try {
            recorded = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::invalid_input, path.string() + ": " + e.what());
        }
        match = recorded == state;
    }
    if (as_json) {
        json out{{"state", state}};
        if (check) out["match"] = match;
        std::cout << out.dump(2) << '\n';
    } else {
        for (const auto& [t, s] : state["statuses"].items()) {
            std::printf("%-12s %s\n", t.c_str(), s.get<std::string>().c_str());
        }
        std::printf("snapshot: %llu, outcomes: %zu\n", state["snapshot"].get<unsigned long long>(),
                    state["outcomes"].size());
        if (check) std::printf("check: %s\n", match ? "match" : "mismatch");
    }
    return match ? ok : domain_failure;
}

// serve

orchestrator::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

int cmd_serve(const std::vector<std::string>& dirs, const std::string& host, int port, const std::string& runs_root) {
    std::map<std::string, std::shared_ptr<const orchestrator::Bundle>> initiatives;
    for (const auto& d : dirs) {
        auto b = orchestrator::load_bundle(orchestrator::BundlePaths::in(d));
        initiatives[b->spec.id] = b;
    }
    orchestrator::ServiceConfig cfg;
    cfg.runs_root = runs_root;
    orchestrator::Service service(std::move(initiatives), cfg);
    int bound = service.bind(host, port);
    std::cerr << "listening on http://" << host << ":" << bound << '\n';
    g_service = &service;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    service.listen();
    g_service = nullptr;
    return ok;
}

// study

int cmd_generate(const casestudy::DatasetConfig& cfg, const std::string& out) {
    casestudy::write_dataset(casestudy::generate_dataset(cfg), out);
    std::cout << "wrote " << out << '\n';
    return ok;
}

int cmd_oracle(const std::string& bundle, const std::string& data) {
    auto paths = orchestrator::BundlePaths::in(bundle);
    auto dir = data.empty() ? std::filesystem::path(bundle) : std::filesystem::path(data);
    auto schema = semantics::load_schema(paths.schema.string());
    auto ids = casestudy::oracle_target_set(semantics::read_tables(dir.string(), schema),
                                            casestudy::load_medians(dir / "median_income.json"),
                                            casestudy::load_params(paths.params));
    for (const auto& id : ids) std::cout << id << '\n';
    return ok;
}

int cmd_study(const casestudy::StudyConfig& cfg, bool as_json) {
    auto report = casestudy::run_case_study(cfg);
    if (as_json) {
        std::cout << report.to_json().dump(2) << '\n';
    } else {
        std::printf("exact match: %s\n", report.exact_match ? "yes" : "no");
        std::printf("oracle: %zu, engine: %zu, recipients: %zu\n", report.oracle.size(), report.engine.size(),
                    report.recipients.size());
        std::printf("grounding calls: %zu\n", report.grounding_calls);
        for (const auto& [t, s] : report.statuses) std::printf("%-12s %s\n", t.c_str(), s.c_str());
    }
    if (!report.exact_match) {
        std::cerr << "mismatch, first differing id: " << report.first_difference.value_or("(none)") << '\n';
        return domain_failure;
    }
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"autobus: declarative initiative execution"};
    app.require_subcommand(1);
    app.fallthrough();
    bool as_json = false;
    app.add_flag("--json", as_json, "JSON output");

    BundleOptions bundle_opts;
    auto* validate = app.add_subcommand("validate", "Check schema, initiative and instructions");
    bundle_opts.add(validate);

    RunOptions run_opts;
    auto* run = app.add_subcommand("run", "Execute an initiative");
    bundle_opts.add(run);
    run->add_flag("--auto-approve", run_opts.auto_approve, "Skip approval gates");
    run->add_option("--timeout", run_opts.timeout, "Seconds to wait before cancelling pending approvals");
    run->add_option("--out", run_opts.out, "Run directory (default runs/<run id>)");
    run->add_option("--run-id", run_opts.run_id)->capture_default_str();
    run->add_option("--id", run_opts.initiative_id, "Initiative id expected in the bundle");
    run->add_option("--metric", run_opts.metrics, "Injected metric fact, e.g. customer_satisfaction(i1, 4.2)");
    run->add_option("--host", run_opts.host)->capture_default_str();
    run->add_option("--port", run_opts.port, "API port for approvals (0 picks one)")->capture_default_str();

    std::vector<std::string> query_files;
    std::string query_bundle, goal;
    auto* query = app.add_subcommand("query", "Solve one goal");
    query->add_option("goal", goal, "Goal text")->required();
    query->add_option("files", query_files, "ABL files")->check(CLI::ExistingFile);
    query->add_option("--bundle", query_bundle, "Use the fact set of a bundle directory");

    std::string log, state_file;
    bool check = false;
    auto* replay = app.add_subcommand("replay", "Rebuild final state from an event log");
    replay->add_option("events", log, "events.jsonl")->required();
    replay->add_flag("--check", check, "Compare with the recorded final state");
    replay->add_option("--state", state_file, "Recorded state (default final_state.json beside the log)");

    std::vector<std::string> serve_dirs{"fixtures"};
    std::string host = "127.0.0.1", runs_root = "runs";
    int port = 8080;
    auto* serve = app.add_subcommand("serve", "Start the HTTP API");
    serve->add_option("--bundle", serve_dirs, "Bundle directories")->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--runs", runs_root, "Root of run directories")->capture_default_str();

    auto* study = app.add_subcommand("study", "Case-study dataset, oracle and comparison run");
    study->require_subcommand(1);
    casestudy::DatasetConfig gen;
    std::string gen_out = "fixtures";
    auto* generate = study->add_subcommand("generate", "Write a synthetic dataset");
    generate->add_option("--seed", gen.seed)->capture_default_str();
    generate->add_option("--n", gen.n_consumers, "Consumers")->capture_default_str();
    generate->add_option("--out", gen_out)->capture_default_str();
    std::string study_bundle = "fixtures", study_data;
    auto* oracle = study->add_subcommand("oracle", "Print the oracle target set");
    oracle->add_option("--bundle", study_bundle)->capture_default_str();
    oracle->add_option("--data", study_data, "Dataset directory (default: the bundle)");
    casestudy::StudyConfig study_cfg;
    std::string study_out;
    std::vector<std::string> study_metrics;
    auto* compare = study->add_subcommand("run", "Run the initiative and compare with the oracle");
    compare->add_option("--bundle", study_bundle)->capture_default_str();
    compare->add_option("--data", study_data, "Dataset directory (default: the bundle)");
    compare->add_option("--out", study_out, "Run directory");
    compare->add_option("--metric", study_metrics, "Injected metric fact");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : input_error;
    }

    try {
        if (*validate) return cmd_validate(bundle_opts, as_json);
        if (*run) return cmd_run(bundle_opts, run_opts, as_json);
        if (*query) return cmd_query(query_files, query_bundle, goal, as_json);
        if (*replay) return cmd_replay(log, check, state_file, as_json);
        if (*serve) return cmd_serve(serve_dirs, host, port, runs_root);
        if (*generate) return cmd_generate(gen, gen_out);
        if (*oracle) return cmd_oracle(study_bundle, study_data);
        if (*compare) {
            study_cfg.bundle_dir = study_bundle;
            study_cfg.data_dir = study_data;
            study_cfg.run_dir = study_out;
            study_cfg.metric_facts = parse_metrics(study_metrics);
            return cmd_study(study_cfg, as_json);
        }
    } catch (const Error& e) {
        return report_error(e, as_json);
    } catch (const std::filesystem::filesystem_error& e) {
        return report_error(Error(ErrorCode::io_error, e.what()), as_json);
    }
    return ok;
}
