#include "doctest.h"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/orchestrator/orchestrator.hpp"

#include <fstream>
#include <set>
#include <sstream>

using namespace autobus;
using namespace autobus::orchestrator;
using initiative::TaskStatus;

namespace {

std::filesystem::path source(const std::string& rel) { return std::filesystem::path(AUTOBUS_SOURCE_DIR) / rel; }

std::shared_ptr<const Bundle> case_study() {
    static auto b = load_bundle(BundlePaths::in(source("fixtures")));
    return b;
}

std::set<std::string> golden_ids() {
    std::ifstream in(source("golden/oracle_ids.txt"));
    std::set<std::string> out;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.insert(line);
    }
    return out;
}

std::set<std::string> recipients(const RunResult& r) {
    std::set<std::string> out;
    for (const auto& rec : r.receipts) {
        if (rec.tool != "marketing_send") continue;
        for (const auto& who : rec.body["recipients"]) out.insert(who.get<std::string>());
    }
    return out;
}

std::vector<const Event*> of_kind(const std::vector<Event>& events, EventKind k) {
    std::vector<const Event*> out;
    for (const auto& e : events) {
        if (e.kind == k) out.push_back(&e);
    }
    return out;
}

std::shared_ptr<Bundle> variant(const std::string& initiative_json, const std::string& instructions_json) {
    auto b = std::make_shared<Bundle>(*case_study());
    b->spec = initiative::parse_initiative(nlohmann::json::parse(initiative_json));
    b->instructions = synthesis::parse_instructions(nlohmann::json::parse(instructions_json));
    return b;
}

std::vector<logic::Clause> metric(const std::string& text) { return {logic::make_fact(logic::parse_term(text))}; }

void wait_for_approval(Run& run) {
    for (int i = 0; i < 1000 && run.approvals().empty(); ++i) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    REQUIRE(run.approvals().size() == 1);
}

}  // namespace

TEST_CASE("case study with auto approval reaches the oracle set") {
    std::vector<Event> events;
    RunConfig cfg;
    cfg.run_id = "auto";
    cfg.auto_approve = true;
    auto r = run_initiative(case_study(), cfg, &events);

    CHECK(r.all_completed());
    CHECK(recipients(r) == golden_ids());
    std::set<std::string> targets;
    for (const auto& f : r.persisted.at("target")) targets.insert(f.head.args()[0].name());
    CHECK(targets == golden_ids());
    CHECK_FALSE(r.evaluation.success);

    for (std::size_t i = 0; i < events.size(); ++i) CHECK(events[i].seq == i + 1);
    CHECK(events.front().kind == EventKind::run_started);
    CHECK(events.back().kind == EventKind::run_finished);
    CHECK(of_kind(events, EventKind::approval_requested).empty());
    auto replayed = replay(events);
    CHECK(replayed["run_id"] == "auto");
    CHECK(replayed["snapshot"] == 3);
    CHECK(replayed["statuses"] == nlohmann::json::parse(R"json({"task1": "completed", "task2": "completed",
        "task3": "completed"})json"));

    SUBCASE("task1 and task2 share the first round") {
        auto ready = of_kind(events, EventKind::task_ready);
        REQUIRE(ready.size() == 3);
        CHECK(ready[0]->payload["round"] == 1);
        CHECK(ready[1]->payload["round"] == 1);
        CHECK(ready[2]->payload["task"] == "task3");
        CHECK(ready[2]->payload["round"] == 2);
    }
    SUBCASE("task2 fetches one median per subscriber city") {
        auto g = of_kind(events, EventKind::grounding_fetched);
        REQUIRE(g.size() == 1);
        CHECK(g[0]->payload["task"] == "task2");
        CHECK(g[0]->payload["calls"] == 8);
        CHECK(g[0]->payload["facts"] == 8);
    }
}

TEST_CASE("evaluation follows the injected satisfaction metric") {
    RunConfig cfg;
    cfg.auto_approve = true;
    cfg.metric_facts = metric("customer_satisfaction(i1, 4.2)");
    auto r = run_initiative(case_study(), cfg);
    CHECK(r.evaluation.success);
    CHECK(logic::to_string(r.evaluation.bindings.at("Score")) == "4.2");

    cfg.metric_facts = metric("customer_satisfaction(i1, 4.0)");
    CHECK(run_initiative(case_study(), cfg).evaluation.success);
    cfg.metric_facts = metric("customer_satisfaction(i1, 3.9)");
    CHECK_FALSE(run_initiative(case_study(), cfg).evaluation.success);
}

TEST_CASE("high-impact task parks until approved") {
    RunConfig cfg;
    cfg.run_id = "gated";
    Run run(case_study(), cfg);
    run.start();
    wait_for_approval(run);

    auto a = run.approvals().front();
    CHECK(a.id == "a1");
    CHECK(a.task_id == "task3");
    CHECK(a.decision == Decision::pending);
    CHECK(a.program_text.find("invoke(marketing_send, promotion(retention_offer, C))") != std::string::npos);
    CHECK(run.statuses().at("task3") == TaskStatus::awaiting_approval);
    CHECK(run.phase() != RunPhase::finished);
    for (const auto& e : run.events()) {
        if (e.kind == EventKind::action_invoked) CHECK(e.payload["tool"] != "marketing_send");
    }

    run.submit_approval("a1", Decision::approved, "ops");
    run.wait();
    auto r = run.result();
    CHECK(r.all_completed());
    CHECK(recipients(r) == golden_ids());

    auto events = run.events();
    std::size_t decided = 0, first_send = 0;
    for (const auto& e : events) {
        if (e.kind == EventKind::approval_decided) decided = e.seq;
        if (e.kind == EventKind::action_invoked && e.payload["tool"] == "marketing_send" && !first_send) first_send = e.seq;
    }
    CHECK(decided > 0);
    CHECK(first_send > decided);
    CHECK(replay(events) == run.state());

    SUBCASE("a second decision is refused and the first stands") {
        CHECK_THROWS_WITH_AS(run.submit_approval("a1", Decision::rejected, "other"), doctest::Contains("already"),
                             Error);
        try {
            run.submit_approval("a1", Decision::rejected, "other");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::already_decided);
        }
        CHECK(run.approvals().front().decision == Decision::approved);
        CHECK(run.approvals().front().decider == "ops");
    }
    SUBCASE("unknown approval id") {
        try {
            run.submit_approval("a9", Decision::approved, "ops");
            FAIL("expected unknown_approval");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::unknown_approval);
        }
    }
}

TEST_CASE("rejection cancels the task and nothing is sent") {
    RunConfig cfg;
    cfg.run_id = "rejected";
    Run run(case_study(), cfg);
    run.start();
    wait_for_approval(run);
    run.submit_approval("a1", Decision::rejected, "ops");
    run.wait();
    auto r = run.result();
    CHECK(r.statuses.at("task1") == TaskStatus::completed);
    CHECK(r.statuses.at("task2") == TaskStatus::completed);
    CHECK(r.statuses.at("task3") == TaskStatus::cancelled);
    CHECK(recipients(r).empty());
    CHECK_FALSE(r.persisted.count("target"));
    CHECK_FALSE(r.evaluation.success);
    CHECK(replay(run.events()) == run.state());
}

TEST_CASE("abort cancels parked tasks") {
    RunConfig cfg;
    cfg.run_id = "aborted";
    Run run(case_study(), cfg);
    run.start();
    wait_for_approval(run);
    run.abort("timeout");
    run.wait();
    auto r = run.result();
    CHECK(r.timed_out);
    CHECK(r.statuses.at("task3") == TaskStatus::cancelled);
    auto events = run.events();
    auto failed = of_kind(events, EventKind::task_failed);
    REQUIRE(failed.size() == 1);
    CHECK(failed[0]->payload["reason"] == "timeout");
    CHECK(replay(run.events()) == run.state());
}

TEST_CASE("run directory holds the log, programs, outcomes and receipts") {
    auto dir = std::filesystem::temp_directory_path() / "autobus_orchestrator_test_run";
    std::filesystem::remove_all(dir);
    RunConfig cfg;
    cfg.run_id = "files";
    cfg.auto_approve = true;
    cfg.run_dir = dir;
    std::vector<Event> events;
    run_initiative(case_study(), cfg, &events);

    auto logged = read_events(dir / "events.jsonl");
    REQUIRE(logged.size() == events.size());
    for (std::size_t i = 0; i < events.size(); ++i) {
        CHECK(to_json(logged[i]) == to_json(events[i]));
    }
    for (const char* f : {"programs/task1.abl", "programs/task2.abl", "programs/task3.abl", "outcomes/task1.abl",
                          "outcomes/task2.abl", "outcomes/task3.abl", "receipts.json", "final_state.json"}) {
        CHECK_MESSAGE(std::filesystem::exists(dir / f), f);
    }
    std::ifstream state(dir / "final_state.json");
    CHECK(nlohmann::json::parse(state) == replay(logged));

    std::ifstream program(dir / "programs/task3.abl");
    std::stringstream text;
    text << program.rdbuf();
    std::ifstream golden(source("golden/task3.abl"));
    std::stringstream expected;
    expected << golden.rdbuf();
    CHECK(text.str() == expected.str());
    std::filesystem::remove_all(dir);
}

TEST_CASE("launch order does not change the outcome") {
    RunConfig cfg;
    cfg.auto_approve = true;
    std::vector<Event> parallel, serial;
    auto a = run_initiative(case_study(), cfg, &parallel);
    cfg.serial_reversed = true;
    auto b = run_initiative(case_study(), cfg, &serial);

    CHECK(recipients(a) == recipients(b));
    CHECK(a.persisted == b.persisted);
    auto task_events = [](const std::vector<Event>& events) {
        std::multiset<std::string> out;
        for (const auto& e : events) {
            if (e.payload.contains("task") && e.kind != EventKind::action_invoked) {
                out.insert(std::string(to_string(e.kind)) + " " + e.payload["task"].get<std::string>());
            }
        }
        return out;
    };
    CHECK(task_events(parallel) == task_events(serial));
    CHECK(replay(parallel)["statuses"] == replay(serial)["statuses"]);
    CHECK(replay(parallel)["outcomes"].size() == replay(serial)["outcomes"].size());
}

TEST_CASE("repeat_until bounds iterations") {
    const char* instructions = R"json([
      {"task_id": "poll", "target": "seen(P)", "joins": ["product(P)"],
       "actions": [{"tool": "persist", "store": "seen"}]}])json";

    SUBCASE("goal never holds: three iterations, then exhausted") {
        auto b = variant(R"json({"id": "loop", "tasks": [
          {"id": "poll", "preconditions": ["product(_)"], "postconditions": ["task_done(poll)"],
           "repeat_until": {"goal": "enough(poll)", "max_iterations": 3}}]})json",
                         instructions);
        std::vector<Event> events;
        RunConfig cfg;
        cfg.run_id = "loop";
        auto r = run_initiative(b, cfg, &events);
        CHECK(r.statuses.at("poll") == TaskStatus::exhausted);
        auto done = of_kind(events, EventKind::task_completed);
        REQUIRE(done.size() == 3);
        CHECK(done[0]->payload["repeat"] == "reactivate");
        CHECK(done[1]->payload["repeat"] == "reactivate");
        CHECK(done[2]->payload["repeat"] == "exhausted");
        CHECK(done[2]->payload["iteration"] == 3);
        CHECK(of_kind(events, EventKind::program_synthesized).size() == 3);
        CHECK(events.back().kind == EventKind::run_finished);
        auto state = replay(events);
        CHECK(state["iterations"]["poll"] == 3);
        CHECK(state["statuses"]["poll"] == "exhausted");
    }
    SUBCASE("goal holds after the first run") {
        auto b = variant(R"json({"id": "loop", "tasks": [
          {"id": "poll", "preconditions": ["product(_)"], "postconditions": ["task_done(poll)"],
           "repeat_until": {"goal": "seen(product2)", "max_iterations": 3}}]})json",
                         instructions);
        std::vector<Event> events;
        auto r = run_initiative(b, {}, &events);
        CHECK(r.statuses.at("poll") == TaskStatus::completed);
        auto done = of_kind(events, EventKind::task_completed);
        REQUIRE(done.size() == 1);
        CHECK(done[0]->payload["repeat"] == "stop");
    }
}

TEST_CASE("faulty programs fail their task before any action") {
    const char* spec = R"json({"id": "faults", "tasks": [
      {"id": "t", "preconditions": ["subscribe(_, _)"], "postconditions": ["task_done(t)"]}]})json";
    auto failure = [&](const std::string& instruction) {
        std::vector<Event> events;
        RunConfig cfg;
        cfg.auto_approve = true;
        auto r = run_initiative(variant(spec, "[" + instruction + "]"), cfg, &events);
        CHECK(r.statuses.at("t") == TaskStatus::failed);
        CHECK(of_kind(events, EventKind::action_invoked).empty());
        CHECK(replay(events)["statuses"]["t"] == "failed");
        auto failed = of_kind(events, EventKind::task_failed);
        REQUIRE(failed.size() == 1);
        return failed[0]->payload;
    };

    SUBCASE("undefined predicate") {
        auto p = failure(R"json({"task_id": "t", "target": "x(C)", "joins": ["subscribe(C, S)", "loyalty_tier(C, gold)"],
                                 "actions": [{"tool": "persist", "store": "x"}]})json");
        CHECK(p["reason"] == "synthesis");
        CHECK(p["code"] == "undefined_predicate");
    }
    SUBCASE("unregistered tool") {
        auto p = failure(R"json({"task_id": "t", "target": "x(C)", "joins": ["subscribe(C, S)"],
                                 "actions": [{"tool": "sms_blast", "params": "promotion(offer, C)"}]})json");
        CHECK(p["reason"] == "synthesis");
        CHECK(p["code"] == "unregistered_tool");
    }
    SUBCASE("tool outside the task's allowance") {
        auto p = failure(R"json({"task_id": "t", "target": "x(C)", "joins": ["subscribe(C, S)"],
                                 "actions": [{"tool": "marketing_send", "params": "promotion(offer, C)"}]})json");
        CHECK(p["reason"] == "validation");
        CHECK(p["findings"][0]["code"] == "unregistered_tool");
    }
    SUBCASE("unsafe negation") {
        auto p = failure(R"json({"task_id": "t", "target": "x(C)", "joins": ["subscribe(C, S)", "not(churn_risk(C, R))"],
                                 "actions": [{"tool": "persist", "store": "x"}]})json");
        CHECK(p["reason"] == "validation");
        CHECK(p["findings"][0]["code"] == "unsafe_negation");
    }
}

TEST_CASE("an initiative without tasks finishes at once") {
    auto b = variant(R"json({"id": "empty", "tasks": []})json", "[]");
    std::vector<Event> events;
    RunConfig cfg;
    cfg.run_id = "empty";
    auto r = run_initiative(b, cfg, &events);
    CHECK(r.statuses.empty());
    REQUIRE(events.size() == 3);
    CHECK(events[1].kind == EventKind::initiative_evaluated);
    CHECK(replay(events) == nlohmann::json::parse(R"json({"run_id": "empty", "snapshot": 0, "statuses": {},
        "iterations": {}, "outcomes": []})json"));
}

TEST_CASE("replay of bad logs") {
    SUBCASE("empty log gives the initial state") {
        CHECK(replay({}) == nlohmann::json::parse(R"json({"run_id": "", "snapshot": 0, "statuses": {},
            "iterations": {}, "outcomes": []})json"));
    }
    SUBCASE("gap names the missing seq") {
        std::vector<Event> events;
        RunConfig cfg;
        cfg.auto_approve = true;
        run_initiative(case_study(), cfg, &events);
        events.erase(events.begin() + 4);
        try {
            replay(events);
            FAIL("expected log_gap");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::log_gap);
            CHECK(std::string(e.what()).find("seq 5") != std::string::npos);
        }
    }
    SUBCASE("unknown kind") {
        auto j = nlohmann::json::parse(R"json({"seq": 1, "kind": "task_teleported", "payload": {}})json");
        try {
            event_from_json(j);
            FAIL("expected unknown_event");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::unknown_event);
        }
    }
}
