#include "doctest.h"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/tools/builtin.hpp"

#include "httplib.h"

#include <atomic>
#include <thread>

using namespace autobus;
using namespace autobus::tools;
using autobus::logic::parse_term;
using autobus::logic::Term;

namespace {

ErrorCode error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an autobus::Error");
    return ErrorCode::invalid_input;
}

ToolDescriptor median_descriptor() {
    ToolDescriptor d;
    d.name = "median_income_lookup";
    d.kind = ToolKind::grounding;
    d.signature = {"median_income", 2};
    d.inputs = 1;
    return d;
}

ToolDescriptor marketing_descriptor() {
    ToolDescriptor d;
    d.name = "marketing_send";
    d.kind = ToolKind::action;
    d.signature = {"promotion", 2};
    d.impact = Impact::high;
    return d;
}

ToolRegistry case_registry() {
    ToolRegistry reg;
    reg.register_tool(persist_descriptor(), persist_handler());
    reg.register_tool(median_descriptor(),
                      fixture_handler("median_income", {{"rivertown", Term::integer(62000)},
                                                        {"lakeside", Term::integer(48000)}}));
    reg.register_tool(marketing_descriptor(), recorder_handler());
    return reg;
}

ToolInvocation invocation(const std::string& tool, const std::string& params, const std::string& task = "task3") {
    Term p = parse_term(params);
    return ToolInvocation{tool, p, idempotency_key("run1", task, tool, p)};
}

// Loopback server on an ephemeral port; stops on destruction.
struct LoopbackServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    LoopbackServer() = default;
    void start() {
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }
    ~LoopbackServer() {
        server.stop();
        if (thread.joinable()) thread.join();
    }
    std::string url(const std::string& path) const { return "http://127.0.0.1:" + std::to_string(port) + path; }
};

}  // namespace

TEST_SUITE("registry") {
    TEST_CASE("registration and catalog") {
        ToolRegistry reg = case_registry();
        auto cat = reg.catalog();
        REQUIRE(cat.size() == 3);
        CHECK(cat[0].name == "marketing_send");
        CHECK(cat[1].name == "median_income_lookup");
        CHECK(cat[2].name == "persist");
        CHECK(reg.find("marketing_send")->impact == Impact::high);
        CHECK(reg.producer_of({"median_income", 2})->name == "median_income_lookup");
        CHECK_FALSE(reg.producer_of({"median_income", 3}));
        std::string summary = reg.catalog_summary();
        CHECK(summary.find("median_income_lookup: grounding median_income/2 inputs=1 impact=normal") != std::string::npos);
        CHECK(summary == case_registry().catalog_summary());
    }

    TEST_CASE("duplicate and malformed registrations") {
        ToolRegistry reg = case_registry();
        CHECK(error_code_of([&] { reg.register_tool(marketing_descriptor(), recorder_handler()); }) ==
              ErrorCode::duplicate_tool);
        ToolDescriptor bad = median_descriptor();
        bad.name = "other";
        bad.inputs = 2;
        CHECK(error_code_of([&] { reg.register_tool(bad, recorder_handler()); }) == ErrorCode::invalid_config);
    }

    TEST_CASE("idempotency keys are stable and distinguishing") {
        Term p = parse_term("promotion(retention_offer, c1)");
        std::string k = idempotency_key("run1", "task3", "marketing_send", p);
        CHECK(k.size() == 64);
        CHECK(k == idempotency_key("run1", "task3", "marketing_send", p));
        CHECK(k != idempotency_key("run2", "task3", "marketing_send", p));
        CHECK(k != idempotency_key("run1", "task3", "marketing_send", parse_term("promotion(retention_offer, c2)")));
    }
}

TEST_SUITE("invoke_tool") {
    TEST_CASE("median fixture grounding") {
        ToolRegistry reg = case_registry();
        RunStore store;
        ToolContext ctx{"run1", "task2", "", &store};
        ToolResult r = reg.invoke(invocation("median_income_lookup", "rivertown", "task2"), ctx);
        REQUIRE(r.ok());
        REQUIRE(r.facts_out.size() == 1);
        CHECK(logic::to_string(r.facts_out[0]) == "median_income(rivertown, 62000).");
        CHECK(store.receipts().empty());

        ToolResult missing = reg.invoke(invocation("median_income_lookup", "atlantis", "task2"), ctx);
        CHECK_FALSE(missing.ok());
        CHECK(missing.error.find("atlantis") != std::string::npos);
    }

    TEST_CASE("marketing recorder sends at most once per key") {
        ToolRegistry reg = case_registry();
        RunStore store;
        ToolContext ctx{"run1", "task3", "", &store};
        auto inv = invocation("marketing_send", "promotion(retention_offer, [c1, c7])");
        ToolResult first = reg.invoke(inv, ctx);
        REQUIRE(first.ok());
        CHECK(first.receipt["recipients"] == nlohmann::json::array({"c1", "c7"}));
        for (int i = 0; i < 5; ++i) CHECK(reg.invoke(inv, ctx).receipt == first.receipt);
        CHECK(store.effect_count("marketing_send") == 1);

        reg.invoke(invocation("marketing_send", "promotion(retention_offer, c9)"), ctx);
        CHECK(store.effect_count("marketing_send") == 2);
    }

    TEST_CASE("concurrent replays of one key run the side effect once") {
        ToolRegistry reg = case_registry();
        RunStore store;
        auto inv = invocation("marketing_send", "promotion(retention_offer, c1)");
        std::vector<std::thread> threads;
        for (int i = 0; i < 8; ++i) {
            threads.emplace_back([&] {
                ToolContext ctx{"run1", "task3", "", &store};
                reg.invoke(inv, ctx);
            });
        }
        for (auto& t : threads) t.join();
        CHECK(store.effect_count("marketing_send") == 1);
    }

    TEST_CASE("non-idempotent tools run every time") {
        ToolRegistry reg;
        ToolDescriptor d = marketing_descriptor();
        d.idempotent = false;
        reg.register_tool(d, recorder_handler());
        RunStore store;
        ToolContext ctx{"run1", "task3", "", &store};
        auto inv = invocation("marketing_send", "promotion(retention_offer, c1)");
        reg.invoke(inv, ctx);
        reg.invoke(inv, ctx);
        CHECK(store.effect_count("marketing_send") == 2);
    }

    TEST_CASE("persist appends to the run store") {
        ToolRegistry reg = case_registry();
        RunStore store;
        ToolContext ctx{"run1", "task3", "", &store};
        REQUIRE(reg.invoke(invocation("persist", "persist(target, target(c1))"), ctx).ok());
        REQUIRE(reg.invoke(invocation("persist", "persist(target, target(c2))"), ctx).ok());
        auto facts = store.facts("target");
        REQUIRE(facts.size() == 2);
        CHECK(logic::to_string(facts[0]) == "target(c1).");
        CHECK(store.facts().size() == 1);
    }

    TEST_CASE("invocation errors") {
        ToolRegistry reg = case_registry();
        RunStore store;
        ToolContext ctx{"run1", "task3", "", &store};
        CHECK(error_code_of([&] { reg.invoke(invocation("fax_machine", "x"), ctx); }) == ErrorCode::unknown_tool);
        CHECK(error_code_of([&] { reg.invoke(invocation("marketing_send", "promotion(retention_offer, C)"), ctx); }) ==
              ErrorCode::nonground_params);
        CHECK(error_code_of([&] { reg.invoke(invocation("marketing_send", "promo(c1)"), ctx); }) ==
              ErrorCode::signature_mismatch);

        ToolDescriptor liar = median_descriptor();
        liar.name = "liar";
        reg.register_tool(liar, [](const Term&, ToolContext&) {
            ToolResult r;
            r.facts_out.push_back(logic::make_fact(parse_term("median_income(rivertown)")));
            return r;
        });
        CHECK(error_code_of([&] { reg.invoke(invocation("liar", "rivertown"), ctx); }) == ErrorCode::signature_mismatch);
    }
}

TEST_SUITE("ground_predicate") {
    TEST_CASE("one call per distinct input") {
        ToolRegistry reg = case_registry();
        RunStore store;
        ToolContext ctx{"run1", "task2", "", &store};
        std::vector<std::vector<Term>> needed{{Term::atom("rivertown")}, {Term::atom("lakeside")}, {Term::atom("rivertown")}};
        Grounding g = ground_predicate(reg, {"median_income", 2}, needed, ctx);
        CHECK(g.calls == 2);
        REQUIRE(g.facts.size() == 2);
        CHECK(logic::to_string(g.facts[1]) == "median_income(lakeside, 48000).");
    }

    TEST_CASE("empty bindings") {
        ToolRegistry reg = case_registry();
        ToolContext ctx{"run1", "task2", "", nullptr};
        Grounding g = ground_predicate(reg, {"median_income", 2}, {}, ctx);
        CHECK(g.calls == 0);
        CHECK(g.facts.empty());
    }

    TEST_CASE("no producer and failing producer") {
        ToolRegistry reg = case_registry();
        ToolContext ctx{"run1", "task2", "", nullptr};
        try {
            ground_predicate(reg, {"mean_income", 2}, {{Term::atom("rivertown")}}, ctx);
            FAIL("expected no_producer");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::no_producer);
            CHECK(std::string(e.what()).find("mean_income/2") != std::string::npos);
        }
        CHECK(error_code_of([&] { ground_predicate(reg, {"median_income", 2}, {{Term::atom("atlantis")}}, ctx); }) ==
              ErrorCode::tool_failed);
    }
}

TEST_SUITE("http transport") {
    TEST_CASE("grounding over loopback with retries on 503") {
        LoopbackServer srv;
        std::atomic<int> hits{0};
        srv.server.Post("/median", [&](const httplib::Request& req, httplib::Response& res) {
            if (hits++ == 0) {
                res.status = 503;
                return;
            }
            auto body = nlohmann::json::parse(req.body);
            CHECK(body["tool"] == "remote_median");
            CHECK(body["idempotency_key"].get<std::string>().size() == 64);
            nlohmann::json out{{"status", "ok"}, {"facts", {"median_income(" + body["params"].get<std::string>() + ", 51000)."}}};
            res.set_content(out.dump(), "application/json");
        });
        srv.start();

        ToolRegistry reg;
        ToolDescriptor d = median_descriptor();
        d.name = "remote_median";
        d.transport = Transport::http;
        d.endpoint = srv.url("/median");
        reg.register_tool(d, http_handler(d.name, d.endpoint, RetryPolicy{3, std::chrono::milliseconds(5)}));
        RunStore store;
        ToolContext ctx{"run1", "task2", "", &store};
        ToolResult r = reg.invoke(invocation("remote_median", "hillcrest", "task2"), ctx);
        REQUIRE(r.ok());
        CHECK(logic::to_string(r.facts_out.at(0)) == "median_income(hillcrest, 51000).");
        CHECK(hits == 2);
    }

    TEST_CASE("unreachable endpoint is a transport failure after three attempts") {
        LoopbackServer srv;
        std::atomic<int> hits{0};
        srv.server.Post("/down", [&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.status = 503;
        });
        srv.start();
        auto handler = http_handler("down", srv.url("/down"), RetryPolicy{3, std::chrono::milliseconds(1)});
        ToolContext ctx{"run1", "t", "", nullptr};
        CHECK(error_code_of([&] { handler(Term::atom("x"), ctx); }) == ErrorCode::transport_failure);
        CHECK(hits == 3);

        auto refused = http_handler("gone", "http://127.0.0.1:1/none", RetryPolicy{2, std::chrono::milliseconds(1)});
        CHECK(error_code_of([&] { refused(Term::atom("x"), ctx); }) == ErrorCode::transport_failure);
    }

    TEST_CASE("application errors are not retried") {
        LoopbackServer srv;
        std::atomic<int> hits{0};
        srv.server.Post("/fail", [&](const httplib::Request&, httplib::Response& res) {
            ++hits;
            res.set_content(R"({"status": "failed", "error": "quota exceeded"})", "application/json");
        });
        srv.start();
        auto handler = http_handler("flaky", srv.url("/fail"), RetryPolicy{3, std::chrono::milliseconds(1)});
        ToolContext ctx{"run1", "t", "", nullptr};
        ToolResult r = handler(Term::atom("x"), ctx);
        CHECK_FALSE(r.ok());
        CHECK(r.error == "quota exceeded");
        CHECK(hits == 1);
    }
}

TEST_SUITE("catalog") {
    TEST_CASE("loads descriptors and always registers persist") {
        auto doc = nlohmann::json::parse(R"({"tools": [
            {"name": "marketing_send", "kind": "action", "signature": "promotion/2",
             "impact": "high", "handler": "recorder"}]})");
        ToolRegistry reg = load_catalog(doc, ".");
        CHECK(reg.find("persist"));
        CHECK(reg.find("marketing_send")->impact == Impact::high);
    }

    TEST_CASE("rejects unknown handlers and kinds") {
        auto load = [](const char* text) { return error_code_of([&] { load_catalog(nlohmann::json::parse(text), "."); }); };
        CHECK(load(R"({"tools": [{"name": "x", "handler": "magic"}]})") == ErrorCode::invalid_config);
        CHECK(load(R"({"tools": [{"name": "x", "kind": "oracle"}]})") == ErrorCode::invalid_config);
        CHECK(load(R"({"tools": [{"name": "x", "signature": "p", "handler": "recorder"}]})") == ErrorCode::invalid_config);
        CHECK(load(R"({"tools": [{"name": "persist", "handler": "recorder"}]})") == ErrorCode::duplicate_tool);
        CHECK(load(R"({"tools": [{"name": "g", "kind": "grounding", "signature": "p/2", "inputs": 1,
                                  "handler": "fixture", "fixture": "does/not/exist.json"}]})") == ErrorCode::io_error);
    }
}
