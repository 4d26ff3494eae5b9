#include "doctest.h"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"
#include "autobus/semantics/graph.hpp"

#include <map>
#include <random>
#include <set>

using namespace autobus;
using namespace autobus::semantics;
using autobus::logic::parse_term;

namespace {

const char* kSchema = R"json({
  "entity_types": [
    {"name": "consumer", "key": "consumer_id",
     "attributes": [
       {"column": "city", "predicate": "resides_in", "type": "text"},
       {"column": "household_income", "predicate": "household_income", "type": "number"},
       {"column": "churn_risk", "predicate": "churn_risk", "type": "number"}]},
    {"name": "subscription", "key": "subscription_id",
     "attributes": [
       {"column": "status", "predicate": "has_status", "type": "enum", "values": ["active", "cancelled"]},
       {"column": "monthly_rate", "predicate": "monthly_rate", "type": "number"}]}
  ],
  "relationships": [
    {"name": "subscribe", "from": "consumer", "to": "subscription",
     "via": {"table": "subscription", "column": "consumer_id"}}
  ],
  "constraints": [
    {"kind": "status_domain", "entity": "subscription", "attribute": "has_status",
     "value": "active", "through": "subscribe"},
    {"kind": "rule_template", "head": "precondition(send_promotion(C))",
     "body": "consumer(C), subscribe(C, S), active_subscription(S)"}
  ]
})json";

EntitySchema schema() { return parse_schema(nlohmann::json::parse(kSchema)); }

Table table(std::string name, std::vector<std::string> columns, std::vector<std::vector<Cell>> rows) {
    return Table{std::move(name), std::move(columns), std::move(rows)};
}

// The two-entity example: consumer c123 subscribing to active subscription s456.
TableSet snippet_tables() {
    TableSet t;
    t["consumer"] = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"},
                          {{"c123", std::nullopt, std::nullopt, std::nullopt}});
    t["subscription"] = table("subscription", {"subscription_id", "consumer_id", "status", "monthly_rate"},
                              {{"s456", "c123", "active", std::nullopt}});
    return t;
}

ErrorCode error_code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an autobus::Error");
    return ErrorCode::invalid_input;
}

std::vector<std::string> rendered(const std::vector<logic::Clause>& clauses) {
    std::vector<std::string> out;
    for (const auto& c : clauses) out.push_back(logic::to_string(c));
    return out;
}

struct RandomTables {
    TableSet tables;
    std::size_t non_null_consumer_cells = 0;
    std::set<std::pair<std::string, std::string>> consumer_values;
    std::set<std::pair<std::string, std::string>> join;
};

RandomTables random_tables(std::uint64_t seed, std::size_t n) {
    std::mt19937_64 rng(seed);
    const char* cities[] = {"rivertown", "lakeside", "Old Harbor", "hillcrest"};
    RandomTables out;
    Table consumers = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"}, {});
    Table subs = table("subscription", {"subscription_id", "consumer_id", "status", "monthly_rate"}, {});
    auto maybe = [&](std::string v) -> Cell { return rng() % 10 == 0 ? Cell{} : Cell{std::move(v)}; };
    for (std::size_t i = 1; i <= n; ++i) {
        std::string id = "c" + std::to_string(i);
        std::vector<Cell> row{id, maybe(cities[rng() % 4]), maybe(std::to_string(20000 + rng() % 80000)),
                              maybe(std::to_string(1 + rng() % 5))};
        static const char* types[] = {"", "text", "number", "number"};
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (!row[c]) continue;
            ++out.non_null_consumer_cells;
            out.consumer_values.insert({types[c], *row[c]});
        }
        consumers.rows.push_back(row);
        for (std::uint64_t k = rng() % 3; k > 0; --k) {
            std::string sid = "s" + std::to_string(subs.rows.size() + 1);
            subs.rows.push_back({sid, id, rng() % 2 ? "active" : "cancelled", std::to_string(5 + rng() % 20) + ".99"});
            out.join.insert({id, sid});
        }
    }
    out.tables["consumer"] = consumers;
    out.tables["subscription"] = subs;
    return out;
}

}  // namespace

TEST_SUITE("table") {
    TEST_CASE("csv quoting, nulls and line ends") {
        Table t = parse_csv("id,name,note\r\nc1,\"Smith, J\",\r\nc2,\"say \"\"hi\"\"\",\"\"\nc3,\"two\nlines\",x\n");
        REQUIRE(t.columns == std::vector<std::string>{"id", "name", "note"});
        REQUIRE(t.rows.size() == 3);
        CHECK(*t.rows[0][1] == "Smith, J");
        CHECK_FALSE(t.rows[0][2].has_value());
        CHECK(*t.rows[1][1] == "say \"hi\"");
        CHECK(t.rows[1][2] == Cell{""});
        CHECK(*t.rows[2][1] == "two\nlines");
    }

    TEST_CASE("csv write/parse round trip") {
        Table t = table("x", {"a", "b"}, {{"1", std::nullopt}, {"q\"uote", ""}, {"c,d", "e\nf"}});
        Table back = parse_csv(write_csv(t), "x");
        CHECK(back.columns == t.columns);
        CHECK(back.rows == t.rows);
    }

    TEST_CASE("header only and empty input") {
        CHECK(parse_csv("id,city\n").rows.empty());
        CHECK(parse_csv("").columns.empty());
    }

    TEST_CASE("malformed csv") {
        CHECK(error_code_of([] { parse_csv("a,b\n1,2,3\n"); }) == ErrorCode::invalid_input);
        CHECK(error_code_of([] { parse_csv("a\n\"open\n"); }) == ErrorCode::invalid_input);
        CHECK(error_code_of([] { parse_csv("a\n\"x\"y\n"); }) == ErrorCode::invalid_input);
    }

    TEST_CASE("json rows") {
        auto j = nlohmann::json::parse(R"([{"id": "c1", "income": 52000}, {"id": "c2", "city": null, "x": 1.5}])");
        Table t = table_from_json(j);
        CHECK(t.columns == std::vector<std::string>{"id", "income", "city", "x"});
        CHECK(*t.rows[0][1] == "52000");
        CHECK_FALSE(t.rows[1][2].has_value());
        CHECK_FALSE(t.rows[0][3].has_value());
        CHECK(*t.rows[1][3] == "1.5");
    }
}

TEST_SUITE("schema") {
    TEST_CASE("parses the snippet schema") {
        EntitySchema s = schema();
        REQUIRE(s.entity_types.size() == 2);
        CHECK(s.entity("subscription")->attributes[0].type == AttrType::enumeration);
        CHECK(s.references_from("subscription").size() == 1);
        CHECK(s.fact_predicates().count("subscribe/2"));
    }

    TEST_CASE("rejects inconsistent declarations") {
        auto bad = [](const char* doc) {
            return error_code_of([&] { parse_schema(nlohmann::json::parse(doc)); });
        };
        CHECK(bad(R"({"relationships": [{"name": "r", "from": "a", "to": "b", "via": {"table": "a", "column": "x"}}]})") ==
              ErrorCode::invalid_config);
        CHECK(bad(R"({"entity_types": [{"name": "a", "key": "k"}, {"name": "a", "key": "k"}]})") ==
              ErrorCode::invalid_config);
        CHECK(bad(R"({"entity_types": [{"name": "a", "key": "k",
                      "attributes": [{"column": "x", "predicate": "p", "type": "date"}]}]})") == ErrorCode::invalid_config);
        CHECK(bad(R"({"entity_types": [{"name": "a"}]})") == ErrorCode::invalid_config);
        CHECK(bad(R"({"constraints": [{"kind": "magic"}]})") == ErrorCode::invalid_config);
    }

    TEST_CASE("key mangling") {
        CHECK(mangle_key("c123", "consumer") == "c123");
        CHECK(mangle_key("C123", "consumer") == "c123");
        CHECK(mangle_key("123", "consumer") == "c123");
        CHECK(mangle_key("A-7", "subscription") == "a_7");
        CHECK(mangle_key("7-a", "subscription") == "s7_a");
    }
}

TEST_SUITE("schema_to_rules") {
    TEST_CASE("status_domain yields the active subscription rule") {
        auto rules = schema_to_rules(schema());
        REQUIRE(rules.size() == 2);
        CHECK(logic::to_string(rules[0]) == "active_subscription(S) :- has_status(S, active), subscribe(_, S).");
        CHECK(rules[0] == logic::parse_program("active_subscription(S):- has_status(S, active), subscribe(_, S).")
                              .clauses()[0]);
        CHECK(logic::to_string(rules[1]) ==
              "precondition(send_promotion(C)) :- consumer(C), subscribe(C, S), active_subscription(S).");
    }

    TEST_CASE("empty constraint list") {
        EntitySchema s = schema();
        s.constraints.clear();
        CHECK(schema_to_rules(s).empty());
    }

    TEST_CASE("required_relationship") {
        EntitySchema s = schema();
        s.constraints = {ConstraintDecl{ConstraintKind::required_relationship,
                                        {{"entity", "subscription"}, {"relationship", "subscribe"}}}};
        CHECK(rendered(schema_to_rules(s)) ==
              std::vector<std::string>{"has_subscribe(S) :- subscribe(_, S).",
                                       "integrity_violation(subscribe, S) :- subscription(S), not(has_subscribe(S))."});
    }

    TEST_CASE("unsafe template") {
        EntitySchema s = schema();
        s.constraints = {ConstraintDecl{ConstraintKind::rule_template, {{"head", "p(X, Y)"}, {"body", "consumer(X)"}}}};
        CHECK(error_code_of([&] { schema_to_rules(s); }) == ErrorCode::unsafe_rule);
        s.constraints = {ConstraintDecl{ConstraintKind::rule_template, {{"head", "p(X)"}, {"body", "X > 3"}}}};
        CHECK(error_code_of([&] { schema_to_rules(s); }) == ErrorCode::unsafe_rule);
    }
}

TEST_SUITE("ingest_table") {
    TEST_CASE("one consumer row forms a star") {
        Table t = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"},
                        {{"c123", "rivertown", std::nullopt, std::nullopt}});
        KnowledgeGraph kg = ingest_table(t, schema(), "consumer");
        REQUIRE(kg.nodes().size() == 2);
        CHECK(kg.find("c123")->kind == NodeKind::entity);
        const Node* v = kg.find(value_node_id(AttrType::text, "rivertown"));
        REQUIRE(v);
        CHECK(v->kind == NodeKind::value);
        REQUIRE(kg.triples().size() == 1);
        CHECK(kg.triples()[0] == KGTriple{"c123", "resides_in", v->id, TripleKind::attribute});
    }

    TEST_CASE("zero rows") {
        Table t = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"}, {});
        KnowledgeGraph kg = ingest_table(t, schema(), "consumer");
        CHECK(kg.nodes().empty());
        CHECK(kg.triples().empty());
    }

    TEST_CASE("value terms follow attribute types") {
        Table t = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"},
                        {{"c1", "Old Harbor", "52000", "4"}, {"c2", "rivertown", "61000.5", "4"}});
        FactSet fs = kg_to_facts(ingest_table(t, schema(), "consumer"), schema());
        CHECK(rendered(fs.facts) == std::vector<std::string>{
                                        "consumer(c1).", "consumer(c2).", "resides_in(c1, \"Old Harbor\").",
                                        "household_income(c1, 52000).", "churn_risk(c1, 4).",
                                        "resides_in(c2, rivertown).", "household_income(c2, 61000.5).",
                                        "churn_risk(c2, 4)."});
    }

    TEST_CASE("errors name the row and column") {
        auto ingest = [](Table t) { return ingest_table(t, schema(), "consumer"); };
        CHECK(error_code_of([&] { ingest(table("consumer", {"city"}, {})); }) == ErrorCode::missing_column);
        CHECK(error_code_of([&] {
                  ingest(table("consumer", {"consumer_id", "household_income"}, {}));
              }) == ErrorCode::missing_column);
        std::vector<std::string> cols{"consumer_id", "city", "household_income", "churn_risk"};
        CHECK(error_code_of([&] {
                  ingest(table("consumer", cols, {{"c1", "a", "1", "1"}, {"C1", "b", "2", "2"}}));
              }) == ErrorCode::duplicate_key);
        try {
            ingest(table("consumer", cols, {{"c1", "a", "1", "1"}, {"c2", "b", "lots", "2"}}));
            FAIL("expected coercion failure");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::type_coercion);
            std::string what = e.what();
            CHECK(what.find("row 2") != std::string::npos);
            CHECK(what.find("household_income") != std::string::npos);
        }
        Table subs = table("subscription", {"subscription_id", "consumer_id", "status", "monthly_rate"},
                           {{"s1", "c1", "paused", "9.99"}});
        CHECK(error_code_of([&] { ingest_table(subs, schema(), "subscription"); }) == ErrorCode::type_coercion);
    }

    TEST_CASE("counts match a direct count on 1000 rows") {
        RandomTables data = random_tables(42, 1000);
        KnowledgeGraph kg = ingest_table(data.tables["consumer"], schema(), "consumer");
        CHECK(kg.entity_count() == 1000);
        CHECK(kg.triples().size() == data.non_null_consumer_cells);
        CHECK(kg.value_count() == data.consumer_values.size());
        for (const auto& t : kg.triples()) {
            CHECK(kg.find(t.subject)->kind == NodeKind::entity);
        }
    }
}

TEST_SUITE("link_shared_values") {
    TEST_CASE("shared key materializes the subscribe relationship") {
        TableSet t = snippet_tables();
        EntitySchema s = schema();
        KnowledgeGraph kg = link_shared_values(
            {ingest_table(t["consumer"], s, "consumer"), ingest_table(t["subscription"], s, "subscription")}, s);
        CHECK(std::find(kg.triples().begin(), kg.triples().end(),
                        KGTriple{"c123", "subscribe", "s456", TripleKind::relationship}) != kg.triples().end());
        CHECK_FALSE(kg.find(value_node_id(AttrType::id, "c123")));
    }

    TEST_CASE("single fragment is unchanged") {
        Table t = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"},
                        {{"c1", "rivertown", "1", "2"}, {"c2", "rivertown", "3", "2"}});
        KnowledgeGraph kg = ingest_table(t, schema(), "consumer");
        CHECK(link_shared_values({kg}, schema()) == kg);
    }

    TEST_CASE("shared values collapse across fragments") {
        Table a = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"}, {{"c1", "rivertown", "1", "2"}});
        Table b = table("consumer", {"consumer_id", "city", "household_income", "churn_risk"}, {{"c2", "rivertown", "3", "2"}});
        KnowledgeGraph kg = link_shared_values({ingest_table(a, schema(), "consumer"), ingest_table(b, schema(), "consumer")}, schema());
        CHECK(kg.value_count() == 4);
        std::set<std::string> ids;
        for (const auto& n : kg.nodes()) CHECK(ids.insert(n.id).second);
    }

    TEST_CASE("dangling foreign key") {
        TableSet t = snippet_tables();
        t["subscription"].rows[0][1] = "c999";
        CHECK(error_code_of([&] { build_fact_set(t, schema()); }) == ErrorCode::dangling_reference);
    }

    TEST_CASE("subscribe triples equal the relational join") {
        RandomTables data = random_tables(7, 1000);
        EntitySchema s = schema();
        KnowledgeGraph kg = link_shared_values({ingest_table(data.tables["consumer"], s, "consumer"),
                                                ingest_table(data.tables["subscription"], s, "subscription")},
                                               s);
        std::set<std::pair<std::string, std::string>> got;
        for (const auto& t : kg.triples()) {
            if (t.predicate == "subscribe") got.insert({t.subject, t.object});
        }
        CHECK(got == data.join);
    }
}

TEST_SUITE("kg_to_facts") {
    TEST_CASE("reproduces the four-fact snippet") {
        FactSet fs = build_fact_set(snippet_tables(), schema());
        CHECK(rendered(fs.facts) == std::vector<std::string>{"consumer(c123).", "subscription(s456).",
                                                             "subscribe(c123, s456).", "has_status(s456, active)."});
        logic::Program p = fs.program();
        CHECK(logic::derivable(parse_term("precondition(send_promotion(c123))"), p));
        auto s = logic::solve_all(parse_term("active_subscription(S)"), p);
        REQUIRE(s.size() == 1);
        CHECK(logic::to_string(s[0]) == "active_subscription(s456)");
        std::string abl = fs.to_abl();
        CHECK(abl.rfind("% SECTION: facts\nconsumer(c123).\nsubscription(s456).\n", 0) == 0);
        CHECK(logic::parse_program(abl) == p);
    }

    TEST_CASE("empty graph") {
        FactSet fs = kg_to_facts(KnowledgeGraph{}, schema());
        CHECK(fs.facts.empty());
        CHECK(fs.foundational_rules.empty());
    }

    TEST_CASE("undeclared predicate") {
        KnowledgeGraph kg;
        kg.add_node(Node{"c1", NodeKind::entity, "consumer", "c1", logic::Term::atom("c1")});
        kg.add_node(Node{"v:text:x", NodeKind::value, "text", "x", logic::Term::atom("x")});
        kg.add_triple(KGTriple{"c1", "favourite", "v:text:x", TripleKind::attribute});
        CHECK(error_code_of([&] { kg_to_facts(kg, schema()); }) == ErrorCode::undeclared_predicate);
        KnowledgeGraph other;
        other.add_node(Node{"p1", NodeKind::entity, "product", "p1", logic::Term::atom("p1")});
        CHECK(error_code_of([&] { kg_to_facts(other, schema()); }) == ErrorCode::undeclared_predicate);
    }

    TEST_CASE("kind conflicts and dangling triples") {
        KnowledgeGraph kg;
        kg.add_node(Node{"x1", NodeKind::entity, "consumer", "x1", logic::Term::atom("x1")});
        CHECK(error_code_of([&] {
                  kg.add_node(Node{"x1", NodeKind::entity, "subscription", "x1", logic::Term::atom("x1")});
              }) == ErrorCode::kind_conflict);
        CHECK(error_code_of([&] { kg.add_triple(KGTriple{"x1", "subscribe", "nope", TripleKind::relationship}); }) ==
              ErrorCode::dangling_reference);
    }

    TEST_CASE("fact count is entity nodes plus triples and queries match the join") {
        RandomTables data = random_tables(99, 1000);
        EntitySchema s = schema();
        KnowledgeGraph kg = link_shared_values({ingest_table(data.tables["consumer"], s, "consumer"),
                                                ingest_table(data.tables["subscription"], s, "subscription")},
                                               s);
        FactSet fs = kg_to_facts(kg, s);
        CHECK(fs.facts.size() == kg.entity_count() + kg.triples().size());
        for (const auto& f : fs.facts) CHECK(f.is_ground_fact());

        std::set<std::pair<std::string, std::string>> got;
        for (const auto& t : logic::solve_all(parse_term("subscribe(C, S)"), fs.program())) {
            got.insert({t.args()[0].name(), t.args()[1].name()});
        }
        CHECK(got == data.join);
    }
}
