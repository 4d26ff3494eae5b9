#include "autobus/semantics/schema.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"

#include <cctype>
#include <fstream>

namespace autobus::semantics {

using logic::Clause;
using logic::Literal;
using logic::Term;

std::string_view to_string(AttrType t) {
    switch (t) {
    case AttrType::id: return "id";
    case AttrType::number: return "number";
    case AttrType::text: return "text";
    case AttrType::enumeration: return "enum";
    }
    return "?";
}

const EntityType* EntitySchema::entity(std::string_view name) const {
    for (const auto& e : entity_types) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const EntityType* EntitySchema::entity_for_table(std::string_view table) const {
    for (const auto& e : entity_types) {
        if (e.table == table) return &e;
    }
    return nullptr;
}

const Relationship* EntitySchema::relationship(std::string_view name) const {
    for (const auto& r : relationships) {
        if (r.name == name) return &r;
    }
    return nullptr;
}

std::vector<const Relationship*> EntitySchema::references_from(std::string_view table) const {
    std::vector<const Relationship*> out;
    for (const auto& r : relationships) {
        if (r.via_table == table) out.push_back(&r);
    }
    return out;
}

std::set<std::string> EntitySchema::fact_predicates() const {
    std::set<std::string> out;
    for (const auto& e : entity_types) {
        out.insert(e.name + "/1");
        for (const auto& a : e.attributes) out.insert(a.predicate + "/2");
    }
    for (const auto& r : relationships) out.insert(r.name + "/2");
    return out;
}

namespace {

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_config, "schema: " + what); }

std::string str_field(const nlohmann::json& obj, const char* key, const std::string& where) {
    auto it = obj.find(key);
    if (it == obj.end() || !it->is_string() || it->get<std::string>().empty()) {
        bad(where + " needs a string \"" + key + "\"");
    }
    return it->get<std::string>();
}

AttrType parse_type(const std::string& s, const std::string& where) {
    if (s == "id") return AttrType::id;
    if (s == "number") return AttrType::number;
    if (s == "text") return AttrType::text;
    if (s == "enum") return AttrType::enumeration;
    bad(where + ": unknown attribute type " + s);
}

void require_atom_name(const std::string& s, const std::string& where) {
    if (!logic::is_atom_name(s)) bad(where + ": " + s + " is not a valid predicate name");
}

std::string var_for(std::string_view entity) {
    return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(entity[0]))));
}

Clause checked(Clause c, const std::string& origin) {
    if (auto v = logic::unbound_head_variable(c)) {
        throw Error(ErrorCode::unsafe_rule, origin + ": head variable " + to_string(*v) +
                                                " is not bound by a positive body literal in " + to_string(c));
    }
    if (auto v = logic::unsafe_negation_variable(c)) {
        throw Error(ErrorCode::unsafe_negation,
                    origin + ": variable " + to_string(*v) + " in a negated literal is unbound in " + to_string(c));
    }
    return c;
}

Literal positive(Term t) { return Literal{Literal::Polarity::positive, std::move(t)}; }

}  // namespace

EntitySchema parse_schema(const nlohmann::json& doc) {
    if (!doc.is_object()) bad("document must be an object");
    EntitySchema schema;
    std::set<std::string> predicates;
    auto claim = [&](const std::string& pred, const std::string& where) {
        require_atom_name(pred, where);
        if (!predicates.insert(pred).second) bad(where + ": predicate " + pred + " declared twice");
    };

    for (const auto& e : doc.value("entity_types", nlohmann::json::array())) {
        EntityType et;
        et.name = str_field(e, "name", "entity type");
        std::string where = "entity type " + et.name;
        claim(et.name, where);
        et.table = e.contains("table") ? str_field(e, "table", where) : et.name;
        et.key = str_field(e, "key", where);
        std::set<std::string> columns{et.key};
        for (const auto& a : e.value("attributes", nlohmann::json::array())) {
            AttributeDecl ad;
            ad.column = str_field(a, "column", where + " attribute");
            ad.predicate = str_field(a, "predicate", where + " attribute " + ad.column);
            ad.type = parse_type(a.value("type", std::string("text")), where + " attribute " + ad.column);
            if (ad.type == AttrType::enumeration) {
                for (const auto& v : a.value("values", nlohmann::json::array())) ad.values.push_back(v.get<std::string>());
                if (ad.values.empty()) bad(where + " attribute " + ad.column + ": enum without values");
            }
            if (!columns.insert(ad.column).second) bad(where + ": column " + ad.column + " declared twice");
            claim(ad.predicate, where + " attribute " + ad.column);
            et.attributes.push_back(std::move(ad));
        }
        for (const auto& other : schema.entity_types) {
            if (other.table == et.table) bad(where + ": table " + et.table + " already used by " + other.name);
        }
        schema.entity_types.push_back(std::move(et));
    }

    for (const auto& r : doc.value("relationships", nlohmann::json::array())) {
        Relationship rel;
        rel.name = str_field(r, "name", "relationship");
        std::string where = "relationship " + rel.name;
        claim(rel.name, where);
        rel.from = str_field(r, "from", where);
        rel.to = str_field(r, "to", where);
        if (!schema.entity(rel.from)) bad(where + ": undeclared entity type " + rel.from);
        if (!schema.entity(rel.to)) bad(where + ": undeclared entity type " + rel.to);
        if (!r.contains("via") || !r["via"].is_object()) bad(where + " needs \"via\": {table, column}");
        rel.via_table = str_field(r["via"], "table", where + " via");
        rel.via_column = str_field(r["via"], "column", where + " via");
        if (rel.via_table != schema.entity(rel.from)->table && rel.via_table != schema.entity(rel.to)->table) {
            bad(where + ": via table " + rel.via_table + " is neither endpoint's table");
        }
        schema.relationships.push_back(std::move(rel));
    }

    for (const auto& c : doc.value("constraints", nlohmann::json::array())) {
        std::string kind = str_field(c, "kind", "constraint");
        ConstraintDecl decl{ConstraintKind::rule_template, c};
        if (kind == "status_domain") {
            decl.kind = ConstraintKind::status_domain;
            for (const char* k : {"entity", "attribute", "value", "through"}) str_field(c, k, "status_domain constraint");
        } else if (kind == "required_relationship") {
            decl.kind = ConstraintKind::required_relationship;
            for (const char* k : {"entity", "relationship"}) str_field(c, k, "required_relationship constraint");
        } else if (kind == "rule_template") {
            for (const char* k : {"head", "body"}) str_field(c, k, "rule_template constraint");
        } else {
            bad("unknown constraint kind " + kind);
        }
        schema.constraints.push_back(std::move(decl));
    }
    return schema;
}

EntitySchema load_schema(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path);
    try {
        return parse_schema(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path + ": " + e.what());
    }
}

std::string mangle_key(std::string_view raw, std::string_view entity_type) {
    std::string s;
    s.reserve(raw.size() + 2);
    for (char c : raw) {
        auto u = static_cast<unsigned char>(c);
        s += std::isalnum(u) || c == '_' ? static_cast<char>(std::tolower(u)) : '_';
    }
    if (logic::is_atom_name(s)) return s;
    char prefix = entity_type.empty() ? 'k' : static_cast<char>(std::tolower(static_cast<unsigned char>(entity_type[0])));
    s.insert(s.begin(), prefix);
    if (!logic::is_atom_name(s)) s.insert(s.begin(), 'k');
    return s;
}

std::vector<Clause> schema_to_rules(const EntitySchema& schema) {
    std::vector<Clause> out;
    for (const auto& c : schema.constraints) {
        const auto& p = c.params;
        switch (c.kind) {
        case ConstraintKind::status_domain: {
            // active_subscription(S) :- has_status(S, active), subscribe(_, S).
            std::string entity = p["entity"];
            std::string value = p["value"];
            const Relationship* rel = schema.relationship(p["through"].get<std::string>());
            if (!schema.entity(entity)) bad("status_domain: undeclared entity type " + entity);
            if (!rel) bad("status_domain: undeclared relationship " + p["through"].get<std::string>());
            if (rel->from != entity && rel->to != entity) {
                bad("status_domain: relationship " + rel->name + " does not touch " + entity);
            }
            Term x = Term::var(var_for(entity));
            Term anon = Term::var("_#1");
            Clause rule{Term::compound(value + "_" + entity, {x}),
                        {positive(Term::compound(p["attribute"].get<std::string>(), {x, Term::atom(value)})),
                         positive(rel->to == entity ? Term::compound(rel->name, {anon, x})
                                                    : Term::compound(rel->name, {x, anon}))}};
            out.push_back(checked(std::move(rule), "status_domain"));
            break;
        }
        case ConstraintKind::required_relationship: {
            // has_subscribe(S) :- subscribe(_, S).
            // integrity_violation(subscribe, S) :- subscription(S), not(has_subscribe(S)).
            std::string entity = p["entity"];
            const Relationship* rel = schema.relationship(p["relationship"].get<std::string>());
            if (!schema.entity(entity)) bad("required_relationship: undeclared entity type " + entity);
            if (!rel) bad("required_relationship: undeclared relationship " + p["relationship"].get<std::string>());
            Term x = Term::var(var_for(entity));
            Term anon = Term::var("_#1");
            Term has = Term::compound("has_" + rel->name, {x});
            out.push_back(checked(Clause{has, {positive(rel->to == entity ? Term::compound(rel->name, {anon, x})
                                                                           : Term::compound(rel->name, {x, anon}))}},
                                  "required_relationship"));
            out.push_back(checked(Clause{Term::compound("integrity_violation", {Term::atom(rel->name), x}),
                                         {positive(Term::compound(entity, {x})),
                                          Literal{Literal::Polarity::negated, has}}},
                                  "required_relationship"));
            break;
        }
        case ConstraintKind::rule_template: {
            std::string text = p["head"].get<std::string>() + " :- " + p["body"].get<std::string>() + ".";
            logic::Program parsed = logic::parse_program(text);
            if (parsed.size() != 1) bad("rule_template must define exactly one clause: " + text);
            out.push_back(checked(parsed.clauses()[0], "rule_template"));
            break;
        }
        }
    }
    return out;
}

}  // namespace autobus::semantics
