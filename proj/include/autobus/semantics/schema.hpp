#pragma once

#include "autobus/logic/program.hpp"

#include "json.hpp"

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace autobus::semantics {

enum class AttrType { id, number, text, enumeration };

std::string_view to_string(AttrType t);

struct AttributeDecl {
    std::string column;
    std::string predicate;
    AttrType type = AttrType::text;
    // Allowed values for enumeration attributes.
    std::vector<std::string> values;
};

struct EntityType {
    std::string name;
    // Source table; defaults to the entity name.
    std::string table;
    std::string key;
    std::vector<AttributeDecl> attributes;
};

// A relationship `name(From, To)` materialized from a foreign-key column. The
// column lives in `via_table`, which must be the table of either endpoint; its
// values are keys of the other endpoint.
struct Relationship {
    std::string name;
    std::string from;
    std::string to;
    std::string via_table;
    std::string via_column;
};

enum class ConstraintKind { status_domain, required_relationship, rule_template };

struct ConstraintDecl {
    ConstraintKind kind;
    nlohmann::json params;
};

// Entity types, relationships and domain constraints of the enterprise data.
//
// JSON shape:
//   {"entity_types": [{"name", "table"?, "key",
//                      "attributes": [{"column", "predicate", "type", "values"?}]}],
//    "relationships": [{"name", "from", "to", "via": {"table", "column"}}],
//    "constraints": [{"kind": "status_domain", "entity", "attribute", "value", "through"},
//                    {"kind": "required_relationship", "entity", "relationship"},
//                    {"kind": "rule_template", "head", "body"}]}
struct EntitySchema {
    std::vector<EntityType> entity_types;
    std::vector<Relationship> relationships;
    std::vector<ConstraintDecl> constraints;

    const EntityType* entity(std::string_view name) const;
    const EntityType* entity_for_table(std::string_view table) const;
    const Relationship* relationship(std::string_view name) const;

    // Relationships whose foreign-key column lives in `table`.
    std::vector<const Relationship*> references_from(std::string_view table) const;

    // Predicates that kg_to_facts may emit: entity names (arity 1), attribute
    // predicates and relationship names (arity 2), as `name/arity` strings.
    std::set<std::string> fact_predicates() const;
};

// Parses and checks a schema document. Throws Error{invalid_config} on shape
// errors, duplicate names, or relationships naming undeclared endpoints.
EntitySchema parse_schema(const nlohmann::json& doc);
EntitySchema load_schema(const std::string& path);

// Node id for an entity key: lowercased with non-word characters replaced by
// `_`, then prefixed with the entity type's initial if it is still not an ABL
// atom.
std::string mangle_key(std::string_view raw, std::string_view entity_type);

// Foundational rules derived from schema constraints, in declaration order.
// Throws Error{unsafe_rule} when a template head variable is not bound by a
// positive body literal.
std::vector<logic::Clause> schema_to_rules(const EntitySchema& schema);

}  // namespace autobus::semantics
