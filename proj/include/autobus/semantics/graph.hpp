#pragma once

#include "autobus/logic/program.hpp"
#include "autobus/semantics/schema.hpp"
#include "autobus/semantics/table.hpp"

#include <map>
#include <string>
#include <unordered_map>
#include <vector>

namespace autobus::semantics {

enum class NodeKind { entity, value };

struct Node {
    std::string id;
    NodeKind kind;
    // Entity type name for entities; attribute type name for values.
    std::string type;
    // Raw key for entities; lexical form for values.
    std::string lexical;
    // The ABL term standing for this node in facts.
    logic::Term term;
};

enum class TripleKind {
    attribute,     // entity -> value node
    relationship,  // entity -> entity
    reference,     // entity -> foreign key value, not yet resolved to an entity
};

struct KGTriple {
    std::string subject;
    std::string predicate;
    std::string object;
    TripleKind kind;

    friend bool operator==(const KGTriple&, const KGTriple&) = default;
};

// Nodes in insertion order plus an ordered triple list. Value nodes are keyed
// by (type, lexical form), so equal values share one node.
class KnowledgeGraph {
public:
    // Adds a node, or returns the existing one with the same id. Throws
    // Error{kind_conflict} if the id is taken by a node of another kind or type.
    const Node& add_node(Node node);
    // Throws Error{dangling_reference} if either endpoint is not a node.
    void add_triple(KGTriple triple);

    const Node* find(std::string_view id) const;
    const std::vector<Node>& nodes() const noexcept { return nodes_; }
    const std::vector<KGTriple>& triples() const noexcept { return triples_; }

    std::size_t entity_count() const;
    std::size_t value_count() const;

    friend bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b);

private:
    friend KnowledgeGraph link_shared_values(const std::vector<KnowledgeGraph>&, const EntitySchema&);

    std::vector<Node> nodes_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::vector<KGTriple> triples_;
};

std::string value_node_id(AttrType type, std::string_view lexical);

// Term for a raw cell value of the given attribute type. Throws
// Error{type_coercion} if the text does not fit the type.
logic::Term coerce_value(const AttributeDecl& attr, std::string_view raw);

// Star-shaped fragment for one entity type: one entity node per row, one
// attribute triple per non-null declared column, and one reference triple per
// non-null foreign-key column of a relationship whose via table is this one.
//
// Throws Error{missing_column}, Error{duplicate_key}, Error{type_coercion}.
KnowledgeGraph ingest_table(const Table& table, const EntitySchema& schema, std::string_view entity_type);

// Merges fragments (shared value nodes collapse into one) and resolves
// reference triples into relationship triples `rel(From, To)`. Value nodes
// left without triples after resolution are dropped.
//
// Throws Error{kind_conflict}, Error{dangling_reference}.
KnowledgeGraph link_shared_values(const std::vector<KnowledgeGraph>& fragments, const EntitySchema& schema);

struct FactSet {
    std::vector<logic::Clause> facts;
    std::vector<logic::Clause> foundational_rules;

    // Facts then rules, all in the facts_foundational partition.
    logic::Program program() const;
    std::string to_abl() const;
};

// Entity facts `type(id)` in node order, then relationship facts, then
// attribute facts, each in triple order.
//
// Throws Error{undeclared_predicate} for a triple the schema does not declare,
// Error{dangling_reference} for an unresolved reference triple.
FactSet kg_to_facts(const KnowledgeGraph& kg, const EntitySchema& schema);

// Tables keyed by table name.
using TableSet = std::map<std::string, Table>;

// Ingests every entity type whose table is present, links, compiles facts and
// adds schema_to_rules output.
FactSet build_fact_set(const TableSet& tables, const EntitySchema& schema);

// Reads `<dir>/<table>.csv` (or `.json`) for each entity type in the schema.
TableSet read_tables(const std::string& dir, const EntitySchema& schema);

}  // namespace autobus::semantics
