#include "autobus/semantics/graph.hpp"

#include "autobus/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <unordered_set>

namespace autobus::semantics {

using logic::Clause;
using logic::Term;

namespace {

bool same_node(const Node& a, const Node& b) {
    return a.id == b.id && a.kind == b.kind && a.type == b.type && a.lexical == b.lexical && a.term == b.term;
}

std::optional<Term> parse_number(std::string_view s) {
    if (s.empty()) return std::nullopt;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    if (s.find_first_of(".eE") == std::string_view::npos) {
        std::int64_t v = 0;
        auto [p, ec] = std::from_chars(first, last, v);
        if (ec == std::errc() && p == last) return Term::integer(v);
        return std::nullopt;
    }
    double d = 0;
    auto [p, ec] = std::from_chars(first, last, d);
    if (ec == std::errc() && p == last && std::isfinite(d)) return Term::floating(d);
    return std::nullopt;
}

Term text_term(std::string_view s) {
    if (logic::is_atom_name(s)) return Term::atom(std::string(s));
    return Term::string(std::string(s));
}

}  // namespace

const Node& KnowledgeGraph::add_node(Node node) {
    auto it = by_id_.find(node.id);
    if (it != by_id_.end()) {
        const Node& existing = nodes_[it->second];
        if (existing.kind != node.kind || existing.type != node.type) {
            throw Error(ErrorCode::kind_conflict, "node " + node.id + " is both " + existing.type + " and " + node.type);
        }
        return existing;
    }
    by_id_.emplace(node.id, nodes_.size());
    nodes_.push_back(std::move(node));
    return nodes_.back();
}

void KnowledgeGraph::add_triple(KGTriple triple) {
    if (triple.predicate.empty()) throw Error(ErrorCode::invalid_input, "triple with empty predicate");
    if (!find(triple.subject)) {
        throw Error(ErrorCode::dangling_reference, "triple subject " + triple.subject + " is not a node");
    }
    if (!find(triple.object)) {
        throw Error(ErrorCode::dangling_reference, "triple object " + triple.object + " is not a node");
    }
    triples_.push_back(std::move(triple));
}

const Node* KnowledgeGraph::find(std::string_view id) const {
    auto it = by_id_.find(std::string(id));
    return it == by_id_.end() ? nullptr : &nodes_[it->second];
}

std::size_t KnowledgeGraph::entity_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.kind == NodeKind::entity; }));
}

std::size_t KnowledgeGraph::value_count() const { return nodes_.size() - entity_count(); }

bool operator==(const KnowledgeGraph& a, const KnowledgeGraph& b) {
    return a.triples_ == b.triples_ &&
           std::equal(a.nodes_.begin(), a.nodes_.end(), b.nodes_.begin(), b.nodes_.end(), same_node);
}

std::string value_node_id(AttrType type, std::string_view lexical) {
    return "v:" + std::string(to_string(type)) + ":" + std::string(lexical);
}

Term coerce_value(const AttributeDecl& attr, std::string_view raw) {
    switch (attr.type) {
    case AttrType::number:
        if (auto t = parse_number(raw)) return *t;
        throw Error(ErrorCode::type_coercion, "\"" + std::string(raw) + "\" is not a number");
    case AttrType::id:
        if (raw.empty()) throw Error(ErrorCode::type_coercion, "empty identifier");
        return Term::atom(mangle_key(raw, ""));
    case AttrType::enumeration:
        if (std::find(attr.values.begin(), attr.values.end(), raw) == attr.values.end()) {
            throw Error(ErrorCode::type_coercion, "\"" + std::string(raw) + "\" is not one of the declared values");
        }
        return text_term(raw);
    case AttrType::text:
        return text_term(raw);
    }
    return text_term(raw);
}

KnowledgeGraph ingest_table(const Table& table, const EntitySchema& schema, std::string_view entity_type) {
    const EntityType* et = schema.entity(entity_type);
    if (!et) throw Error(ErrorCode::invalid_input, "undeclared entity type " + std::string(entity_type));
    std::string where = "table " + (table.name.empty() ? et->table : table.name);

    auto key_col = table.column(et->key);
    if (!key_col) throw Error(ErrorCode::missing_column, where + ": missing key column " + et->key);
    std::vector<std::size_t> attr_cols;
    for (const auto& a : et->attributes) {
        auto c = table.column(a.column);
        if (!c) throw Error(ErrorCode::missing_column, where + ": missing column " + a.column);
        attr_cols.push_back(*c);
    }
    struct Ref {
        const Relationship* rel;
        std::size_t col;
    };
    std::vector<Ref> refs;
    for (const Relationship* rel : schema.references_from(et->table)) {
        auto c = table.column(rel->via_column);
        if (!c) throw Error(ErrorCode::missing_column, where + ": missing column " + rel->via_column);
        refs.push_back(Ref{rel, *c});
    }

    KnowledgeGraph kg;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        std::string row_at = where + " row " + std::to_string(r + 1);
        const Cell& key = row[*key_col];
        if (!key || key->empty()) throw Error(ErrorCode::missing_column, row_at + ": key " + et->key + " is null");
        std::string id = mangle_key(*key, et->name);
        if (kg.find(id)) throw Error(ErrorCode::duplicate_key, row_at + ": duplicate key " + *key + " (node " + id + ")");
        kg.add_node(Node{id, NodeKind::entity, et->name, *key, Term::atom(id)});

        for (std::size_t i = 0; i < et->attributes.size(); ++i) {
            const AttributeDecl& attr = et->attributes[i];
            const Cell& cell = row[attr_cols[i]];
            if (!cell) continue;
            Term value = [&] {
                try {
                    return coerce_value(attr, *cell);
                } catch (const Error& e) {
                    throw Error(ErrorCode::type_coercion, row_at + " column " + attr.column + ": " + e.what());
                }
            }();
            std::string vid = value_node_id(attr.type, *cell);
            kg.add_node(Node{vid, NodeKind::value, std::string(to_string(attr.type)), *cell, value});
            kg.add_triple(KGTriple{id, attr.predicate, vid, TripleKind::attribute});
        }
        for (const auto& ref : refs) {
            const Cell& cell = row[ref.col];
            if (!cell || cell->empty()) continue;
            std::string vid = value_node_id(AttrType::id, *cell);
            kg.add_node(Node{vid, NodeKind::value, "id", *cell, Term::atom(mangle_key(*cell, ""))});
            kg.add_triple(KGTriple{id, ref.rel->name, vid, TripleKind::reference});
        }
    }
    return kg;
}

KnowledgeGraph link_shared_values(const std::vector<KnowledgeGraph>& fragments, const EntitySchema& schema) {
    KnowledgeGraph merged;
    for (const auto& f : fragments) {
        for (const auto& n : f.nodes()) merged.add_node(n);
    }
    std::vector<KGTriple> triples;
    for (const auto& f : fragments) {
        for (const auto& t : f.triples()) {
            if (t.kind != TripleKind::reference) {
                triples.push_back(t);
                continue;
            }
            const Relationship* rel = schema.relationship(t.predicate);
            const Node* row = merged.find(t.subject);
            const Node* key = merged.find(t.object);
            if (!rel || !row || !key) {
                throw Error(ErrorCode::dangling_reference, "unresolvable reference " + t.subject + " " + t.predicate);
            }
            bool row_is_to = rel->via_table == schema.entity(rel->to)->table;
            std::string other = row_is_to ? rel->from : rel->to;
            std::string target_id = mangle_key(key->lexical, other);
            const Node* target = merged.find(target_id);
            if (!target || target->kind != NodeKind::entity || target->type != other) {
                throw Error(ErrorCode::dangling_reference, rel->name + ": " + row->type + " " + row->lexical +
                                                               " references " + other + " " + key->lexical +
                                                               ", which does not exist");
            }
            if (row_is_to) {
                triples.push_back(KGTriple{target->id, rel->name, row->id, TripleKind::relationship});
            } else {
                triples.push_back(KGTriple{row->id, rel->name, target->id, TripleKind::relationship});
            }
        }
    }

    std::unordered_set<std::string> referenced;
    for (const auto& t : triples) referenced.insert(t.object);
    KnowledgeGraph out;
    for (const auto& n : merged.nodes()) {
        if (n.kind == NodeKind::value && !referenced.count(n.id)) continue;
        out.add_node(n);
    }
    for (auto& t : triples) out.add_triple(std::move(t));
    return out;
}

logic::Program FactSet::program() const {
    std::vector<Clause> all = facts;
    all.insert(all.end(), foundational_rules.begin(), foundational_rules.end());
    return logic::Program::of(std::move(all), logic::Partition::facts_foundational);
}

std::string FactSet::to_abl() const { return logic::render(program()); }

FactSet kg_to_facts(const KnowledgeGraph& kg, const EntitySchema& schema) {
    std::set<std::string> declared = schema.fact_predicates();
    FactSet out;
    for (const auto& n : kg.nodes()) {
        if (n.kind != NodeKind::entity) continue;
        if (!declared.count(n.type + "/1")) {
            throw Error(ErrorCode::undeclared_predicate, "entity type " + n.type + " is not declared");
        }
        out.facts.push_back(logic::make_fact(Term::compound(n.type, {n.term})));
    }
    auto emit = [&](TripleKind kind) {
        for (const auto& t : kg.triples()) {
            if (t.kind == TripleKind::reference) {
                throw Error(ErrorCode::dangling_reference,
                            "unresolved reference " + t.subject + " " + t.predicate + " " + t.object);
            }
            if (t.kind != kind) continue;
            if (!declared.count(t.predicate + "/2")) {
                throw Error(ErrorCode::undeclared_predicate,
                            "triple (" + t.subject + ", " + t.predicate + ", " + t.object + ") uses an undeclared predicate");
            }
            out.facts.push_back(
                logic::make_fact(Term::compound(t.predicate, {kg.find(t.subject)->term, kg.find(t.object)->term})));
        }
    };
    emit(TripleKind::relationship);
    emit(TripleKind::attribute);
    return out;
}

FactSet build_fact_set(const TableSet& tables, const EntitySchema& schema) {
    std::vector<KnowledgeGraph> fragments;
    for (const auto& et : schema.entity_types) {
        auto it = tables.find(et.table);
        if (it != tables.end()) fragments.push_back(ingest_table(it->second, schema, et.name));
    }
    FactSet fs = kg_to_facts(link_shared_values(fragments, schema), schema);
    fs.foundational_rules = schema_to_rules(schema);
    return fs;
}

TableSet read_tables(const std::string& dir, const EntitySchema& schema) {
    namespace fs = std::filesystem;
    TableSet out;
    for (const auto& et : schema.entity_types) {
        fs::path csv = fs::path(dir) / (et.table + ".csv");
        fs::path json = fs::path(dir) / (et.table + ".json");
        if (fs::exists(csv)) {
            out.emplace(et.table, read_table(csv));
        } else if (fs::exists(json)) {
            out.emplace(et.table, read_table(json));
        } else {
            throw Error(ErrorCode::io_error, "no table file for " + et.table + " in " + dir);
        }
    }
    return out;
}

}  // namespace autobus::semantics
