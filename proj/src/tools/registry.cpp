#include "autobus/tools/registry.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/unify.hpp"

#include <openssl/evp.h>

#include <set>
#include <unordered_set>

namespace autobus::tools {

using logic::Clause;
using logic::Term;

std::string_view to_string(ToolKind k) { return k == ToolKind::grounding ? "grounding" : "action"; }
std::string_view to_string(Impact i) { return i == Impact::high ? "high" : "normal"; }
std::string_view to_string(Transport t) { return t == Transport::http ? "http" : "in_process"; }

nlohmann::json to_json(const ToolDescriptor& d) {
    nlohmann::json j{{"name", d.name},
                     {"kind", to_string(d.kind)},
                     {"signature", d.signature.str()},
                     {"impact", to_string(d.impact)},
                     {"transport", to_string(d.transport)},
                     {"idempotent", d.idempotent}};
    if (d.kind == ToolKind::grounding) j["inputs"] = d.inputs;
    if (!d.endpoint.empty()) j["endpoint"] = d.endpoint;
    if (!d.description.empty()) j["description"] = d.description;
    return j;
}

std::string idempotency_key(std::string_view run_id, std::string_view task_id, std::string_view tool,
                            const Term& params) {
    std::string material;
    for (std::string_view part : {run_id, task_id, tool}) {
        material += part;
        material += '\x1f';
    }
    material += logic::to_string(params);

    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(material.data(), material.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xf];
    }
    return out;
}

void RunStore::append_fact(const std::string& store, const Clause& fact) {
    std::string key = logic::to_string(fact);
    std::lock_guard lock(mu_);
    auto& keys = fact_keys_[store];
    if (std::find(keys.begin(), keys.end(), key) != keys.end()) return;
    keys.push_back(key);
    facts_[store].push_back(fact);
}

std::map<std::string, std::vector<Clause>> RunStore::facts() const {
    std::lock_guard lock(mu_);
    return facts_;
}

std::vector<Clause> RunStore::facts(const std::string& store) const {
    std::lock_guard lock(mu_);
    auto it = facts_.find(store);
    return it == facts_.end() ? std::vector<Clause>{} : it->second;
}

void RunStore::add_receipt(Receipt r) {
    std::lock_guard lock(mu_);
    receipts_.push_back(std::move(r));
}

std::vector<Receipt> RunStore::receipts() const {
    std::lock_guard lock(mu_);
    return receipts_;
}

std::size_t RunStore::effect_count(const std::string& tool) const {
    std::lock_guard lock(mu_);
    return static_cast<std::size_t>(
        std::count_if(receipts_.begin(), receipts_.end(), [&](const Receipt& r) { return r.tool == tool; }));
}

std::optional<ToolResult> RunStore::acquire(const std::string& key) {
    std::unique_lock lock(mu_);
    released_.wait(lock, [&] { return !in_flight_.count(key); });
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    in_flight_.insert(key);
    return std::nullopt;
}

void RunStore::release(const std::string& key, const std::optional<ToolResult>& result) {
    {
        std::lock_guard lock(mu_);
        in_flight_.erase(key);
        if (result) cache_.insert_or_assign(key, *result);
    }
    released_.notify_all();
}

void ToolRegistry::register_tool(ToolDescriptor d, ToolHandler handler) {
    if (!logic::is_atom_name(d.name)) throw Error(ErrorCode::invalid_config, "tool name " + d.name + " is not an atom");
    if (!handler) throw Error(ErrorCode::invalid_config, "tool " + d.name + " has no handler");
    if (d.kind == ToolKind::grounding) {
        if (d.signature.name.empty() || d.signature.arity == 0) {
            throw Error(ErrorCode::invalid_config, "grounding tool " + d.name + " must declare the predicate it produces");
        }
        if (d.inputs >= d.signature.arity) {
            throw Error(ErrorCode::invalid_config, "grounding tool " + d.name + " must leave at least one output argument");
        }
    }
    if (d.transport == Transport::http && d.endpoint.empty()) {
        throw Error(ErrorCode::invalid_config, "http tool " + d.name + " has no endpoint");
    }
    if (tools_.count(d.name)) throw Error(ErrorCode::duplicate_tool, "tool " + d.name + " is already registered");
    std::string name = d.name;
    tools_.emplace(std::move(name), Entry{std::move(d), std::move(handler)});
}

const ToolDescriptor* ToolRegistry::find(std::string_view name) const {
    auto it = tools_.find(name);
    return it == tools_.end() ? nullptr : &it->second.descriptor;
}

std::vector<ToolDescriptor> ToolRegistry::catalog() const {
    std::vector<ToolDescriptor> out;
    for (const auto& [_, e] : tools_) out.push_back(e.descriptor);
    return out;
}

std::string ToolRegistry::catalog_summary() const {
    std::string out;
    for (const auto& [name, e] : tools_) {
        const auto& d = e.descriptor;
        out += name + ": " + std::string(to_string(d.kind)) + " " + d.signature.str();
        if (d.kind == ToolKind::grounding) out += " inputs=" + std::to_string(d.inputs);
        out += " impact=" + std::string(to_string(d.impact));
        out += " transport=" + std::string(to_string(d.transport));
        if (!d.description.empty()) out += " - " + d.description;
        out += '\n';
    }
    return out;
}

const ToolDescriptor* ToolRegistry::producer_of(const logic::Indicator& ind) const {
    for (const auto& [_, e] : tools_) {
        if (e.descriptor.kind == ToolKind::grounding && e.descriptor.signature == ind) return &e.descriptor;
    }
    return nullptr;
}

namespace {

void check_facts(const ToolDescriptor& d, const ToolResult& r) {
    for (const auto& f : r.facts_out) {
        if (!f.is_ground_fact() || f.indicator() != d.signature) {
            throw Error(ErrorCode::signature_mismatch, "tool " + d.name + " returned " + logic::to_string(f) +
                                                           ", expected a ground " + d.signature.str() + " fact");
        }
    }
}

}  // namespace

ToolResult ToolRegistry::invoke(const ToolInvocation& inv, ToolContext& ctx) const {
    auto it = tools_.find(inv.tool);
    if (it == tools_.end()) throw Error(ErrorCode::unknown_tool, "unknown tool " + inv.tool);
    const Entry& entry = it->second;
    const ToolDescriptor& d = entry.descriptor;
    if (!inv.params.is_ground()) {
        throw Error(ErrorCode::nonground_params, "params for " + inv.tool + " are not ground: " + logic::to_string(inv.params));
    }
    if (d.kind == ToolKind::action && !d.signature.name.empty() &&
        (!inv.params.is_callable() || logic::indicator_of(inv.params) != d.signature)) {
        throw Error(ErrorCode::signature_mismatch, "tool " + d.name + " expects " + d.signature.str() + " params, got " +
                                                       logic::to_string(inv.params));
    }

    ToolContext call = ctx;
    call.idempotency_key = inv.idempotency_key;
    bool use_cache = d.idempotent && !inv.idempotency_key.empty() && ctx.store;
    if (use_cache) {
        if (auto hit = ctx.store->acquire(inv.idempotency_key)) return *hit;
    }
    ToolResult result;
    try {
        result = entry.handler(inv.params, call);
        if (d.kind == ToolKind::grounding && result.ok()) check_facts(d, result);
    } catch (...) {
        if (use_cache) ctx.store->release(inv.idempotency_key, std::nullopt);
        throw;
    }
    if (result.ok() && d.kind == ToolKind::action && ctx.store) {
        ctx.store->add_receipt(
            Receipt{d.name, inv.idempotency_key, logic::to_string(inv.params), ctx.task_id, result.receipt});
    }
    if (use_cache) ctx.store->release(inv.idempotency_key, result.ok() ? std::optional<ToolResult>(result) : std::nullopt);
    return result;
}

Term grounding_params(const std::vector<Term>& inputs) {
    if (inputs.size() == 1) return inputs[0];
    return Term::list(inputs);
}

Grounding ground_predicate(const ToolRegistry& registry, const logic::Indicator& predicate,
                           const std::vector<std::vector<Term>>& bindings_needed, ToolContext& ctx) {
    const ToolDescriptor* producer = registry.producer_of(predicate);
    if (!producer) throw Error(ErrorCode::no_producer, "no registered tool produces " + predicate.str());
    Grounding out;
    std::unordered_set<Term, logic::TermHash> seen_inputs;
    std::unordered_set<Term, logic::TermHash> seen_facts;
    for (const auto& inputs : bindings_needed) {
        if (inputs.size() != producer->inputs) {
            throw Error(ErrorCode::signature_mismatch, producer->name + " takes " + std::to_string(producer->inputs) +
                                                           " inputs, got " + std::to_string(inputs.size()));
        }
        Term params = grounding_params(inputs);
        if (!seen_inputs.insert(params).second) continue;
        ToolInvocation inv{producer->name, params, idempotency_key(ctx.run_id, ctx.task_id, producer->name, params)};
        ToolResult r = registry.invoke(inv, ctx);
        ++out.calls;
        if (!r.ok()) {
            throw Error(ErrorCode::tool_failed, producer->name + "(" + logic::to_string(params) + ") failed: " + r.error);
        }
        for (const auto& f : r.facts_out) {
            if (seen_facts.insert(f.head).second) out.facts.push_back(f);
        }
    }
    return out;
}

}  // namespace autobus::tools
