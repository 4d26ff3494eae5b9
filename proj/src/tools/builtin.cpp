#include "autobus/tools/builtin.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"

#include "httplib.h"

#include <fstream>
#include <thread>

namespace autobus::tools {

using logic::Clause;
using logic::Term;

namespace {

ToolResult failed(std::string why) {
    ToolResult r;
    r.status = ToolResult::Status::failed;
    r.error = std::move(why);
    return r;
}

std::string lexical(const Term& t) {
    if (t.is_atom() || t.kind() == logic::TermKind::string) return t.name();
    return logic::to_string(t);
}

logic::Indicator parse_indicator(const std::string& s, const std::string& tool) {
    auto slash = s.rfind('/');
    if (slash == std::string::npos || slash == 0) {
        throw Error(ErrorCode::invalid_config, "tool " + tool + ": signature must look like name/arity, got " + s);
    }
    try {
        return logic::Indicator{s.substr(0, slash), static_cast<std::size_t>(std::stoul(s.substr(slash + 1)))};
    } catch (const std::exception&) {
        throw Error(ErrorCode::invalid_config, "tool " + tool + ": bad arity in " + s);
    }
}

}  // namespace

ToolDescriptor persist_descriptor() {
    ToolDescriptor d;
    d.name = "persist";
    d.kind = ToolKind::action;
    d.signature = logic::Indicator{"persist", 2};
    d.description = "append a ground outcome fact to the run store";
    return d;
}

ToolHandler persist_handler() {
    return [](const Term& params, ToolContext& ctx) {
        const Term& store = params.args()[0];
        const Term& fact = params.args()[1];
        if (!store.is_atom()) return failed("persist store must be an atom, got " + logic::to_string(store));
        if (!fact.is_callable()) return failed("persist fact must be an atom or compound, got " + logic::to_string(fact));
        if (!ctx.store) return failed("no run store");
        ctx.store->append_fact(store.name(), logic::make_fact(fact));
        ToolResult r;
        r.receipt = {{"store", store.name()}, {"fact", logic::to_string(fact)}};
        return r;
    };
}

ToolHandler recorder_handler() {
    return [](const Term& params, ToolContext&) {
        if (!params.is_compound() || params.arity() != 2) {
            return failed("expected F(Campaign, Recipients), got " + logic::to_string(params));
        }
        nlohmann::json recipients = nlohmann::json::array();
        const Term& who = params.args()[1];
        if (who.is_list()) {
            for (const auto& r : who.args()) recipients.push_back(lexical(r));
        } else if (!who.is_nil()) {
            recipients.push_back(lexical(who));
        }
        ToolResult r;
        r.receipt = {{"campaign", lexical(params.args()[0])}, {"recipients", recipients}};
        return r;
    };
}

ToolHandler fixture_handler(std::string predicate, std::map<std::string, Term> table) {
    return [predicate = std::move(predicate), table = std::move(table)](const Term& params, ToolContext&) {
        auto it = table.find(lexical(params));
        if (it == table.end()) return failed("no " + predicate + " entry for " + logic::to_string(params));
        ToolResult r;
        r.facts_out.push_back(logic::make_fact(Term::compound(predicate, {params, it->second})));
        return r;
    };
}

std::map<std::string, Term> load_fixture(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read fixture " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorCode::invalid_config, path.string() + ": fixture must be a JSON object");
    std::map<std::string, Term> out;
    for (const auto& [k, v] : doc.items()) {
        if (v.is_number_integer()) {
            out.emplace(k, Term::integer(v.get<std::int64_t>()));
        } else if (v.is_number()) {
            out.emplace(k, Term::floating(v.get<double>()));
        } else if (v.is_string()) {
            std::string s = v.get<std::string>();
            out.emplace(k, logic::is_atom_name(s) ? Term::atom(s) : Term::string(s));
        } else {
            throw Error(ErrorCode::invalid_config, path.string() + ": value for " + k + " must be a number or string");
        }
    }
    return out;
}

ToolHandler http_handler(std::string tool, std::string endpoint, RetryPolicy policy) {
    // Split "http://host:port/path" into the client base and request path.
    auto scheme = endpoint.find("://");
    auto path_at = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string base = path_at == std::string::npos ? endpoint : endpoint.substr(0, path_at);
    std::string path = path_at == std::string::npos ? "/" : endpoint.substr(path_at);

    return [tool = std::move(tool), base, path, policy](const Term& params, ToolContext& ctx) {
        nlohmann::json req{{"tool", tool}, {"params", logic::to_string(params)}, {"idempotency_key", ctx.idempotency_key}};
        std::string body = req.dump();
        std::string last_error;
        for (int attempt = 0; attempt < policy.attempts; ++attempt) {
            if (attempt > 0) std::this_thread::sleep_for(policy.base_delay * (1 << (attempt - 1)));
            httplib::Client client(base);
            client.set_connection_timeout(2);
            client.set_read_timeout(10);
            auto res = client.Post(path, body, "application/json");
            if (!res) {
                last_error = httplib::to_string(res.error());
                continue;
            }
            if (res->status == 502 || res->status == 503 || res->status == 504) {
                last_error = "HTTP " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200) return failed("HTTP " + std::to_string(res->status) + ": " + res->body);
            nlohmann::json resp;
            try {
                resp = nlohmann::json::parse(res->body);
            } catch (const nlohmann::json::exception& e) {
                return failed(std::string("malformed response: ") + e.what());
            }
            if (resp.value("status", std::string("failed")) != "ok") return failed(resp.value("error", std::string("tool failed")));
            ToolResult r;
            for (const auto& line : resp.value("facts", nlohmann::json::array())) {
                logic::Program p = logic::parse_program(line.get<std::string>());
                for (const auto& c : p.clauses()) r.facts_out.push_back(c);
            }
            r.receipt = resp.value("receipt", nlohmann::json());
            return r;
        }
        throw Error(ErrorCode::transport_failure, "tool " + tool + " unreachable after " +
                                                      std::to_string(policy.attempts) + " attempts: " + last_error);
    };
}

ToolRegistry load_catalog(const nlohmann::json& doc, const std::filesystem::path& base_dir, RetryPolicy policy) {
    ToolRegistry reg;
    reg.register_tool(persist_descriptor(), persist_handler());
    if (!doc.is_object() || !doc.contains("tools") || !doc["tools"].is_array()) {
        throw Error(ErrorCode::invalid_config, "tool catalog must be {\"tools\": [...]}");
    }
    for (const auto& t : doc["tools"]) {
        ToolDescriptor d;
        d.name = t.value("name", std::string());
        if (d.name.empty()) throw Error(ErrorCode::invalid_config, "tool without a name");
        std::string kind = t.value("kind", std::string("action"));
        if (kind != "grounding" && kind != "action") throw Error(ErrorCode::invalid_config, "tool " + d.name + ": unknown kind " + kind);
        d.kind = kind == "grounding" ? ToolKind::grounding : ToolKind::action;
        if (t.contains("signature")) d.signature = parse_indicator(t["signature"].get<std::string>(), d.name);
        d.inputs = t.value("inputs", std::size_t{0});
        std::string impact = t.value("impact", std::string("normal"));
        if (impact != "normal" && impact != "high") throw Error(ErrorCode::invalid_config, "tool " + d.name + ": unknown impact " + impact);
        d.impact = impact == "high" ? Impact::high : Impact::normal;
        std::string transport = t.value("transport", std::string("in_process"));
        if (transport != "in_process" && transport != "http") {
            throw Error(ErrorCode::invalid_config, "tool " + d.name + ": unknown transport " + transport);
        }
        d.transport = transport == "http" ? Transport::http : Transport::in_process;
        d.endpoint = t.value("endpoint", std::string());
        d.idempotent = t.value("idempotent", true);
        d.description = t.value("description", std::string());

        ToolHandler handler;
        if (d.transport == Transport::http) {
            handler = http_handler(d.name, d.endpoint, policy);
        } else {
            std::string h = t.value("handler", std::string());
            if (h == "recorder") {
                handler = recorder_handler();
            } else if (h == "fixture") {
                if (d.kind != ToolKind::grounding) throw Error(ErrorCode::invalid_config, "tool " + d.name + ": fixture handler needs a grounding tool");
                handler = fixture_handler(d.signature.name, load_fixture(base_dir / t.value("fixture", std::string())));
            } else {
                throw Error(ErrorCode::invalid_config, "tool " + d.name + ": unknown in-process handler \"" + h + "\"");
            }
        }
        reg.register_tool(std::move(d), std::move(handler));
    }
    return reg;
}

ToolRegistry load_catalog_file(const std::filesystem::path& path, RetryPolicy policy) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
    }
    return load_catalog(doc, path.parent_path(), policy);
}

}  // namespace autobus::tools
