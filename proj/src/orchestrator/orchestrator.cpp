#include "autobus/orchestrator/orchestrator.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"
#include "autobus/logic/solver.hpp"
#include "autobus/logic/unify.hpp"
#include "autobus/semantics/schema.hpp"
#include "autobus/tools/builtin.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <set>

namespace autobus::orchestrator {

using initiative::ExecutionState;
using initiative::TaskStatus;
using logic::Clause;
using logic::Term;

namespace {

constexpr EventKind kAllKinds[] = {
    EventKind::run_started,   EventKind::task_ready,     EventKind::program_synthesized,
    EventKind::approval_requested, EventKind::approval_decided, EventKind::grounding_fetched,
    EventKind::task_completed, EventKind::task_failed,   EventKind::action_invoked,
    EventKind::initiative_evaluated, EventKind::run_finished,
};

std::string now_iso() {
    auto now = std::chrono::system_clock::now();
    auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

nlohmann::json clause_texts(const std::vector<Clause>& cs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& c : cs) out.push_back(logic::to_string(c));
    return out;
}

std::string abl_lines(const std::vector<Clause>& cs) {
    std::string out;
    for (const auto& c : cs) out += logic::to_string(c) + '\n';
    return out;
}

Term conjunction(const std::vector<logic::Literal>& lits, std::size_t n) {
    if (n == 0) return Term::atom("true");
    Term goal = lits[n - 1].as_goal();
    for (std::size_t i = n - 1; i-- > 0;) goal = Term::compound(",", {lits[i].as_goal(), goal});
    return goal;
}

void append_unique(std::vector<Clause>& into, const std::vector<Clause>& more) {
    std::set<std::string> seen;
    for (const auto& c : into) seen.insert(logic::to_string(c));
    for (const auto& c : more) {
        if (seen.insert(logic::to_string(c)).second) into.push_back(c);
    }
}

nlohmann::json read_json_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + p.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, p.string() + ": " + e.what());
    }
}

}  // namespace

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::run_started: return "run_started";
    case EventKind::task_ready: return "task_ready";
    case EventKind::program_synthesized: return "program_synthesized";
    case EventKind::approval_requested: return "approval_requested";
    case EventKind::approval_decided: return "approval_decided";
    case EventKind::grounding_fetched: return "grounding_fetched";
    case EventKind::task_completed: return "task_completed";
    case EventKind::task_failed: return "task_failed";
    case EventKind::action_invoked: return "action_invoked";
    case EventKind::initiative_evaluated: return "initiative_evaluated";
    case EventKind::run_finished: return "run_finished";
    }
    return "?";
}

std::optional<EventKind> event_kind_from(std::string_view s) {
    for (EventKind k : kAllKinds) {
        if (to_string(k) == s) return k;
    }
    return std::nullopt;
}

nlohmann::json to_json(const Event& e) {
    return {{"seq", e.seq}, {"timestamp", e.timestamp}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

Event event_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("seq") || !j.contains("kind") || !j["seq"].is_number_unsigned() ||
        !j["kind"].is_string()) {
        throw Error(ErrorCode::invalid_input, "event needs a numeric seq and a kind");
    }
    auto kind = event_kind_from(j["kind"].get<std::string>());
    if (!kind) throw Error(ErrorCode::unknown_event, "unknown event kind " + j["kind"].get<std::string>());
    return Event{j["seq"].get<std::uint64_t>(), j.value("timestamp", std::string()), *kind,
                 j.value("payload", nlohmann::json::object())};
}

std::vector<Event> read_events(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    std::vector<Event> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(event_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorCode::invalid_input, path.string() + " line " + std::to_string(n) + ": " + e.what());
        } catch (const Error& e) {
            throw Error(e.code(), path.string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

std::string_view to_string(Decision d) {
    switch (d) {
    case Decision::pending: return "pending";
    case Decision::approved: return "approved";
    case Decision::rejected: return "rejected";
    }
    return "?";
}

std::optional<Decision> decision_from(std::string_view s) {
    for (Decision d : {Decision::pending, Decision::approved, Decision::rejected}) {
        if (to_string(d) == s) return d;
    }
    return std::nullopt;
}

nlohmann::json to_json(const ApprovalRequest& a) {
    return {{"id", a.id},          {"task", a.task_id}, {"program", a.program_text}, {"reasons", a.reasons},
            {"decision", to_string(a.decision)}, {"decider", a.decider}};
}

BundlePaths BundlePaths::in(const std::filesystem::path& dir) {
    return {dir / "schema.json", dir, dir / "initiative.json", dir / "instructions.json", dir / "params.json",
            dir / "tools.json", {}};
}

std::shared_ptr<const Bundle> load_bundle(const BundlePaths& paths) {
    auto named = [](const std::filesystem::path& file, auto step) {
        try {
            return step();
        } catch (const Error& e) {
            std::string msg = e.what();
            if (msg.find(file.string()) != std::string::npos) throw;
            throw Error(e.code(), file.string() + ": " + msg);
        }
    };
    auto b = std::make_shared<Bundle>();
    auto schema = named(paths.schema, [&] { return semantics::load_schema(paths.schema.string()); });
    b->facts = named(paths.tables, [&] {
        return semantics::build_fact_set(semantics::read_tables(paths.tables.string(), schema), schema);
    });
    b->spec = named(paths.initiative, [&] { return initiative::load_initiative(paths.initiative.string()); });
    nlohmann::json params = paths.params.empty() ? nlohmann::json::object() : read_json_file(paths.params);
    b->instructions = named(paths.instructions, [&] {
        return synthesis::parse_instructions(read_json_file(paths.instructions), params);
    });
    auto fixtures = paths.tool_fixtures.empty() ? paths.tools.parent_path() : paths.tool_fixtures;
    b->registry = named(paths.tools, [&] {
        return std::make_shared<const tools::ToolRegistry>(tools::load_catalog(read_json_file(paths.tools), fixtures));
    });
    b->agent = std::make_shared<const synthesis::TemplateAgent>();
    return b;
}

initiative::Environment environment(const Bundle& b) {
    initiative::Environment env;
    for (const auto& c : b.facts.facts) env.data_predicates.insert(c.indicator().str());
    for (const auto& c : b.facts.foundational_rules) env.data_predicates.insert(c.indicator().str());
    for (const auto& d : b.registry->catalog()) {
        env.tool_names.insert(d.name);
        if (d.kind == tools::ToolKind::grounding) env.tool_predicates.insert(d.signature.str());
    }
    return env;
}

nlohmann::json state_json(const ExecutionState& s) {
    nlohmann::json statuses = nlohmann::json::object();
    nlohmann::json iterations = nlohmann::json::object();
    for (const auto& [task, st] : s.statuses()) {
        statuses[task] = to_string(st);
        iterations[task] = s.iteration(task);
    }
    return {{"run_id", s.run_id()}, {"snapshot", s.snapshot()}, {"statuses", statuses},
            {"iterations", iterations}, {"outcomes", clause_texts(s.outcomes())}};
}

std::string_view to_string(RunPhase p) {
    switch (p) {
    case RunPhase::running: return "running";
    case RunPhase::awaiting_approval: return "awaiting_approval";
    case RunPhase::finished: return "finished";
    }
    return "?";
}

bool RunResult::all_completed() const {
    return !timed_out && std::all_of(statuses.begin(), statuses.end(),
                                     [](const auto& kv) { return kv.second == TaskStatus::completed; });
}

struct Run::Message {
    enum class Kind { executed, decision, abort } kind;
    std::string task;
    std::shared_ptr<Executed> result;
    std::string approval_id;
    std::string reason;
};

struct Run::Prepared {
    std::string task;
    std::optional<synthesis::LogicProgram> lp;
    std::string text;
    ValidationReport report;
    synthesis::ImpactClass impact;
    std::optional<Error> error;
};

struct Run::Executed {
    std::string task;
    std::vector<std::pair<EventKind, nlohmann::json>> events;
    std::vector<Clause> outcomes;
    std::vector<logic::Indicator> relations;
    std::optional<Error> error;
};

Run::Run(std::shared_ptr<const Bundle> bundle, RunConfig cfg)
    : bundle_(std::move(bundle)), cfg_(std::move(cfg)), store_(std::make_unique<tools::RunStore>()) {
    if (cfg_.run_id.empty()) cfg_.run_id = "run";
    if (!cfg_.run_dir.empty()) {
        std::filesystem::create_directories(cfg_.run_dir / "programs");
        std::filesystem::create_directories(cfg_.run_dir / "outcomes");
        log_ = std::make_unique<std::ofstream>(cfg_.run_dir / "events.jsonl", std::ios::binary | std::ios::trunc);
        if (!*log_) throw Error(ErrorCode::io_error, "cannot write " + (cfg_.run_dir / "events.jsonl").string());
    }
}

Run::~Run() {
    abort("shutdown");
    if (thread_.joinable()) thread_.join();
}

void Run::start() {
    std::lock_guard lock(mu_);
    if (started_) return;
    started_ = true;
    thread_ = std::thread([this] { loop(); });
}

void Run::wait() {
    std::unique_lock lock(mu_);
    changed_.wait(lock, [&] { return phase_ == RunPhase::finished; });
}

bool Run::wait_for(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return changed_.wait_for(lock, timeout, [&] { return phase_ == RunPhase::finished; });
}

void Run::abort(const std::string& reason) {
    {
        std::lock_guard lock(mu_);
        if (!started_ || phase_ == RunPhase::finished) return;
    }
    auto m = std::make_shared<Message>();
    m->kind = Message::Kind::abort;
    m->reason = reason;
    post(m);
}

RunPhase Run::phase() const {
    std::lock_guard lock(mu_);
    return phase_;
}

std::vector<Event> Run::events(std::uint64_t since) const {
    std::lock_guard lock(mu_);
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.seq > since) out.push_back(e);
    }
    return out;
}

bool Run::wait_events(std::uint64_t since, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    return changed_.wait_for(lock, timeout,
                             [&] { return events_.size() > since || phase_ == RunPhase::finished; }) &&
           events_.size() > since;
}

std::vector<ApprovalRequest> Run::approvals() const {
    std::lock_guard lock(mu_);
    return approvals_;
}

std::map<std::string, TaskStatus> Run::statuses() const {
    std::lock_guard lock(mu_);
    if (!state_) return {};
    return state_->statuses();
}

std::optional<std::string> Run::program(const std::string& task) const {
    std::lock_guard lock(mu_);
    auto it = programs_.find(task);
    if (it == programs_.end()) return std::nullopt;
    return it->second;
}

nlohmann::json Run::state() const {
    std::lock_guard lock(mu_);
    return state_ ? state_json(*state_) : nlohmann::json::object();
}

RunResult Run::result() const {
    std::lock_guard lock(mu_);
    return result_;
}

ApprovalRequest Run::submit_approval(const std::string& approval_id, Decision decision, const std::string& decider) {
    if (decision == Decision::pending) throw Error(ErrorCode::invalid_input, "decision must be approved or rejected");
    ApprovalRequest out;
    {
        std::lock_guard lock(mu_);
        auto it = std::find_if(approvals_.begin(), approvals_.end(),
                               [&](const ApprovalRequest& a) { return a.id == approval_id; });
        if (it == approvals_.end()) throw Error(ErrorCode::unknown_approval, "no approval " + approval_id + " in run " + id());
        if (it->decision != Decision::pending) {
            throw Error(ErrorCode::already_decided,
                        "approval " + approval_id + " was already " + std::string(to_string(it->decision)) + " by " + it->decider);
        }
        it->decision = decision;
        it->decider = decider;
        out = *it;
    }
    auto m = std::make_shared<Message>();
    m->kind = Message::Kind::decision;
    m->approval_id = approval_id;
    post(m);
    return out;
}

void Run::post(std::shared_ptr<Message> m) {
    {
        std::lock_guard lock(inbox_mu_);
        inbox_.push_back(std::move(m));
    }
    inbox_cv_.notify_all();
}

std::shared_ptr<Run::Message> Run::next_message() {
    std::unique_lock lock(inbox_mu_);
    inbox_cv_.wait(lock, [&] { return !inbox_.empty(); });
    auto m = inbox_.front();
    inbox_.pop_front();
    return m;
}

void Run::emit(EventKind kind, nlohmann::json payload) {
    std::lock_guard lock(mu_);
    Event e{events_.size() + 1, now_iso(), kind, std::move(payload)};
    if (log_) {
        *log_ << to_json(e).dump() << '\n';
        log_->flush();
    }
    events_.push_back(std::move(e));
    changed_.notify_all();
}

void Run::publish(const ExecutionState& s) {
    std::lock_guard lock(mu_);
    state_ = s;
    changed_.notify_all();
}

void Run::write_file(const std::filesystem::path& rel, const std::string& text) const {
    if (cfg_.run_dir.empty()) return;
    std::ofstream out(cfg_.run_dir / rel, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::io_error, "cannot write " + (cfg_.run_dir / rel).string());
    out << text;
}

Run::Prepared Run::prepare(const std::string& task, const std::vector<synthesis::PriorOutcome>& prior) const {
    Prepared p;
    p.task = task;
    try {
        const auto* spec = bundle_->spec.task(task);
        auto it = bundle_->instructions.find(spec->instruction);
        if (it == bundle_->instructions.end()) {
            throw Error(ErrorCode::invalid_instruction, "no instruction " + spec->instruction + " for task " + task);
        }
        auto lp = bundle_->agent->synthesize(it->second, bundle_->facts, prior, *bundle_->registry);
        p.text = synthesis::render_program(lp);
        p.report = synthesis::validate_program(lp, *bundle_->registry);
        // Tools outside the task's allowance are refused like unknown ones.
        std::set<std::string> allowed(spec->allowed_tools.begin(), spec->allowed_tools.end());
        allowed.insert("persist");
        for (const auto& c : lp.program.partition(logic::Partition::actions)) {
            if (c.head.name() != "invoke" || c.head.arity() != 2 || !c.head.args()[0].is_atom()) continue;
            const auto& tool = c.head.args()[0].name();
            if (!allowed.count(tool) && bundle_->registry->find(tool)) {
                p.report.error(ErrorCode::unregistered_tool, "tool " + tool + " is not allowed for task " + task, task);
            }
        }
        p.impact = synthesis::classify_impact(lp, *bundle_->registry, p.report);
        p.lp = std::move(lp);
    } catch (const Error& e) {
        p.error = e;
    }
    return p;
}

Run::Executed Run::execute(const std::string& task, synthesis::LogicProgram lp) const {
    Executed out;
    out.task = task;
    const auto& registry = *bundle_->registry;
    tools::ToolContext ctx{cfg_.run_id, task, "", store_.get()};
    try {
        // Ground tool-produced predicates in body order; each input tuple
        // comes from solving the literals before it.
        if (const Clause* rule = lp.target_rule()) {
            Clause target = *rule;
            for (std::size_t k = 0; k < target.body.size(); ++k) {
                const auto& lit = target.body[k];
                if (lit.negated()) continue;
                auto ind = logic::indicator_of(lit.goal);
                if (logic::is_builtin(ind) || lp.program.defines(ind)) continue;
                const auto* producer = registry.producer_of(ind);
                if (!producer) continue;
                std::vector<std::vector<Term>> tuples;
                std::set<std::string> seen;
                for (auto solutions = logic::solve(conjunction(target.body, k), lp.program);
                     auto s = solutions.next();) {
                    std::vector<Term> inputs;
                    std::string key;
                    for (std::size_t a = 0; a < producer->inputs; ++a) {
                        Term v = s->apply(lit.goal.args()[a]);
                        if (!v.is_ground()) {
                            throw Error(ErrorCode::nonground_params,
                                        "grounding " + ind.str() + ": input " + logic::to_string(v) + " is unbound");
                        }
                        key += logic::to_string(v) + "\n";
                        inputs.push_back(std::move(v));
                    }
                    if (seen.insert(key).second) tuples.push_back(std::move(inputs));
                }
                auto g = tools::ground_predicate(registry, ind, tuples, ctx);
                lp = synthesis::with_groundings(lp, producer->name, g.facts);
                out.events.emplace_back(EventKind::grounding_fetched,
                                        nlohmann::json{{"task", task}, {"tool", producer->name}, {"predicate", ind.str()},
                                                       {"calls", g.calls}, {"facts", g.facts.size()}});
            }
        }
        // Dispatch each distinct ground action.
        std::set<std::string> dispatched;
        for (const auto& action : lp.program.partition(logic::Partition::actions)) {
            const Term& head = action.head;
            if (head.name() == "persist" && head.arity() == 2 && head.args()[1].is_callable()) {
                auto ind = logic::indicator_of(head.args()[1]);
                if (std::find(out.relations.begin(), out.relations.end(), ind) == out.relations.end()) {
                    out.relations.push_back(ind);
                }
            }
            for (const Term& inst : logic::solve_all(action.head, lp.program)) {
                if (!dispatched.insert(logic::to_string(inst)).second) continue;
                if (!inst.is_ground()) {
                    throw Error(ErrorCode::nonground_params, "action " + logic::to_string(inst) + " is not ground");
                }
                bool persist = inst.name() == "persist";
                std::string tool = persist ? "persist" : inst.args()[0].name();
                Term params = persist ? inst : inst.args()[1];
                tools::ToolInvocation inv{tool, params, tools::idempotency_key(cfg_.run_id, task, tool, params)};
                ctx.idempotency_key = inv.idempotency_key;
                auto r = registry.invoke(inv, ctx);
                nlohmann::json payload{{"task", task},
                                       {"tool", tool},
                                       {"params", logic::to_string(params)},
                                       {"idempotency_key", inv.idempotency_key},
                                       {"status", r.ok() ? "ok" : "failed"}};
                if (!r.receipt.is_null()) payload["receipt"] = r.receipt;
                if (!r.ok()) payload["error"] = r.error;
                out.events.emplace_back(EventKind::action_invoked, std::move(payload));
                if (!r.ok()) throw Error(ErrorCode::tool_failed, tool + ": " + r.error);
                if (persist) append_unique(out.outcomes, {logic::make_fact(inst.args()[1])});
            }
        }
        append_unique(out.outcomes, {logic::make_fact(Term::compound("task_done", {Term::atom(task)}))});
    } catch (const Error& e) {
        out.error = e;
    }
    return out;
}

void Run::loop() {
    const auto& spec = bundle_->spec;
    std::vector<Clause> extra = spec.evaluation_rules;
    extra.insert(extra.end(), cfg_.metric_facts.begin(), cfg_.metric_facts.end());
    auto base = std::make_shared<const logic::Program>(
        bundle_->facts.program().concat(logic::Program::of(std::move(extra))));
    ExecutionState state(cfg_.run_id, base, spec);
    publish(state);

    nlohmann::json task_ids = nlohmann::json::array();
    for (const auto& t : spec.tasks) task_ids.push_back(t.id);
    emit(EventKind::run_started, {{"run_id", cfg_.run_id},
                                  {"initiative", spec.id},
                                  {"name", spec.name},
                                  {"tasks", task_ids},
                                  {"auto_approve", cfg_.auto_approve}});

    std::map<std::string, synthesis::PriorOutcome> task_outcomes;
    std::map<std::string, synthesis::LogicProgram> parked;
    std::set<std::string> inflight;
    std::map<std::string, std::shared_ptr<Executed>> finished;
    std::vector<std::thread> workers;
    bool aborting = false;
    std::uint64_t round = 0;

    auto set_status = [&](const std::string& task, TaskStatus s) {
        state = state.with_status(task, s);
        publish(state);
    };
    auto fail = [&](const std::string& task, const std::string& reason, nlohmann::json detail) {
        set_status(task, TaskStatus::failed);
        detail["task"] = task;
        detail["reason"] = reason;
        detail["status"] = "failed";
        emit(EventKind::task_failed, std::move(detail));
    };
    auto launch = [&](const std::string& task, synthesis::LogicProgram lp) {
        set_status(task, TaskStatus::running);
        inflight.insert(task);
        workers.emplace_back([this, task, lp = std::move(lp)]() mutable {
            auto m = std::make_shared<Message>();
            m->kind = Message::Kind::executed;
            m->task = task;
            m->result = std::make_shared<Executed>(execute(task, std::move(lp)));
            post(m);
        });
    };

    for (;;) {
        std::set<std::string> ready;
        if (!aborting) {
            try {
                ready = initiative::ready_tasks(spec, state);
            } catch (const Error& e) {
                for (const auto& t : spec.tasks) {
                    if (state.status(t.id) == TaskStatus::pending) fail(t.id, "readiness", {{"error", e.what()}});
                }
            }
        }
        if (!ready.empty()) {
            ++round;
            for (const auto& t : ready) {
                set_status(t, TaskStatus::ready);
                emit(EventKind::task_ready, {{"task", t}, {"round", round}, {"iteration", state.iteration(t) + 1}});
            }
            std::vector<synthesis::PriorOutcome> prior;
            for (const auto& [t, p] : task_outcomes) prior.push_back(p);

            std::vector<std::string> order(ready.begin(), ready.end());
            std::map<std::string, Prepared> prepared;
            if (cfg_.serial_reversed) {
                for (auto it = order.rbegin(); it != order.rend(); ++it) prepared.emplace(*it, prepare(*it, prior));
            } else {
                std::vector<Prepared> slots(order.size());
                std::vector<std::thread> jobs;
                for (std::size_t i = 0; i < order.size(); ++i) {
                    jobs.emplace_back([&, i] { slots[i] = prepare(order[i], prior); });
                }
                for (auto& j : jobs) j.join();
                for (auto& p : slots) prepared.emplace(p.task, std::move(p));
            }

            for (auto& [t, p] : prepared) {
                if (p.error) {
                    fail(t, "synthesis", {{"error", p.error->what()}, {"code", to_string(p.error->code())}});
                    continue;
                }
                std::string file = state.iteration(t) == 0 ? t + ".abl" : t + "." + std::to_string(state.iteration(t) + 1) + ".abl";
                write_file(std::filesystem::path("programs") / file, p.text);
                {
                    std::lock_guard lock(mu_);
                    programs_[t] = p.text;
                }
                emit(EventKind::program_synthesized, {{"task", t},
                                                      {"iteration", state.iteration(t) + 1},
                                                      {"file", "programs/" + file},
                                                      {"validation", to_json(p.report)},
                                                      {"impact", synthesis::to_json(p.impact)}});
                if (!p.report.ok()) {
                    fail(t, "validation", {{"findings", to_json(p.report)["errors"]}});
                } else if (p.impact.needs_approval && !cfg_.auto_approve) {
                    ApprovalRequest a;
                    {
                        std::lock_guard lock(mu_);
                        a.id = "a" + std::to_string(approvals_.size() + 1);
                        a.task_id = t;
                        a.program_text = p.text;
                        a.reasons = p.impact.reasons;
                        approvals_.push_back(a);
                    }
                    set_status(t, TaskStatus::awaiting_approval);
                    emit(EventKind::approval_requested, {{"approval_id", a.id}, {"task", t}, {"reasons", a.reasons}});
                    parked.emplace(t, std::move(*p.lp));
                } else {
                    if (cfg_.serial_reversed) continue;
                    launch(t, std::move(*p.lp));
                }
            }
            if (cfg_.serial_reversed) {
                // One task at a time, last id first.
                for (auto it = order.rbegin(); it != order.rend(); ++it) {
                    auto& p = prepared.at(*it);
                    if (!p.lp || state.status(*it) != TaskStatus::ready) continue;
                    set_status(*it, TaskStatus::running);
                    finished[*it] = std::make_shared<Executed>(execute(*it, std::move(*p.lp)));
                }
            }
        }
        if (inflight.empty() && parked.empty() && finished.empty()) break;

        // Wait until every launched job is back, or for a decision when only
        // approvals are outstanding.
        bool progressed = !finished.empty();
        while (!inflight.empty() || (!progressed && !parked.empty())) {
            auto m = next_message();
            switch (m->kind) {
            case Message::Kind::executed:
                inflight.erase(m->task);
                finished[m->task] = m->result;
                progressed = true;
                break;
            case Message::Kind::decision: {
                ApprovalRequest a;
                {
                    std::lock_guard lock(mu_);
                    for (const auto& x : approvals_) {
                        if (x.id == m->approval_id) a = x;
                    }
                }
                auto it = parked.find(a.task_id);
                if (it == parked.end()) break;
                emit(EventKind::approval_decided, {{"approval_id", a.id},
                                                   {"task", a.task_id},
                                                   {"decision", to_string(a.decision)},
                                                   {"decider", a.decider}});
                if (a.decision == Decision::approved) {
                    launch(a.task_id, std::move(it->second));
                } else {
                    set_status(a.task_id, TaskStatus::cancelled);
                }
                parked.erase(it);
                progressed = true;
                break;
            }
            case Message::Kind::abort:
                aborting = true;
                for (auto& [t, lp] : parked) {
                    set_status(t, TaskStatus::cancelled);
                    emit(EventKind::task_failed, {{"task", t}, {"reason", m->reason}, {"status", "cancelled"}});
                }
                if (!parked.empty()) {
                    std::lock_guard lock(mu_);
                    result_.timed_out = true;
                }
                parked.clear();
                progressed = true;
                break;
            }
        }

        for (auto& [t, r] : finished) {
            for (auto& [kind, payload] : r->events) emit(kind, std::move(payload));
            if (r->error) {
                fail(t, "execution", {{"error", r->error->what()}, {"code", to_string(r->error->code())}});
                continue;
            }
            const auto& task = *spec.task(t);
            initiative::Completion c{state, false, std::nullopt};
            try {
                c = initiative::complete_task(task, state, r->outcomes);
            } catch (const Error& e) {
                fail(t, "outcome", {{"error", e.what()}, {"code", to_string(e.code())}});
                continue;
            }
            std::size_t iteration = state.iteration(t) + 1;
            state = c.state.with_iteration(t, iteration);
            auto& prior = task_outcomes[t];
            prior.task_id = t;
            append_unique(prior.facts, r->outcomes);
            for (const auto& ind : r->relations) {
                if (std::find(prior.relations.begin(), prior.relations.end(), ind) == prior.relations.end()) {
                    prior.relations.push_back(ind);
                }
            }
            write_file(std::filesystem::path("outcomes") / (t + ".abl"), abl_lines(prior.facts));
            nlohmann::json payload{{"task", t},
                                   {"iteration", iteration},
                                   {"outcomes", clause_texts(r->outcomes)},
                                   {"snapshot", state.snapshot()}};
            if (!c.completed) {
                publish(state);
                payload["reason"] = "postcondition";
                payload["condition"] = logic::to_string(*c.failed_condition);
                payload["status"] = "failed";
                emit(EventKind::task_failed, std::move(payload));
                continue;
            }
            TaskStatus next = TaskStatus::completed;
            if (task.repeat_until) {
                auto d = initiative::check_repeat(task, state, iteration);
                payload["repeat"] = to_string(d);
                if (d == initiative::RepeatDecision::reactivate) next = TaskStatus::pending;
                if (d == initiative::RepeatDecision::exhausted) next = TaskStatus::exhausted;
            }
            state = state.with_status(t, next);
            publish(state);
            payload["status"] = to_string(next);
            emit(EventKind::task_completed, std::move(payload));
        }
        finished.clear();
    }
    for (auto& w : workers) w.join();

    initiative::Evaluation evaluation;
    try {
        evaluation = initiative::evaluate_initiative(spec, state);
        emit(EventKind::initiative_evaluated, initiative::to_json(evaluation));
    } catch (const Error& e) {
        emit(EventKind::initiative_evaluated, {{"result", "error"}, {"error", e.what()}});
    }

    auto receipts = store_->receipts();
    nlohmann::json receipts_json = nlohmann::json::array();
    for (const auto& r : receipts) {
        receipts_json.push_back({{"tool", r.tool}, {"task", r.task_id}, {"params", r.params},
                                 {"idempotency_key", r.idempotency_key}, {"body", r.body}});
    }
    write_file("receipts.json", receipts_json.dump(2) + "\n");
    write_file("final_state.json", state_json(state).dump(2) + "\n");

    nlohmann::json statuses = nlohmann::json::object();
    for (const auto& [t, s] : state.statuses()) statuses[t] = to_string(s);
    {
        std::lock_guard lock(mu_);
        result_.evaluation = evaluation;
        result_.statuses = state.statuses();
        result_.receipts = std::move(receipts);
        result_.persisted = store_->facts();
    }
    emit(EventKind::run_finished, {{"statuses", statuses}, {"snapshot", state.snapshot()}});
    std::lock_guard lock(mu_);
    phase_ = RunPhase::finished;
    changed_.notify_all();
}

RunResult run_initiative(std::shared_ptr<const Bundle> bundle, RunConfig cfg, std::vector<Event>* events) {
    Run run(std::move(bundle), std::move(cfg));
    run.start();
    run.wait();
    if (events) *events = run.events();
    return run.result();
}

nlohmann::json replay(const std::vector<Event>& events) {
    std::string run_id;
    std::uint64_t snapshot = 0;
    std::map<std::string, std::string> statuses;
    std::map<std::string, std::size_t> iterations;
    std::vector<std::string> outcomes;
    std::set<std::string> seen;

    std::uint64_t expected = 1;
    for (const auto& e : events) {
        if (e.seq != expected) {
            throw Error(ErrorCode::log_gap, "event log is missing seq " + std::to_string(expected) + " (found " +
                                                std::to_string(e.seq) + ")");
        }
        ++expected;
        const auto& p = e.payload;
        std::string task = p.value("task", std::string());
        switch (e.kind) {
        case EventKind::run_started:
            run_id = p.value("run_id", std::string());
            for (const auto& t : p.value("tasks", nlohmann::json::array())) {
                statuses[t.get<std::string>()] = "pending";
                iterations[t.get<std::string>()] = 0;
            }
            break;
        case EventKind::task_ready: statuses[task] = "ready"; break;
        case EventKind::program_synthesized: statuses[task] = "running"; break;
        case EventKind::approval_requested: statuses[task] = "awaiting_approval"; break;
        case EventKind::approval_decided:
            statuses[task] = p.value("decision", std::string()) == "approved" ? "running" : "cancelled";
            break;
        case EventKind::task_completed:
        case EventKind::task_failed:
            if (p.contains("outcomes")) {
                for (const auto& o : p["outcomes"]) {
                    if (seen.insert(o.get<std::string>()).second) outcomes.push_back(o.get<std::string>());
                }
                ++snapshot;
            }
            if (p.contains("iteration") && p.contains("outcomes")) iterations[task] = p["iteration"].get<std::size_t>();
            statuses[task] = p.value("status", std::string("failed"));
            break;
        case EventKind::grounding_fetched:
        case EventKind::action_invoked:
        case EventKind::initiative_evaluated:
        case EventKind::run_finished: break;
        }
    }
    return {{"run_id", run_id}, {"snapshot", snapshot}, {"statuses", statuses}, {"iterations", iterations},
            {"outcomes", outcomes}};
}

}  // namespace autobus::orchestrator
