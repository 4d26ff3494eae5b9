#include "autobus/orchestrator/api.hpp"

#include "autobus/error.hpp"
#include "autobus/logic/parser.hpp"

#include "httplib.h"

namespace autobus::orchestrator {

namespace {

using nlohmann::json;

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::unknown_run:
    case ErrorCode::unknown_approval: return 404;
    case ErrorCode::already_decided: return 409;
    default: return 400;
    }
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
    send_json(res, {{"error", {{"code", code}, {"message", message}}}}, status);
}

std::uint64_t since_param(const httplib::Request& req) {
    if (!req.has_param("since")) return 0;
    const auto& v = req.get_param_value("since");
    try {
        std::size_t used = 0;
        auto n = std::stoull(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    throw Error(ErrorCode::invalid_input, "since must be a sequence number, got '" + v + "'");
}

json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::invalid_input, std::string("request body is not JSON: ") + e.what());
    }
}

json events_json(const std::vector<Event>& events) {
    json out = json::array();
    for (const auto& e : events) out.push_back(to_json(e));
    return out;
}

}  // namespace

struct Service::Impl {
    std::map<std::string, std::shared_ptr<const Bundle>> initiatives;
    ServiceConfig cfg;
    mutable std::mutex mu;
    std::map<std::string, std::shared_ptr<Run>> runs;
    std::size_t next_run = 1;
    httplib::Server server;
    std::thread listener;

    json run_json(const Run& run) const {
        json out{{"id", run.id()},
                 {"initiative", run.bundle().spec.id},
                 {"phase", to_string(run.phase())},
                 {"auto_approve", run.config().auto_approve},
                 {"state", run.state()}};
        if (run.phase() == RunPhase::finished) out["evaluation"] = initiative::to_json(run.result().evaluation);
        return out;
    }

    void routes(Service& service);
};

Service::Service(std::map<std::string, std::shared_ptr<const Bundle>> initiatives, ServiceConfig cfg)
    : impl_(std::make_unique<Impl>()) {
    impl_->initiatives = std::move(initiatives);
    impl_->cfg = std::move(cfg);
    // No SO_REUSEPORT: a second listener on a taken port must fail.
    impl_->server.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof yes);
    });
    impl_->routes(*this);
}

Service::~Service() {
    stop();
    std::lock_guard lock(impl_->mu);
    for (auto& [id, run] : impl_->runs) run->abort("service stopped");
}

std::shared_ptr<Run> Service::create_run(const std::string& initiative, RunConfig cfg) {
    auto it = impl_->initiatives.find(initiative);
    if (it == impl_->initiatives.end()) throw Error(ErrorCode::invalid_input, "unknown initiative " + initiative);
    std::shared_ptr<Run> run;
    {
        std::lock_guard lock(impl_->mu);
        if (cfg.run_id.empty()) {
            do {
                cfg.run_id = "r" + std::to_string(impl_->next_run++);
            } while (impl_->runs.count(cfg.run_id));
        } else if (impl_->runs.count(cfg.run_id)) {
            throw Error(ErrorCode::invalid_input, "run " + cfg.run_id + " already exists");
        }
        if (cfg.run_dir.empty() && !impl_->cfg.runs_root.empty()) cfg.run_dir = impl_->cfg.runs_root / cfg.run_id;
        run = std::make_shared<Run>(it->second, std::move(cfg));
        impl_->runs.emplace(run->id(), run);
    }
    run->start();
    return run;
}

std::shared_ptr<Run> Service::find_run(const std::string& id) const {
    std::lock_guard lock(impl_->mu);
    auto it = impl_->runs.find(id);
    if (it == impl_->runs.end()) throw Error(ErrorCode::unknown_run, "no run " + id);
    return it->second;
}

std::vector<std::shared_ptr<Run>> Service::runs() const {
    std::lock_guard lock(impl_->mu);
    std::vector<std::shared_ptr<Run>> out;
    for (const auto& [id, run] : impl_->runs) out.push_back(run);
    return out;
}

int Service::bind(const std::string& host, int port) {
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) {
        throw Error(ErrorCode::bind_failure, "cannot bind " + host + ":" + std::to_string(port));
    }
    return bound;
}

void Service::start() {
    impl_->listener = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void Service::listen() { impl_->server.listen_after_bind(); }

void Service::stop() {
    impl_->server.stop();
    if (impl_->listener.joinable()) impl_->listener.join();
}

void Service::Impl::routes(Service& service) {
    auto guarded = [](auto handler) {
        return [handler](const httplib::Request& req, httplib::Response& res) {
            try {
                handler(req, res);
            } catch (const Error& e) {
                send_error(res, http_status(e.code()), to_string(e.code()), e.what());
            } catch (const json::exception& e) {
                send_error(res, 400, "invalid_input", e.what());
            }
        };
    };

    server.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
        if (res.body.empty()) send_error(res, res.status, "not_found", "no route for " + req.method + " " + req.path);
    });

    server.Get("/initiatives", guarded([this](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& [id, b] : initiatives) {
            json tasks = json::array();
            for (const auto& t : b->spec.tasks) tasks.push_back(t.id);
            out.push_back({{"id", id}, {"name", b->spec.name}, {"tasks", tasks}});
        }
        send_json(res, out);
    }));

    server.Post("/runs", guarded([this, &service](const httplib::Request& req, httplib::Response& res) {
        json body = body_json(req);
        if (!body.is_object() || !body.contains("initiative") || !body["initiative"].is_string()) {
            throw Error(ErrorCode::invalid_input, "body needs an initiative id");
        }
        json config = body.value("config", json::object());
        RunConfig cfg;
        cfg.run_id = config.value("run_id", std::string());
        cfg.auto_approve = config.value("auto_approve", false);
        for (const auto& m : config.value("metrics", json::array())) {
            try {
                cfg.metric_facts.push_back(logic::make_fact(logic::parse_term(m.get<std::string>())));
            } catch (const Error& e) {
                throw Error(ErrorCode::invalid_input, "metric " + m.dump() + ": " + e.what());
            }
        }
        auto run = service.create_run(body["initiative"].get<std::string>(), std::move(cfg));
        send_json(res, run_json(*run), 201);
    }));

    server.Get(R"(/runs/([^/]+))", guarded([this, &service](const httplib::Request& req, httplib::Response& res) {
        send_json(res, run_json(*service.find_run(req.matches[1])));
    }));

    server.Get(R"(/runs/([^/]+)/events)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        auto run = service.find_run(req.matches[1]);
        send_json(res, events_json(run->events(since_param(req))));
    }));

    server.Get(R"(/runs/([^/]+)/stream)", guarded([this, &service](const httplib::Request& req, httplib::Response& res) {
        auto run = service.find_run(req.matches[1]);
        auto next = std::make_shared<std::uint64_t>(since_param(req));
        auto poll = cfg.stream_poll;
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [run, next, poll](std::size_t, httplib::DataSink& sink) {
            run->wait_events(*next, poll);
            for (const auto& e : run->events(*next)) {
                std::string msg = "id: " + std::to_string(e.seq) + "\nevent: " + std::string(to_string(e.kind)) +
                                  "\ndata: " + to_json(e).dump() + "\n\n";
                if (!sink.write(msg.data(), msg.size())) return false;
                *next = e.seq;
            }
            if (run->phase() == RunPhase::finished && run->events(*next).empty()) sink.done();
            return true;
        });
    }));

    server.Get(R"(/runs/([^/]+)/tasks)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        auto run = service.find_run(req.matches[1]);
        json state = run->state();
        json out = json::array();
        for (const auto& t : run->bundle().spec.tasks) {
            json entry{{"id", t.id}, {"description", t.description}};
            if (state.contains("statuses")) {
                entry["status"] = state["statuses"].value(t.id, std::string("pending"));
                entry["iteration"] = state["iterations"].value(t.id, 0);
            }
            entry["has_program"] = run->program(t.id).has_value();
            out.push_back(entry);
        }
        send_json(res, out);
    }));

    server.Get(R"(/runs/([^/]+)/programs/([^/]+))", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        auto run = service.find_run(req.matches[1]);
        std::string task = req.matches[2];
        auto text = run->program(task);
        if (!text) {
            send_error(res, 404, "unknown_program", "no program for task " + task + " in run " + run->id());
            return;
        }
        send_json(res, {{"task", task}, {"program", *text}});
    }));

    server.Get(R"(/runs/([^/]+)/approvals)", guarded([&service](const httplib::Request& req, httplib::Response& res) {
        json out = json::array();
        for (const auto& a : service.find_run(req.matches[1])->approvals()) out.push_back(to_json(a));
        send_json(res, out);
    }));

    server.Post(R"(/runs/([^/]+)/approvals/([^/]+))",
                guarded([&service](const httplib::Request& req, httplib::Response& res) {
                    auto run = service.find_run(req.matches[1]);
                    json body = body_json(req);
                    auto decision = decision_from(body.value("decision", std::string()));
                    if (!decision || *decision == Decision::pending) {
                        throw Error(ErrorCode::invalid_input, "decision must be \"approved\" or \"rejected\"");
                    }
                    auto a = run->submit_approval(req.matches[2], *decision, body.value("decider", std::string("api")));
                    send_json(res, to_json(a));
                }));
}

}  // namespace autobus::orchestrator
