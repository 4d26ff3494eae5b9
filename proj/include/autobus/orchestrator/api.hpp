#pragma once

#include "autobus/orchestrator/orchestrator.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace autobus::orchestrator {

struct ServiceConfig {
    // Each run writes under <runs_root>/<run id>; nothing is written when empty.
    std::filesystem::path runs_root;
    // How long one server-push poll waits for new events.
    std::chrono::milliseconds stream_poll{250};
};

// Initiative bundles keyed by initiative id plus the runs started from them.
//
// HTTP JSON API:
//   GET  /initiatives
//   POST /runs                         {"initiative", "config"?: {"auto_approve", "metrics": [term], "run_id"}}
//   GET  /runs/{id}
//   GET  /runs/{id}/events?since=seq
//   GET  /runs/{id}/stream?since=seq   text/event-stream, one event per message
//   GET  /runs/{id}/tasks
//   GET  /runs/{id}/programs/{task}
//   GET  /runs/{id}/approvals
//   POST /runs/{id}/approvals/{aid}    {"decision": "approved"|"rejected", "decider"}
// Errors are {"error": {"code", "message"}} with 400, 404 or 409.
class Service {
public:
    explicit Service(std::map<std::string, std::shared_ptr<const Bundle>> initiatives, ServiceConfig cfg = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Throws Error{invalid_input} for an unknown initiative or a taken run id.
    std::shared_ptr<Run> create_run(const std::string& initiative, RunConfig cfg);
    // Throws Error{unknown_run}.
    std::shared_ptr<Run> find_run(const std::string& id) const;
    std::vector<std::shared_ptr<Run>> runs() const;

    // Binds the listener; port 0 picks a free one. Returns the bound port.
    // Throws Error{bind_failure}.
    int bind(const std::string& host, int port);
    // Serves on a background thread after bind().
    void start();
    // Serves on the calling thread after bind() until stop().
    void listen();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace autobus::orchestrator
