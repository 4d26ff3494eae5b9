#pragma once

#include "autobus/error.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace autobus {

struct Finding {
    ErrorCode code;
    std::string message;
    // Where the finding applies: a task id, a clause location, or empty.
    std::string where;
};

struct ValidationReport {
    std::vector<Finding> errors;
    std::vector<Finding> warnings;

    bool ok() const noexcept { return errors.empty(); }
    bool has_error(ErrorCode code) const;
    void error(ErrorCode code, std::string message, std::string where = {});
    void warn(ErrorCode code, std::string message, std::string where = {});
};

nlohmann::json to_json(const Finding& f);
nlohmann::json to_json(const ValidationReport& r);
std::string to_string(const Finding& f);

}  // namespace autobus
