#include "autobus/report.hpp"

#include <algorithm>

namespace autobus {

bool ValidationReport::has_error(ErrorCode code) const {
    return std::any_of(errors.begin(), errors.end(), [&](const Finding& f) { return f.code == code; });
}

void ValidationReport::error(ErrorCode code, std::string message, std::string where) {
    errors.push_back(Finding{code, std::move(message), std::move(where)});
}

void ValidationReport::warn(ErrorCode code, std::string message, std::string where) {
    warnings.push_back(Finding{code, std::move(message), std::move(where)});
}

nlohmann::json to_json(const Finding& f) {
    nlohmann::json j{{"code", to_string(f.code)}, {"message", f.message}};
    if (!f.where.empty()) j["where"] = f.where;
    return j;
}

nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json errors = nlohmann::json::array();
    nlohmann::json warnings = nlohmann::json::array();
    for (const auto& f : r.errors) errors.push_back(to_json(f));
    for (const auto& f : r.warnings) warnings.push_back(to_json(f));
    return {{"ok", r.ok()}, {"errors", errors}, {"warnings", warnings}};
}

std::string to_string(const Finding& f) {
    std::string out(to_string(f.code));
    if (!f.where.empty()) out += " [" + f.where + "]";
    return out + ": " + f.message;
}

}  // namespace autobus
