#pragma once

#include "autobus/semantics/graph.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

namespace autobus::casestudy {

struct City {
    std::string name;
    std::int64_t median_income;
};

std::vector<City> default_cities();

struct DatasetConfig {
    std::uint64_t seed = 42;
    std::size_t n_consumers = 1000;
    std::size_t n_products = 3;
    std::vector<City> cities = default_cities();
    std::int64_t income_min = 30000;
    std::int64_t income_max = 120000;
    // Monthly rates are drawn in whole cents.
    double rate_min = 5.0;
    double rate_max = 30.0;
    int risk_min = 1;
    int risk_max = 5;
    // Chance that a consumer holds any subscription at all.
    double subscription_rate = 0.8;
    std::size_t max_subscriptions = 3;
    double active_rate = 0.8;
};

struct Dataset {
    // consumer, subscription, product.
    semantics::TableSet tables;
    // City -> median household income, the third-party fixture.
    std::map<std::string, std::int64_t> medians;
};

// Deterministic for a given config: draws come straight from mt19937_64
// output, so the same seed yields the same tables on every platform.
// Throws Error{invalid_config} for empty or inverted ranges.
Dataset generate_dataset(const DatasetConfig& cfg);

// <dir>/consumer.csv, subscription.csv, product.csv, median_income.json.
void write_dataset(const Dataset& d, const std::filesystem::path& dir);

std::map<std::string, std::int64_t> load_medians(const std::filesystem::path& path);

struct StudyParams {
    std::string product = "product1";
    double rate_threshold = 10.0;
    std::int64_t risk_level = 4;
    std::string campaign = "retention_offer";
};

StudyParams parse_params(const nlohmann::json& doc);
StudyParams load_params(const std::filesystem::path& path);
nlohmann::json to_json(const StudyParams& p);

// Consumers with an active subscription to the product at or above the rate
// threshold, at the given risk level, earning more than their city median.
// Plain row filtering and joins over the tables.
//
// Throws Error{city_missing} when a candidate's city has no median,
// Error{missing_column} for absent columns.
std::set<std::string> oracle_target_set(const semantics::TableSet& tables,
                                        const std::map<std::string, std::int64_t>& medians, const StudyParams& params);

}  // namespace autobus::casestudy
