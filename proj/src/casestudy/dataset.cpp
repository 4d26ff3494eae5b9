#include "autobus/casestudy/dataset.hpp"

#include "autobus/error.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <random>

namespace autobus::casestudy {

using semantics::Cell;
using semantics::Table;

std::vector<City> default_cities() {
    return {{"brookfield", 67000}, {"fairview", 59000}, {"hillcrest", 84000}, {"lakeside", 71000},
            {"mapleton", 55000},   {"oakridge", 76000}, {"rivertown", 62000}, {"springdale", 49000}};
}

namespace {

// Uniform draws built directly on the engine output; the standard
// distributions are implementation-defined.
class Draw {
public:
    explicit Draw(std::uint64_t seed) : rng_(seed) {}

    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(rng_() % span);
    }
    bool chance(double p) { return static_cast<double>(rng_() >> 11) * 0x1.0p-53 < p; }

private:
    std::mt19937_64 rng_;
};

std::string cents(std::int64_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%02lld", static_cast<long long>(c / 100), static_cast<long long>(c % 100));
    return buf;
}

[[noreturn]] void bad(const std::string& what) { throw Error(ErrorCode::invalid_config, "dataset: " + what); }

std::size_t col(const Table& t, std::string_view name) {
    auto c = t.column(name);
    if (!c) throw Error(ErrorCode::missing_column, t.name + ": missing column " + std::string(name));
    return *c;
}

const Table& table(const semantics::TableSet& tables, const std::string& name) {
    auto it = tables.find(name);
    if (it == tables.end()) throw Error(ErrorCode::invalid_input, "missing table " + name);
    return it->second;
}

double number(const Cell& c) {
    if (!c) return 0.0;
    double v = 0.0;
    auto [p, ec] = std::from_chars(c->data(), c->data() + c->size(), v);
    if (ec != std::errc() || p != c->data() + c->size()) throw Error(ErrorCode::type_coercion, "not a number: " + *c);
    return v;
}

}  // namespace

Dataset generate_dataset(const DatasetConfig& cfg) {
    if (cfg.cities.empty()) bad("no cities");
    if (cfg.n_products == 0) bad("n_products must be positive");
    if (cfg.income_min > cfg.income_max) bad("income range is inverted");
    if (cfg.rate_min > cfg.rate_max || cfg.rate_min < 0) bad("rate range is invalid");
    if (cfg.risk_min > cfg.risk_max) bad("risk range is inverted");
    if (cfg.subscription_rate < 0 || cfg.subscription_rate > 1 || cfg.active_rate < 0 || cfg.active_rate > 1) {
        bad("rates must be probabilities");
    }
    if (cfg.max_subscriptions == 0) bad("max_subscriptions must be positive");

    Draw draw(cfg.seed);
    Dataset d;
    Table consumers{"consumer", {"consumer_id", "city", "household_income", "churn_risk"}, {}};
    Table subs{"subscription", {"subscription_id", "consumer_id", "product_id", "monthly_rate", "status"}, {}};
    Table products{"product", {"product_id", "name"}, {}};
    for (std::size_t p = 1; p <= cfg.n_products; ++p) {
        products.rows.push_back({"product" + std::to_string(p), "Product " + std::to_string(p)});
    }
    auto rate_lo = static_cast<std::int64_t>(cfg.rate_min * 100 + 0.5);
    auto rate_hi = static_cast<std::int64_t>(cfg.rate_max * 100 + 0.5);
    auto last_city = static_cast<std::int64_t>(cfg.cities.size()) - 1;
    std::size_t next_sub = 1;
    for (std::size_t i = 1; i <= cfg.n_consumers; ++i) {
        std::string id = "c" + std::to_string(i);
        const City& city = cfg.cities[static_cast<std::size_t>(draw.between(0, last_city))];
        std::int64_t income = draw.between(cfg.income_min, cfg.income_max);
        std::int64_t risk = draw.between(cfg.risk_min, cfg.risk_max);
        consumers.rows.push_back({id, city.name, std::to_string(income), std::to_string(risk)});
        if (!draw.chance(cfg.subscription_rate)) continue;
        auto count = draw.between(1, static_cast<std::int64_t>(cfg.max_subscriptions));
        for (std::int64_t k = 0; k < count; ++k) {
            auto product = draw.between(1, static_cast<std::int64_t>(cfg.n_products));
            std::int64_t rate = draw.between(rate_lo, rate_hi);
            bool active = draw.chance(cfg.active_rate);
            subs.rows.push_back({"s" + std::to_string(next_sub++), id, "product" + std::to_string(product), cents(rate),
                                 std::string(active ? "active" : "cancelled")});
        }
    }
    d.tables.emplace("consumer", std::move(consumers));
    d.tables.emplace("subscription", std::move(subs));
    d.tables.emplace("product", std::move(products));
    for (const auto& c : cfg.cities) d.medians[c.name] = c.median_income;
    return d;
}

void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    auto open = [&](const std::string& file) {
        std::ofstream out(dir / file, std::ios::binary);
        if (!out) throw Error(ErrorCode::io_error, "cannot write " + (dir / file).string());
        return out;
    };
    for (const auto& [name, t] : d.tables) open(name + ".csv") << semantics::write_csv(t);
    open("median_income.json") << nlohmann::json(d.medians).dump(2) << '\n';
}

std::map<std::string, std::int64_t> load_medians(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    try {
        return nlohmann::json::parse(in).get<std::map<std::string, std::int64_t>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
    }
}

StudyParams parse_params(const nlohmann::json& doc) {
    StudyParams p;
    try {
        p.product = doc.value("product", p.product);
        p.rate_threshold = doc.value("rate_threshold", p.rate_threshold);
        p.risk_level = doc.value("risk_level", p.risk_level);
        p.campaign = doc.value("campaign", p.campaign);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, std::string("params: ") + e.what());
    }
    return p;
}

StudyParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    try {
        return parse_params(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::invalid_config, path.string() + ": " + e.what());
    }
}

nlohmann::json to_json(const StudyParams& p) {
    return {{"product", p.product}, {"rate_threshold", p.rate_threshold}, {"risk_level", p.risk_level},
            {"campaign", p.campaign}};
}

std::set<std::string> oracle_target_set(const semantics::TableSet& tables,
                                        const std::map<std::string, std::int64_t>& medians, const StudyParams& params) {
    const Table& consumers = table(tables, "consumer");
    const Table& subs = table(tables, "subscription");
    std::size_t c_id = col(consumers, "consumer_id"), c_city = col(consumers, "city");
    std::size_t c_income = col(consumers, "household_income"), c_risk = col(consumers, "churn_risk");
    std::size_t s_consumer = col(subs, "consumer_id"), s_product = col(subs, "product_id");
    std::size_t s_rate = col(subs, "monthly_rate"), s_status = col(subs, "status");

    std::map<std::string, const std::vector<Cell>*> by_id;
    for (const auto& row : consumers.rows) {
        if (row[c_id]) by_id[*row[c_id]] = &row;
    }
    std::set<std::string> out;
    for (const auto& s : subs.rows) {
        if (s[s_status] != Cell("active") || s[s_product] != Cell(params.product) || !s[s_rate]) continue;
        if (number(s[s_rate]) < params.rate_threshold || !s[s_consumer]) continue;
        auto it = by_id.find(*s[s_consumer]);
        if (it == by_id.end()) continue;
        const auto& c = *it->second;
        if (!c[c_risk] || number(c[c_risk]) != static_cast<double>(params.risk_level)) continue;
        if (!c[c_city]) continue;
        auto median = medians.find(*c[c_city]);
        if (median == medians.end()) throw Error(ErrorCode::city_missing, "no median income for city " + *c[c_city]);
        if (c[c_income] && number(c[c_income]) > static_cast<double>(median->second)) out.insert(*c[c_id]);
    }
    return out;
}

}  // namespace autobus::casestudy
