#pragma once

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace autobus::semantics {

// A cell is nullopt when the source had no value for it.
using Cell = std::optional<std::string>;

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    // Index of a column, or nullopt.
    std::optional<std::size_t> column(std::string_view col) const;
};

// RFC-4180 CSV with a header row. An unquoted empty field is null; a quoted
// empty field ("") is the empty string. CRLF and LF line ends are accepted.
//
// Throws Error{invalid_input} on malformed quoting or ragged rows.
Table parse_csv(std::string_view text, std::string name = {});

// JSON array of flat objects. Columns are the union of keys in first-seen
// order; missing keys and JSON nulls are null cells. Numbers keep their JSON
// text form.
Table table_from_json(const nlohmann::json& rows, std::string name = {});

// Reads `<path>` as CSV or JSON depending on its extension. The table name is
// the file stem.
Table read_table(const std::filesystem::path& path);

std::string write_csv(const Table& table);

}  // namespace autobus::semantics
