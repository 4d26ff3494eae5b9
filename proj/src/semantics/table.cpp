#include "autobus/semantics/table.hpp"

#include "autobus/error.hpp"

#include <fstream>
#include <sstream>

namespace autobus::semantics {

std::optional<std::size_t> Table::column(std::string_view col) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] == col) return i;
    }
    return std::nullopt;
}

namespace {

class CsvReader {
public:
    explicit CsvReader(std::string_view text) : text_(text) {}

    // Reads one record; returns false at end of input.
    bool record(std::vector<Cell>& out) {
        out.clear();
        if (pos_ >= text_.size()) return false;
        ++line_;
        while (true) {
            out.push_back(field());
            if (pos_ >= text_.size()) return true;
            char c = text_[pos_];
            if (c == ',') {
                ++pos_;
                continue;
            }
            if (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n') {
                pos_ += 2;
                return true;
            }
            if (c == '\n') {
                ++pos_;
                return true;
            }
            fail("unexpected character after quoted field");
        }
    }

    std::size_t line() const { return line_; }

private:
    Cell field() {
        if (pos_ < text_.size() && text_[pos_] == '"') return quoted();
        std::size_t start = pos_;
        while (pos_ < text_.size()) {
            char c = text_[pos_];
            if (c == ',' || c == '\n' || (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n')) break;
            if (c == '"') fail("quote inside unquoted field");
            ++pos_;
        }
        if (pos_ == start) return std::nullopt;
        return std::string(text_.substr(start, pos_ - start));
    }

    Cell quoted() {
        ++pos_;
        std::string out;
        while (true) {
            if (pos_ >= text_.size()) fail("unterminated quoted field");
            char c = text_[pos_++];
            if (c == '"') {
                if (pos_ < text_.size() && text_[pos_] == '"') {
                    out += '"';
                    ++pos_;
                    continue;
                }
                return out;
            }
            if (c == '\n') ++line_;
            out += c;
        }
    }

    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorCode::invalid_input, "csv line " + std::to_string(line_) + ": " + what);
    }

    std::string_view text_;
    std::size_t pos_ = 0;
    std::size_t line_ = 0;
};

bool needs_quotes(const std::string& s) {
    return s.empty() || s.find_first_of(",\"\r\n") != std::string::npos;
}

}  // namespace

Table parse_csv(std::string_view text, std::string name) {
    if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
    Table table;
    table.name = std::move(name);
    CsvReader reader(text);
    std::vector<Cell> record;
    if (!reader.record(record)) return table;
    for (std::size_t i = 0; i < record.size(); ++i) {
        if (!record[i] || record[i]->empty()) {
            throw Error(ErrorCode::invalid_input, "csv header: column " + std::to_string(i + 1) + " has no name");
        }
        table.columns.push_back(*record[i]);
    }
    while (reader.record(record)) {
        if (record.size() == 1 && !record[0]) continue;  // blank line
        if (record.size() != table.columns.size()) {
            throw Error(ErrorCode::invalid_input, "csv line " + std::to_string(reader.line()) + ": expected " +
                                                      std::to_string(table.columns.size()) + " fields, got " +
                                                      std::to_string(record.size()));
        }
        table.rows.push_back(record);
    }
    return table;
}

Table table_from_json(const nlohmann::json& rows, std::string name) {
    if (!rows.is_array()) throw Error(ErrorCode::invalid_input, "table JSON must be an array of objects");
    Table table;
    table.name = std::move(name);
    for (const auto& row : rows) {
        if (!row.is_object()) throw Error(ErrorCode::invalid_input, "table JSON row is not an object");
        for (const auto& [key, _] : row.items()) {
            if (!table.column(key)) table.columns.push_back(key);
        }
    }
    for (const auto& row : rows) {
        std::vector<Cell> cells(table.columns.size());
        for (const auto& [key, value] : row.items()) {
            std::size_t i = *table.column(key);
            if (value.is_null()) continue;
            if (value.is_string()) {
                cells[i] = value.get<std::string>();
            } else if (value.is_number() || value.is_boolean()) {
                cells[i] = value.dump();
            } else {
                throw Error(ErrorCode::invalid_input, "table JSON: column " + key + " holds a nested value");
            }
        }
        table.rows.push_back(std::move(cells));
    }
    return table;
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_error, "cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    std::string stem = path.stem().string();
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(buf.str());
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::invalid_input, path.string() + ": " + e.what());
        }
        return table_from_json(j, stem);
    }
    return parse_csv(buf.str(), stem);
}

std::string write_csv(const Table& table) {
    std::string out;
    auto emit = [&](const std::vector<Cell>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out += ',';
            if (!cells[i]) continue;
            const std::string& s = *cells[i];
            if (!needs_quotes(s)) {
                out += s;
                continue;
            }
            out += '"';
            for (char c : s) {
                if (c == '"') out += '"';
                out += c;
            }
            out += '"';
        }
        out += '\n';
    };
    std::vector<Cell> header(table.columns.begin(), table.columns.end());
    emit(header);
    for (const auto& row : table.rows) emit(row);
    return out;
}

}  // namespace autobus::semantics
