#pragma once

// Tables that are written both as CSV files and inside the JSON summary, from
// the same cells, so the two formats always agree.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "tailorlab/error.hpp"
#include "tailorlab/format.hpp"

namespace tailorlab {

using Cell = std::variant<std::monostate, std::string, double, long long, bool>;

inline Cell cell(const std::optional<double>& v) { return v ? Cell(*v) : Cell(); }
inline Cell cell(const std::optional<std::string>& v) { return v ? Cell(*v) : Cell(); }
inline Cell cell(double v) { return Cell(v); }
inline Cell cell(std::size_t v) { return Cell(static_cast<long long>(v)); }
inline Cell cell(int v) { return Cell(static_cast<long long>(v)); }
inline Cell cell(bool v) { return Cell(v); }
inline Cell cell(std::string v) { return Cell(std::move(v)); }
inline Cell cell(std::string_view v) { return Cell(std::string(v)); }
inline Cell cell(const char* v) { return Cell(std::string(v)); }

inline std::string csv_text(const Cell& c) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) return "NA";
            else if constexpr (std::is_same_v<T, std::string>) return v;
            else if constexpr (std::is_same_v<T, double>) return format_double(v);
            else if constexpr (std::is_same_v<T, long long>) return std::to_string(v);
            else return v ? "true" : "false";
        },
        c);
}

inline nlohmann::json json_value(const Cell& c) {
    return std::visit(
        [](const auto& v) -> nlohmann::json {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) return nullptr;
            else if constexpr (std::is_same_v<T, double>) return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
            else return v;
        },
        c);
}

struct Table {
    std::string file;  // relative to the output directory
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;

    void add(std::vector<Cell> row) {
        if (row.size() != columns.size()) throw Error("internal: row width does not match table " + file);
        rows.push_back(std::move(row));
    }

    nlohmann::json to_json() const {
        auto out = nlohmann::json::array();
        for (const auto& row : rows) {
            nlohmann::json obj = nlohmann::json::object();
            for (std::size_t i = 0; i < columns.size(); ++i) obj[columns[i]] = json_value(row[i]);
            out.push_back(std::move(obj));
        }
        return out;
    }

    void write_csv(const std::filesystem::path& dir) const {
        std::ofstream out(dir / file, std::ios::binary);
        if (!out) throw Error("cannot write '" + (dir / file).string() + "'");
        for (std::size_t i = 0; i < columns.size(); ++i) out << (i ? "," : "") << columns[i];
        out << '\n';
        for (const auto& row : rows) {
            for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << csv_text(row[i]);
            out << '\n';
        }
        if (!out) throw Error("failed writing '" + (dir / file).string() + "'");
    }
};

inline void write_json(const std::filesystem::path& file, const nlohmann::json& doc) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw Error("cannot write '" + file.string() + "'");
    out << doc.dump(2) << '\n';
    if (!out) throw Error("failed writing '" + file.string() + "'");
}

}  // namespace tailorlab
