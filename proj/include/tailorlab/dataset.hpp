#pragma once

// CSV dataset of trial records. Column order:
//   participant_id, arm_cutoff, arm_time, arm_variable, arm_rescue, rule,
//   <var>_w1..<var>_wT for each variable, R, classification_week, A,
//   rescue_week, rescue_option, Y, Y_bin, Y_adj, path
// Missing values are written as NA. The path column lists the randomized
// draws as kind:week:action:probability separated by ';'.

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "tailorlab/core.hpp"
#include "tailorlab/designs.hpp"
#include "tailorlab/error.hpp"
#include "tailorlab/format.hpp"

namespace tailorlab {

namespace detail {

inline constexpr std::string_view kNa = "NA";

inline std::string opt_text(const std::optional<std::string>& s) { return s ? *s : std::string(kNa); }

template <class T>
std::string opt_int(const std::optional<T>& v) {
    return v ? std::to_string(*v) : std::string(kNa);
}

inline std::string encode_path(const AssignmentPath& path) {
    if (path.empty()) return std::string(kNa);
    std::string out;
    for (std::size_t i = 0; i < path.size(); ++i) {
        const auto& s = path[i];
        if (i) out += ';';
        out += std::string(to_string(s.kind)) + ":" + std::to_string(s.week) + ":" + s.action + ":" +
               format_double(s.probability);
    }
    return out;
}

inline AssignmentPath decode_path(std::string_view text, std::string_view where) {
    AssignmentPath path;
    if (text == kNa) return path;
    for (auto step : split(text, ';')) {
        const auto parts = split(step, ':');
        if (parts.size() != 4) throw SchemaError(std::string(where) + ": malformed path step '" + std::string(step) + "'");
        PathStep s;
        try {
            s.kind = parse_step_kind(parts[0]);
        } catch (const ConfigError& e) {
            throw SchemaError(std::string(where) + ": " + e.what());
        }
        s.week = static_cast<Week>(parse_int(parts[1], where));
        s.action = std::string(parts[2]);
        s.probability = parse_double(parts[3], where);
        if (!(s.probability >= 0.0 && s.probability <= 1.0)) {
            throw SchemaError(std::string(where) + ": path probability outside [0,1]");
        }
        path.push_back(std::move(s));
    }
    return path;
}

inline std::optional<std::string> read_opt(std::string_view field) {
    if (field == kNa) return std::nullopt;
    return std::string(field);
}

template <class T>
std::optional<T> read_opt_int(std::string_view field, std::string_view where) {
    if (field == kNa) return std::nullopt;
    return static_cast<T>(parse_int(field, where));
}

inline int read_flag(std::string_view field, std::string_view where) {
    const auto v = parse_int(field, where);
    if (v != 0 && v != 1) throw SchemaError("column " + std::string(where) + " must be 0 or 1");
    return static_cast<int>(v);
}

}  // namespace detail

inline std::vector<std::string> dataset_header(const std::vector<std::string>& variables, Week horizon) {
    std::vector<std::string> h{"participant_id", "arm_cutoff", "arm_time", "arm_variable", "arm_rescue", "rule"};
    for (const auto& v : variables) {
        for (Week w = 1; w <= horizon; ++w) h.push_back(v + "_w" + std::to_string(w));
    }
    for (const char* c : {"R", "classification_week", "A", "rescue_week", "rescue_option", "Y", "Y_bin", "Y_adj", "path"}) {
        h.emplace_back(c);
    }
    return h;
}

inline void write_dataset(std::ostream& out, const std::vector<TrialRecord>& records) {
    if (records.empty()) throw SchemaError("cannot write an empty dataset");
    const auto& first = records.front().trajectory;
    const auto header = dataset_header(first.variables(), first.horizon());
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& r : records) {
        if (r.trajectory.variables() != first.variables() || r.trajectory.horizon() != first.horizon()) {
            throw SchemaError("records disagree on observed variables or horizon");
        }
        out << r.participant_id << ',' << detail::opt_text(r.arms.cutoff) << ',' << detail::opt_text(r.arms.time) << ','
            << detail::opt_text(r.arms.variable) << ',' << detail::opt_text(r.arms.rescue) << ','
            << detail::opt_text(r.rule);
        for (double v : r.trajectory.raw()) out << ',' << format_double(v);
        out << ',' << detail::opt_int(r.responder) << ',' << detail::opt_int(r.classification_week) << ',' << r.rescued
            << ',' << detail::opt_int(r.rescue_week) << ',' << detail::opt_text(r.rescue_option) << ','
            << format_double(r.y) << ',' << r.y_bin << ',' << format_double(r.y_adj) << ','
            << detail::encode_path(r.path) << '\n';
    }
}

inline void write_dataset(const std::string& path, const std::vector<TrialRecord>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write dataset '" + path + "'");
    write_dataset(out, records);
    if (!out) throw Error("failed writing dataset '" + path + "'");
}

inline std::vector<TrialRecord> read_dataset(std::istream& in, const std::string& source = "dataset") {
    std::string line;
    if (!std::getline(in, line)) throw SchemaError(source + ": missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = detail::split(line, ',');

    // Observed columns sit between "rule" and "R"; recover variables and horizon.
    constexpr std::size_t lead = 6, tail = 9;
    if (header.size() < lead + tail + 1) throw SchemaError(source + ": header has too few columns");
    std::vector<std::string> variables;
    Week horizon = 0;
    for (std::size_t c = lead; c + tail < header.size(); ++c) {
        const auto name = header[c];
        const auto pos = name.rfind("_w");
        if (pos == std::string_view::npos || pos == 0) {
            throw SchemaError(source + ": column '" + std::string(name) + "' is not a <variable>_w<week> column");
        }
        const std::string var(name.substr(0, pos));
        if (variables.empty() || variables.back() != var) variables.push_back(var);
        if (variables.size() == 1) ++horizon;
    }
    const auto expected = dataset_header(variables, horizon);
    if (expected.size() != header.size()) throw SchemaError(source + ": observed columns are not a full variable x week grid");
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] != expected[c]) {
            throw SchemaError(source + ": header column " + std::to_string(c + 1) + " is '" + std::string(header[c]) +
                              "', expected '" + expected[c] + "'");
        }
    }

    auto shared = std::make_shared<const std::vector<std::string>>(variables);
    const std::size_t observed = variables.size() * static_cast<std::size_t>(horizon);
    std::vector<TrialRecord> records;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split(line, ',');
        const std::string where = source + " row " + std::to_string(row);
        if (f.size() != header.size()) {
            throw SchemaError(where + ": expected " + std::to_string(header.size()) + " fields, found " +
                              std::to_string(f.size()));
        }
        TrialRecord r;
        const auto id = parse_int(f[0], where + " participant_id");
        if (id < 0) throw SchemaError(where + ": participant_id must be >= 0");
        r.participant_id = static_cast<std::size_t>(id);
        r.arms.cutoff = detail::read_opt(f[1]);
        r.arms.time = detail::read_opt(f[2]);
        r.arms.variable = detail::read_opt(f[3]);
        r.arms.rescue = detail::read_opt(f[4]);
        r.rule = detail::read_opt(f[5]);
        std::vector<double> values(observed);
        for (std::size_t k = 0; k < observed; ++k) values[k] = parse_double(f[lead + k], where + " " + expected[lead + k]);
        try {
            r.trajectory = ObservedTrajectory(shared, horizon, std::move(values));
        } catch (const ConfigError& e) {
            throw SchemaError(where + ": " + e.what());
        }
        std::size_t c = lead + observed;
        r.responder = detail::read_opt_int<int>(f[c], where + " R");
        if (r.responder && *r.responder != 0 && *r.responder != 1) throw SchemaError(where + ": R must be 0, 1 or NA");
        r.classification_week = detail::read_opt_int<Week>(f[c + 1], where + " classification_week");
        r.rescued = detail::read_flag(f[c + 2], "A");
        r.rescue_week = detail::read_opt_int<Week>(f[c + 3], where + " rescue_week");
        r.rescue_option = detail::read_opt(f[c + 4]);
        r.y = parse_double(f[c + 5], where + " Y");
        r.y_bin = detail::read_flag(f[c + 6], "Y_bin");
        r.y_adj = parse_double(f[c + 7], where + " Y_adj");
        r.path = detail::decode_path(f[c + 8], where + " path");
        if (r.rescued != (r.rescue_week ? 1 : 0)) throw SchemaError(where + ": A and rescue_week disagree");
        records.push_back(std::move(r));
    }
    if (records.empty()) throw SchemaError(source + ": no data rows");
    return records;
}

inline std::vector<TrialRecord> read_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot read dataset '" + path + "'");
    return read_dataset(in, path);
}

}  // namespace tailorlab
