#pragma once

#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "tailorlab/error.hpp"

namespace tailorlab {

// Shortest representation that parses back to the same double.
inline std::string format_double(double value) {
    if (std::isnan(value)) return "NA";
    if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

inline std::string format_optional(const std::optional<double>& value) {
    return value ? format_double(*value) : std::string("NA");
}

inline double parse_double(std::string_view text, std::string_view what) {
    if (text == "NA") return std::nan("");
    if (text == "inf") return INFINITY;
    if (text == "-inf") return -INFINITY;
    double value = 0.0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw SchemaError("cannot parse number '" + std::string(text) + "' in " + std::string(what));
    }
    return value;
}

inline long long parse_int(std::string_view text, std::string_view what) {
    long long value = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), value);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw SchemaError("cannot parse integer '" + std::string(text) + "' in " + std::string(what));
    }
    return value;
}

}  // namespace tailorlab
