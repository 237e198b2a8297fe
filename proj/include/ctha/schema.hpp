#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "ctha/encoding.hpp"

namespace ctha::msg {

/// Validate `value` against a JSON Schema document, supporting the draft-07
/// subset the wire schemas use: type (single or list, with "integer"
/// accepting any number with zero fractional part), enum, required,
/// properties, additionalProperties (boolean or schema), items (single
/// schema), maxItems, maxLength (Unicode code points), minimum, maximum.
/// Returns one human-readable line per violation; empty means conformant.
std::vector<std::string> schema_violations(const Json& value, const Json& schema);

inline bool matches_schema(const Json& value, const Json& schema) {
    return schema_violations(value, schema).empty();
}

/// Number of Unicode code points in a UTF-8 string (what maxLength counts).
std::size_t utf8_length(std::string_view s);

/// Longest prefix of `s` holding at most `max_points` code points.
std::string utf8_truncate(std::string_view s, std::size_t max_points);

}  // namespace ctha::msg
