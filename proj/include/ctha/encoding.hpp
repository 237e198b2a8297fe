#pragma once

#include <string>
#include <string_view>

#include "ctha/errors.hpp"

#include "json.hpp"

namespace ctha {

using Json = nlohmann::json;

/// Canonical object-notation encoding: UTF-8, keys sorted lexicographically,
/// no insignificant whitespace. nlohmann::json keeps object members in a
/// std::map, so a compact dump already meets both requirements; this wrapper
/// pins that choice as the project-wide wire form. Structurally equal values
/// always produce identical bytes.
inline std::string canonical_encode(const Json& value) {
    return value.dump();
}

/// Strict parse of canonical (or any well-formed) text. Throws ParseError
/// carrying the byte offset of the first offending byte.
inline Json canonical_decode(std::string_view bytes) {
    try {
        return Json::parse(bytes);
    } catch (const Json::parse_error& e) {
        // nlohmann reports a 1-based byte position.
        const std::size_t offset = e.byte > 0 ? e.byte - 1 : 0;
        throw ParseError(e.what(), offset);
    }
}

}  // namespace ctha
