#include "ctha/schema.hpp"

#include <cmath>

namespace ctha::msg {

namespace {

bool is_integerish(const Json& v) {
    if (v.is_number_integer()) return true;
    if (v.is_number_float()) {
        const double d = v.get<double>();
        return std::isfinite(d) && d == std::trunc(d);
    }
    return false;
}

bool type_matches(const Json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") return is_integerish(v);
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

void check(const Json& value, const Json& schema, const std::string& path,
           std::vector<std::string>& out) {
    if (!schema.is_object()) return;  // boolean schemas unused by the wire formats

    if (auto it = schema.find("type"); it != schema.end()) {
        bool ok = false;
        if (it->is_string()) {
            ok = type_matches(value, it->get<std::string>());
        } else if (it->is_array()) {
            for (const auto& t : *it)
                if (type_matches(value, t.get<std::string>())) {
                    ok = true;
                    break;
                }
        }
        if (!ok) {
            out.push_back(path + ": type mismatch, expected " + it->dump());
            return;  // further keyword checks assume the right shape
        }
    }

    if (auto it = schema.find("enum"); it != schema.end()) {
        bool ok = false;
        for (const auto& candidate : *it)
            if (candidate == value) {
                ok = true;
                break;
            }
        if (!ok) out.push_back(path + ": value not in enum " + it->dump());
    }

    if (value.is_string()) {
        if (auto it = schema.find("maxLength"); it != schema.end()) {
            const auto limit = it->get<std::size_t>();
            if (utf8_length(value.get_ref<const std::string&>()) > limit)
                out.push_back(path + ": string longer than " + std::to_string(limit));
        }
    }

    if (value.is_number()) {
        const double d = value.get<double>();
        if (auto it = schema.find("minimum"); it != schema.end() && d < it->get<double>())
            out.push_back(path + ": below minimum " + it->dump());
        if (auto it = schema.find("maximum"); it != schema.end() && d > it->get<double>())
            out.push_back(path + ": above maximum " + it->dump());
    }

    if (value.is_array()) {
        if (auto it = schema.find("maxItems"); it != schema.end()) {
            const auto limit = it->get<std::size_t>();
            if (value.size() > limit)
                out.push_back(path + ": more than " + std::to_string(limit) + " items");
        }
        if (auto it = schema.find("items"); it != schema.end()) {
            for (std::size_t i = 0; i < value.size(); ++i)
                check(value.at(i), *it, path + "[" + std::to_string(i) + "]", out);
        }
    }

    if (value.is_object()) {
        if (auto it = schema.find("required"); it != schema.end()) {
            for (const auto& name : *it) {
                const auto& key = name.get_ref<const std::string&>();
                if (!value.contains(key))
                    out.push_back(path + ": missing required field '" + key + "'");
            }
        }
        const Json* properties = nullptr;
        if (auto it = schema.find("properties"); it != schema.end()) properties = &*it;
        const Json* additional = nullptr;
        if (auto it = schema.find("additionalProperties"); it != schema.end())
            additional = &*it;

        for (auto member = value.begin(); member != value.end(); ++member) {
            const std::string& key = member.key();
            const std::string child_path = path + "." + key;
            if (properties && properties->contains(key)) {
                check(member.value(), properties->at(key), child_path, out);
            } else if (additional) {
                if (additional->is_boolean()) {
                    if (!additional->get<bool>())
                        out.push_back(path + ": unknown field '" + key + "'");
                } else {
                    check(member.value(), *additional, child_path, out);
                }
            }
        }
    }
}

}  // namespace

std::vector<std::string> schema_violations(const Json& value, const Json& schema) {
    std::vector<std::string> out;
    check(value, schema, "$", out);
    return out;
}

std::size_t utf8_length(std::string_view s) {
    std::size_t n = 0;
    for (unsigned char c : s)
        if ((c & 0xC0) != 0x80) ++n;
    return n;
}

std::string utf8_truncate(std::string_view s, std::size_t max_points) {
    std::size_t points = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
            if (points == max_points) return std::string(s.substr(0, i));
            ++points;
        }
    }
    return std::string(s);
}

}  // namespace ctha::msg
