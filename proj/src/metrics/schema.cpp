// SPDX-License-Identifier: Apache-2.0
#include "flowtok/metrics/schema.hpp"

#include <cmath>

namespace flowtok::metrics {
namespace {

using nlohmann::json;

bool has_type(const json& v, const std::string& t) {
    if (t == "null") return v.is_null();
    if (t == "boolean") return v.is_boolean();
    if (t == "object") return v.is_object();
    if (t == "array") return v.is_array();
    if (t == "string") return v.is_string();
    if (t == "number") return v.is_number();
    if (t == "integer") {
        return v.is_number_integer() || (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>());
    }
    return false;
}

void check(const json& v, const json& s, const std::string& ptr, std::vector<std::string>& out) {
    const std::string at = ptr.empty() ? "/" : ptr;
    if (s.is_boolean()) {
        if (!s.get<bool>()) out.push_back(at + ": not allowed");
        return;
    }
    if (s.contains("type")) {
        const json& t = s["type"];
        bool ok = false;
        if (t.is_string()) {
            ok = has_type(v, t.get<std::string>());
        } else {
            for (const auto& e : t) ok = ok || has_type(v, e.get<std::string>());
        }
        if (!ok) {
            out.push_back(at + ": expected type " + t.dump() + ", got " + v.type_name());
            return;
        }
    }
    if (s.contains("const") && v != s["const"]) out.push_back(at + ": expected " + s["const"].dump());
    if (s.contains("enum")) {
        bool found = false;
        for (const auto& e : s["enum"]) found = found || e == v;
        if (!found) out.push_back(at + ": " + v.dump() + " not in " + s["enum"].dump());
    }
    if (s.contains("anyOf")) {
        bool any = false;
        for (const auto& sub : s["anyOf"]) {
            std::vector<std::string> tmp;
            check(v, sub, ptr, tmp);
            any = any || tmp.empty();
        }
        if (!any) out.push_back(at + ": matches no alternative of anyOf");
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (s.contains("minimum") && x < s["minimum"].get<double>()) out.push_back(at + ": below minimum");
        if (s.contains("maximum") && x > s["maximum"].get<double>()) out.push_back(at + ": above maximum");
    }
    if (v.is_object()) {
        if (s.contains("required")) {
            for (const auto& k : s["required"]) {
                if (!v.contains(k.get<std::string>())) out.push_back(at + ": missing required key '" + k.get<std::string>() + "'");
            }
        }
        const json props = s.value("properties", json::object());
        for (const auto& [k, val] : v.items()) {
            const std::string child = ptr + "/" + k;
            if (props.contains(k)) {
                check(val, props[k], child, out);
            } else if (s.contains("additionalProperties")) {
                check(val, s["additionalProperties"], child, out);
            }
        }
    }
    if (v.is_array()) {
        if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>()) out.push_back(at + ": too few items");
        if (s.contains("items")) {
            for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], ptr + "/" + std::to_string(i), out);
        }
    }
}

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema) {
    std::vector<std::string> out;
    check(instance, schema, "", out);
    return out;
}

}  // namespace flowtok::metrics
