// SPDX-License-Identifier: Apache-2.0
#include "reora/jsonschema.hpp"

namespace reora {

namespace {

bool type_matches(const nlohmann::json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "number") return v.is_number();
    if (type == "integer") return v.is_number_integer();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    return false;
}

}  // namespace

std::vector<std::string> validate_schema(const nlohmann::json& value,
                                         const nlohmann::json& schema,
                                         const std::string& path) {
    std::vector<std::string> errors;
    if (schema.contains("type")) {
        const auto type = schema.at("type").get<std::string>();
        if (!type_matches(value, type)) {
            errors.push_back(path + ": expected " + type + ", got " +
                             std::string(value.type_name()));
            return errors;
        }
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& e : schema.at("enum"))
            if (e == value) found = true;
        if (!found) errors.push_back(path + ": value not in enum");
    }
    if (schema.contains("required")) {
        for (const auto& key : schema.at("required")) {
            if (!value.contains(key.get<std::string>()))
                errors.push_back(path + ": missing required field '" +
                                 key.get<std::string>() + "'");
        }
    }
    if (schema.contains("properties") && value.is_object()) {
        for (const auto& [key, sub] : schema.at("properties").items()) {
            if (value.contains(key)) {
                auto sub_errors = validate_schema(value.at(key), sub,
                                                  path + "." + key);
                errors.insert(errors.end(), sub_errors.begin(), sub_errors.end());
            }
        }
    }
    if (schema.contains("items") && value.is_array()) {
        for (std::size_t i = 0; i < value.size(); ++i) {
            auto sub_errors =
                validate_schema(value[i], schema.at("items"),
                                path + "[" + std::to_string(i) + "]");
            errors.insert(errors.end(), sub_errors.begin(), sub_errors.end());
        }
    }
    return errors;
}

}  // namespace reora
