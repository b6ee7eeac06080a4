// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace flowtok::metrics {

// Validates `instance` against a JSON Schema subset: type (string or list,
// "integer" included), enum, const, properties, required,
// additionalProperties (bool or schema), items, minItems, minimum, maximum,
// anyOf. Returns one message per violation, each prefixed with its JSON
// pointer; empty means valid.
std::vector<std::string> validate_schema(const nlohmann::json& instance, const nlohmann::json& schema);

}  // namespace flowtok::metrics
