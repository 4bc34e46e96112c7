// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace reora {

/// Minimal JSON-Schema subset validator (type / required / properties /
/// items / enum), enough to pin result-document layouts in tests.
std::vector<std::string> validate_schema(const nlohmann::json& value,
                                         const nlohmann::json& schema,
                                         const std::string& path = "$");

}  // namespace reora
