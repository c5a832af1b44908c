#pragma once

#include <string>
#include <vector>

#include "mcpforge/util.hpp"

namespace mcpforge::schemas {

// Structured-output contracts for gateway responses. Each schema id names a
// shape; validate() returns the list of violations (empty = conforms).
bool is_registered(const std::string& schema_id);
std::vector<std::string> registered_ids();
std::vector<std::string> validate(const std::string& schema_id, const json& value);

inline bool conforms(const std::string& schema_id, const json& value) {
    return validate(schema_id, value).empty();
}

}  // namespace mcpforge::schemas
