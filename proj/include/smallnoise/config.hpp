#pragma once

#include "smallnoise/model.hpp"

#include <json.hpp>

#include <string>

namespace smallnoise {

using Json = nlohmann::json;

/// Parses the TOML subset used by model files (tables, key/value pairs,
/// numbers, booleans, basic strings, arrays and inline tables) into JSON.
Json parse_toml(const std::string& text);

/// Reads a model document; `.toml` files go through parse_toml, anything else
/// is parsed as JSON.
Json read_model_document(const std::string& path);

/// Builds a system from a model document. Either
///   {"builtin": name, "params": {...}, "projection": [...] | "projection_mask": [...]}
/// or a polynomial model with "dims", "fields", "drift_eps", "start" and an
/// optional projection.
SystemPtr load_system(const Json& config);

}  // namespace smallnoise
