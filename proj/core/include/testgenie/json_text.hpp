// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <string_view>
#include <vector>

namespace testgenie {

/// Order-preserving JSON tree used for every OpenAPI document.
using Json = nlohmann::ordered_json;

/// Single-line serialization used for token accounting and chunk text.
///
/// Byte-compatible with Python's `json.dumps(obj)` defaults: `", "` and
/// `": "` separators, non-ASCII escaped as `\uXXXX` (surrogate pairs above
/// the BMP), `/` left unescaped.
std::string dumps(const Json& value);

/// Two-space indented serialization for human inspection.
std::string dump_pretty(const Json& value);

/// Parses JSON text or, failing that, YAML text into an ordered JSON tree.
/// `origin` is used in error messages (file path or URL).
Json parse_document(std::string_view text, std::string_view origin);

/// Converts YAML text to JSON, resolving plain scalars to null/bool/number.
Json yaml_to_json(std::string_view text, std::string_view origin);

/// RFC 6901 escaping of a single reference token.
std::string escape_pointer_token(std::string_view token);

/// JSON pointers of every leaf (scalar, empty object, empty array) in document order.
std::vector<std::string> leaf_pointers(const Json& value);

} // namespace testgenie
