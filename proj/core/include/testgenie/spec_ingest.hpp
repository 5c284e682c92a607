// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/json_text.hpp"
#include "testgenie/tokenizer.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace testgenie {

/// An OpenAPI document together with its simplified form and token counts.
///
/// Token counts are taken over `dumps()` of each tree, so `raw` and
/// `simplified` are always measured the same way.
struct ApiSpecDoc {
    std::string name;
    std::string source;
    Json raw;
    std::optional<Json> simplified;
    std::size_t original_tokens = 0;
    std::size_t simplified_tokens = 0;
    TokenizerKind token_mode = TokenizerKind::Approximate;
};

/// Reads a JSON or YAML OpenAPI document from a local path or an http(s) URL.
/// Throws FetchError (unreachable/missing) or DocumentParseError (with location).
ApiSpecDoc fetch_spec(std::string_view source);

/// Same as fetch_spec but from in-memory text.
ApiSpecDoc load_spec_text(std::string name, std::string_view text, std::string_view origin);

/// Removes deprecated operations, admin paths/operations and `<img ...>`
/// markup; paths that lose all of their operations are dropped.
/// Malformed subtrees are passed through untouched.
Json simplify(const Json& raw);

/// Populates `simplified` from `raw`. Does not touch token counts.
ApiSpecDoc simplify_spec(ApiSpecDoc doc);

/// Fills original_tokens/simplified_tokens/token_mode.
void account_tokens(ApiSpecDoc& doc, const TokenizerHandle& handle);

/// Removes every `<img` ... `>` run from a string (an unterminated tag runs to the end).
std::string strip_img_tags(std::string_view text);

/// True when any '/'-separated segment equals "admin" (case-insensitive).
bool is_admin_path(std::string_view path);

/// Lower-case HTTP methods that name operations inside an OpenAPI path item.
bool is_http_method(std::string_view key);

} // namespace testgenie
