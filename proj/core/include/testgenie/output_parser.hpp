// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace testgenie {

/// One model reply split into its three sections.
struct Generation {
    std::string requirement_text;
    std::string endpoints_text;
    std::string test_text;
    /// Body of the first fenced block in test_text; absent when there is none.
    std::optional<std::string> code;

    bool operator==(const Generation&) const = default;
};

/// A reply is missing one or more of the section tags.
class OutputParseError : public Error {
public:
    explicit OutputParseError(std::vector<std::string> missing);
    const std::vector<std::string>& missing_tags() const noexcept { return missing_; }

private:
    std::vector<std::string> missing_;
};

/// Splits on the first REQUIREMENT, ENDPOINTS and TEST tag lines.
///
/// A tag line starts (after optional whitespace and `*`/`#`/`_` decoration)
/// with the tag name in any case, followed either by a colon or by the end
/// of the line. Text after the colon on the same line belongs to the section.
/// Out-of-order tags are accepted with a warning.
Generation parse_generation(std::string_view raw);

/// Body of the first ``` fence (info string ignored, fence indentation removed).
/// Unterminated fences yield nullopt and a warning.
std::optional<std::string> extract_code_block(std::string_view md);

/// Renders sections in the reply layout the system prompt asks for.
std::string render_generation(std::string_view requirement, std::string_view endpoints,
                              std::string_view test);

} // namespace testgenie
