// SPDX-License-Identifier: Apache-2.0
#include "testgenie/output_parser.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>

namespace testgenie {

namespace {

constexpr std::array<std::string_view, 3> kTags{"REQUIREMENT", "ENDPOINTS", "TEST"};

bool is_hspace(char c)
{
    return c == ' ' || c == '\t' || c == '\r';
}

bool is_decoration(char c)
{
    return c == '*' || c == '#' || c == '_';
}

bool iequals_prefix(std::string_view s, std::string_view prefix)
{
    if (s.size() < prefix.size()) {
        return false;
    }
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::toupper(static_cast<unsigned char>(s[i])) != prefix[i]) {
            return false;
        }
    }
    return true;
}

struct TagHit {
    std::size_t tag = 0;
    std::size_t line_start = 0;
    std::size_t content_start = 0;
};

// Matches a tag at the start of `line`; returns the offset of the section
// content within the line.
std::optional<std::pair<std::size_t, std::size_t>> match_tag_line(std::string_view line)
{
    std::size_t i = 0;
    while (i < line.size() && (is_hspace(line[i]) || is_decoration(line[i]))) {
        ++i;
    }
    for (std::size_t t = 0; t < kTags.size(); ++t) {
        if (!iequals_prefix(line.substr(i), kTags[t])) {
            continue;
        }
        std::size_t j = i + kTags[t].size();
        if (j < line.size() && (std::isalnum(static_cast<unsigned char>(line[j])))) {
            continue;
        }
        while (j < line.size() && (is_hspace(line[j]) || is_decoration(line[j]))) {
            ++j;
        }
        bool colon = false;
        if (j < line.size() && line[j] == ':') {
            colon = true;
            ++j;
            while (j < line.size() && is_decoration(line[j])) {
                ++j;
            }
            while (j < line.size() && is_hspace(line[j])) {
                ++j;
            }
        }
        if (!colon && j != line.size()) {
            continue;
        }
        return std::make_pair(t, j);
    }
    return std::nullopt;
}

std::string_view strip_fence_newlines(std::string_view s, bool strip_final)
{
    if (strip_final && !s.empty() && s.back() == '\n') {
        s.remove_suffix(1);
        if (!s.empty() && s.back() == '\r') {
            s.remove_suffix(1);
        }
    }
    return s;
}

std::size_t indent_of(std::string_view line)
{
    std::size_t i = 0;
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) {
        ++i;
    }
    return i;
}

} // namespace

OutputParseError::OutputParseError(std::vector<std::string> missing)
    : Error([&] {
          std::string msg = "generation is missing tag";
          msg += missing.size() > 1 ? "s" : "";
          for (std::size_t i = 0; i < missing.size(); ++i) {
              msg += (i == 0 ? " " : ", ") + missing[i];
          }
          return msg;
      }()),
      missing_(std::move(missing))
{
}

Generation parse_generation(std::string_view raw)
{
    if (raw.empty()) {
        throw PreconditionError("generation text is empty");
    }
    std::array<std::optional<TagHit>, 3> hits;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        std::size_t end = raw.find('\n', pos);
        if (end == std::string_view::npos) {
            end = raw.size();
        }
        if (const auto m = match_tag_line(raw.substr(pos, end - pos)); m && !hits[m->first]) {
            hits[m->first] = TagHit{m->first, pos, pos + m->second};
            // Content starts on the next line when nothing follows the tag.
            if (hits[m->first]->content_start == end) {
                hits[m->first]->content_start = std::min(end + 1, raw.size());
            }
        }
        if (end == raw.size()) {
            break;
        }
        pos = end + 1;
    }

    std::vector<std::string> missing;
    for (std::size_t t = 0; t < kTags.size(); ++t) {
        if (!hits[t]) {
            missing.emplace_back(kTags[t]);
        }
    }
    if (!missing.empty()) {
        throw OutputParseError(std::move(missing));
    }

    std::vector<TagHit> ordered{*hits[0], *hits[1], *hits[2]};
    std::sort(ordered.begin(), ordered.end(),
              [](const TagHit& a, const TagHit& b) { return a.line_start < b.line_start; });
    if (ordered[0].tag != 0 || ordered[1].tag != 1) {
        spdlog::warn("generation tags appear out of order; sections associated by name");
    }

    std::array<std::string, 3> sections;
    for (std::size_t k = 0; k < ordered.size(); ++k) {
        const std::size_t begin = ordered[k].content_start;
        std::size_t end = raw.size();
        bool strip_final = false;
        if (k + 1 < ordered.size()) {
            end = ordered[k + 1].line_start;
            strip_final = true;
        }
        std::string_view body = begin < end ? raw.substr(begin, end - begin) : std::string_view{};
        sections[ordered[k].tag] = std::string{strip_fence_newlines(body, strip_final)};
    }

    Generation g;
    g.requirement_text = std::move(sections[0]);
    g.endpoints_text = std::move(sections[1]);
    g.test_text = std::move(sections[2]);
    g.code = extract_code_block(g.test_text);
    return g;
}

std::optional<std::string> extract_code_block(std::string_view md)
{
    std::size_t pos = 0;
    std::optional<std::size_t> body_start;
    std::size_t fence_indent = 0;
    std::vector<std::string_view> lines;
    while (pos <= md.size()) {
        std::size_t end = md.find('\n', pos);
        if (end == std::string_view::npos) {
            end = md.size();
        }
        std::string_view line = md.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        const std::size_t ind = indent_of(line);
        const bool fence = line.substr(ind).starts_with("```");
        if (!body_start) {
            if (fence) {
                body_start = end;
                fence_indent = ind;
            }
        } else if (fence && line.substr(ind).find_first_not_of('`') == std::string_view::npos) {
            std::string code;
            for (std::size_t i = 0; i < lines.size(); ++i) {
                std::string_view l = lines[i];
                const std::size_t drop = std::min(fence_indent, indent_of(l));
                l.remove_prefix(drop);
                if (i > 0) {
                    code += '\n';
                }
                code += l;
            }
            return code;
        } else {
            lines.push_back(line);
        }
        if (end == md.size()) {
            break;
        }
        pos = end + 1;
    }
    if (body_start) {
        spdlog::warn("unterminated code fence; no code extracted");
    }
    return std::nullopt;
}

std::string render_generation(std::string_view requirement, std::string_view endpoints,
                              std::string_view test)
{
    std::string out = "REQUIREMENT:\n";
    out += requirement;
    out += "\nENDPOINTS:\n";
    out += endpoints;
    out += "\nTEST:\n";
    out += test;
    return out;
}

} // namespace testgenie
