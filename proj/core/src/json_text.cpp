// SPDX-License-Identifier: Apache-2.0
#include "testgenie/json_text.hpp"

#include "testgenie/error.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <regex>

namespace testgenie {

namespace {

constexpr char kHex[] = "0123456789abcdef";

void append_u16(std::string& out, std::uint32_t unit)
{
    out += "\\u";
    for (int shift = 12; shift >= 0; shift -= 4) {
        out += kHex[(unit >> shift) & 0xF];
    }
}

// Decodes one UTF-8 sequence starting at `i`; returns U+FFFD on malformed input.
std::uint32_t next_code_point(std::string_view s, std::size_t& i)
{
    const auto lead = static_cast<unsigned char>(s[i]);
    int extra = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
        ++i;
        return lead;
    }
    if ((lead & 0xE0) == 0xC0) {
        extra = 1;
        cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
        extra = 2;
        cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
        extra = 3;
        cp = lead & 0x07;
    } else {
        ++i;
        return 0xFFFD;
    }
    if (i + extra >= s.size()) {
        i = s.size();
        return 0xFFFD;
    }
    for (int k = 1; k <= extra; ++k) {
        const auto c = static_cast<unsigned char>(s[i + k]);
        if ((c & 0xC0) != 0x80) {
            i += k;
            return 0xFFFD;
        }
        cp = (cp << 6) | (c & 0x3F);
    }
    i += extra + 1;
    return cp;
}

void dump_string(std::string& out, std::string_view s)
{
    out += '"';
    std::size_t i = 0;
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            ++i;
            switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            default:
                if (c < 0x20) {
                    append_u16(out, c);
                } else {
                    out += static_cast<char>(c);
                }
            }
            continue;
        }
        const std::uint32_t cp = next_code_point(s, i);
        if (cp >= 0x10000) {
            const std::uint32_t v = cp - 0x10000;
            append_u16(out, 0xD800 + (v >> 10));
            append_u16(out, 0xDC00 + (v & 0x3FF));
        } else {
            append_u16(out, cp);
        }
    }
    out += '"';
}

void dump_value(std::string& out, const Json& v)
{
    switch (v.type()) {
    case Json::value_t::object: {
        out += '{';
        bool first = true;
        for (const auto& [key, child] : v.items()) {
            if (!first) {
                out += ", ";
            }
            first = false;
            dump_string(out, key);
            out += ": ";
            dump_value(out, child);
        }
        out += '}';
        break;
    }
    case Json::value_t::array: {
        out += '[';
        bool first = true;
        for (const auto& child : v) {
            if (!first) {
                out += ", ";
            }
            first = false;
            dump_value(out, child);
        }
        out += ']';
        break;
    }
    case Json::value_t::string:
        dump_string(out, v.get_ref<const std::string&>());
        break;
    case Json::value_t::number_float: {
        const double d = v.get<double>();
        if (std::isnan(d)) {
            out += "NaN";
        } else if (std::isinf(d)) {
            out += d > 0 ? "Infinity" : "-Infinity";
        } else {
            out += v.dump();
        }
        break;
    }
    default:
        out += v.dump();
    }
}

std::string location_of(std::string_view text, std::size_t byte_offset)
{
    std::size_t line = 1;
    std::size_t column = 1;
    for (std::size_t i = 0; i < byte_offset && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            column = 1;
        } else {
            ++column;
        }
    }
    return "line " + std::to_string(line) + ", column " + std::to_string(column);
}

Json resolve_plain_scalar(const std::string& s)
{
    static const std::regex int_re{R"([-+]?[0-9]+)"};
    static const std::regex float_re{R"([-+]?(\.[0-9]+|[0-9]+(\.[0-9]*)?)([eE][-+]?[0-9]+)?)"};
    if (s.empty() || s == "~" || s == "null" || s == "Null" || s == "NULL") {
        return nullptr;
    }
    if (s == "true" || s == "True" || s == "TRUE") {
        return true;
    }
    if (s == "false" || s == "False" || s == "FALSE") {
        return false;
    }
    if (std::regex_match(s, int_re)) {
        const char* first = s.data() + (s[0] == '+' ? 1 : 0);
        std::int64_t value = 0;
        const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), value);
        if (ec == std::errc{} && ptr == s.data() + s.size()) {
            return value;
        }
    }
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'o')) {
        std::int64_t value = 0;
        const int base = s[1] == 'x' ? 16 : 8;
        const auto [ptr, ec] = std::from_chars(s.data() + 2, s.data() + s.size(), value, base);
        if (ec == std::errc{} && ptr == s.data() + s.size()) {
            return value;
        }
    }
    if (std::regex_match(s, float_re)) {
        return std::stod(s);
    }
    if (s == ".inf" || s == ".Inf" || s == ".INF" || s == "+.inf") {
        return std::numeric_limits<double>::infinity();
    }
    if (s == "-.inf" || s == "-.Inf" || s == "-.INF") {
        return -std::numeric_limits<double>::infinity();
    }
    return s;
}

Json convert(const YAML::Node& node)
{
    switch (node.Type()) {
    case YAML::NodeType::Null:
        return nullptr;
    case YAML::NodeType::Scalar: {
        const std::string& text = node.Scalar();
        // "!" marks a quoted scalar; "?" a plain one subject to resolution.
        if (node.Tag() == "?") {
            return resolve_plain_scalar(text);
        }
        return text;
    }
    case YAML::NodeType::Sequence: {
        Json array = Json::array();
        for (const auto& child : node) {
            array.push_back(convert(child));
        }
        return array;
    }
    case YAML::NodeType::Map: {
        Json object = Json::object();
        for (const auto& entry : node) {
            object[entry.first.as<std::string>()] = convert(entry.second);
        }
        return object;
    }
    case YAML::NodeType::Undefined:
        break;
    }
    return nullptr;
}

void collect_leaves(const Json& v, const std::string& prefix, std::vector<std::string>& out)
{
    if (v.is_object() && !v.empty()) {
        for (const auto& [key, child] : v.items()) {
            collect_leaves(child, prefix + "/" + escape_pointer_token(key), out);
        }
    } else if (v.is_array() && !v.empty()) {
        for (std::size_t i = 0; i < v.size(); ++i) {
            collect_leaves(v[i], prefix + "/" + std::to_string(i), out);
        }
    } else {
        out.push_back(prefix);
    }
}

} // namespace

std::string dumps(const Json& value)
{
    std::string out;
    dump_value(out, value);
    return out;
}

std::string dump_pretty(const Json& value)
{
    return value.dump(2, ' ', false, Json::error_handler_t::replace);
}

Json yaml_to_json(std::string_view text, std::string_view origin)
{
    try {
        return convert(YAML::Load(std::string{text}));
    } catch (const YAML::Exception& e) {
        throw DocumentParseError(std::string{origin} + ": YAML parse error at line " +
                                 std::to_string(e.mark.line + 1) + ", column " +
                                 std::to_string(e.mark.column + 1) + ": " + e.msg);
    }
}

Json parse_document(std::string_view text, std::string_view origin)
{
    std::string_view body = text;
    if (body.substr(0, 3) == "\xEF\xBB\xBF") {
        body.remove_prefix(3);
    }
    const auto first = body.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        throw DocumentParseError(std::string{origin} + ": document is empty");
    }
    if (body[first] == '{' || body[first] == '[') {
        try {
            return Json::parse(body);
        } catch (const Json::parse_error& e) {
            throw DocumentParseError(std::string{origin} + ": JSON parse error at " +
                                     location_of(body, e.byte == 0 ? 0 : e.byte - 1) + ": " +
                                     e.what());
        }
    }
    Json doc = yaml_to_json(body, origin);
    if (!doc.is_object() && !doc.is_array()) {
        throw DocumentParseError(std::string{origin} +
                                 ": document is neither a JSON nor a YAML mapping");
    }
    return doc;
}

std::string escape_pointer_token(std::string_view token)
{
    std::string out;
    out.reserve(token.size());
    for (const char c : token) {
        if (c == '~') {
            out += "~0";
        } else if (c == '/') {
            out += "~1";
        } else {
            out += c;
        }
    }
    return out;
}

std::vector<std::string> leaf_pointers(const Json& value)
{
    std::vector<std::string> out;
    collect_leaves(value, "", out);
    return out;
}

} // namespace testgenie
