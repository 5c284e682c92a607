// SPDX-License-Identifier: Apache-2.0
#include "testgenie/spec_ingest.hpp"

#include "testgenie/error.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace testgenie {

namespace {

bool iequals(std::string_view a, std::string_view b)
{
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

bool is_url(std::string_view s)
{
    return s.starts_with("http://") || s.starts_with("https://");
}

std::string name_from_source(std::string_view source)
{
    std::string_view tail = source;
    if (const auto q = tail.find_first_of("?#"); q != std::string_view::npos) {
        tail = tail.substr(0, q);
    }
    while (!tail.empty() && tail.back() == '/') {
        tail.remove_suffix(1);
    }
    if (const auto slash = tail.find_last_of('/'); slash != std::string_view::npos) {
        tail = tail.substr(slash + 1);
    }
    return std::filesystem::path{std::string{tail}}.stem().string();
}

std::string read_url(const std::string& url)
{
    // Split scheme://host[:port] from the path for httplib.
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end + 3);
    const std::string origin = url.substr(0, path_start);
    const std::string path = path_start == std::string::npos ? "/" : url.substr(path_start);

    httplib::Client client{origin};
    client.set_follow_location(true);
    client.set_connection_timeout(10);
    client.set_read_timeout(60);
    auto res = client.Get(path);
    if (!res) {
        throw FetchError("cannot fetch " + url + ": " + httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw FetchError("cannot fetch " + url + ": HTTP " + std::to_string(res->status));
    }
    return res->body;
}

std::string read_file(const std::filesystem::path& path)
{
    std::error_code ec;
    if (!std::filesystem::is_regular_file(path, ec)) {
        throw FetchError("spec file not found: " + path.string());
    }
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw FetchError("cannot open spec file: " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void strip_strings(Json& node)
{
    if (node.is_string()) {
        auto& s = node.get_ref<std::string&>();
        if (s.find("<img") != std::string::npos) {
            s = strip_img_tags(s);
        }
    } else if (node.is_structured()) {
        for (auto& child : node) {
            strip_strings(child);
        }
    }
}

bool has_admin_tag(const Json& operation)
{
    const auto tags = operation.find("tags");
    if (tags == operation.end() || !tags->is_array()) {
        return false;
    }
    return std::any_of(tags->begin(), tags->end(), [](const Json& t) {
        return t.is_string() && iequals(t.get_ref<const std::string&>(), "admin");
    });
}

bool is_deprecated(const Json& operation)
{
    const auto it = operation.find("deprecated");
    return it != operation.end() && it->is_boolean() && it->get<bool>();
}

} // namespace

bool is_http_method(std::string_view key)
{
    static constexpr std::array<std::string_view, 8> methods{
        "get", "put", "post", "delete", "options", "head", "patch", "trace"};
    return std::find(methods.begin(), methods.end(), key) != methods.end();
}

bool is_admin_path(std::string_view path)
{
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto end = std::min(path.find('/', start), path.size());
        if (iequals(path.substr(start, end - start), "admin")) {
            return true;
        }
        start = end + 1;
    }
    return false;
}

std::string strip_img_tags(std::string_view text)
{
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("<img", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        const auto close = text.find('>', open);
        if (close == std::string_view::npos) {
            break;
        }
        pos = close + 1;
    }
    return out;
}

Json simplify(const Json& raw)
{
    Json out = raw;
    auto paths = out.find("paths");
    if (paths != out.end()) {
        if (!paths->is_object()) {
            spdlog::warn("simplify: 'paths' is not an object; left untouched");
        } else {
            Json kept = Json::object();
            for (auto& [path, item] : paths->items()) {
                if (is_admin_path(path)) {
                    continue;
                }
                if (!item.is_object()) {
                    spdlog::warn("simplify: path item '{}' is not an object; left untouched", path);
                    kept[path] = item;
                    continue;
                }
                Json filtered = Json::object();
                std::size_t operations_before = 0;
                std::size_t operations_after = 0;
                for (auto& [key, value] : item.items()) {
                    if (is_http_method(key)) {
                        ++operations_before;
                        if (!value.is_object()) {
                            spdlog::warn("simplify: operation {} {} is not an object; left untouched",
                                         key, path);
                        } else if (is_deprecated(value) || has_admin_tag(value)) {
                            continue;
                        }
                        ++operations_after;
                    }
                    filtered[key] = value;
                }
                if (operations_before > 0 && operations_after == 0) {
                    continue;
                }
                kept[path] = std::move(filtered);
            }
            *paths = std::move(kept);
        }
    }
    strip_strings(out);
    return out;
}

ApiSpecDoc load_spec_text(std::string name, std::string_view text, std::string_view origin)
{
    ApiSpecDoc doc;
    doc.name = std::move(name);
    doc.source = std::string{origin};
    doc.raw = parse_document(text, origin);
    return doc;
}

ApiSpecDoc fetch_spec(std::string_view source)
{
    const std::string src{source};
    const std::string text = is_url(src) ? read_url(src) : read_file(src);
    return load_spec_text(name_from_source(src), text, src);
}

ApiSpecDoc simplify_spec(ApiSpecDoc doc)
{
    doc.simplified = simplify(doc.raw);
    return doc;
}

void account_tokens(ApiSpecDoc& doc, const TokenizerHandle& handle)
{
    const auto tok = Tokenizer::open(handle);
    doc.token_mode = tok->kind();
    doc.original_tokens = tok->count(dumps(doc.raw));
    doc.simplified_tokens = doc.simplified ? tok->count(dumps(*doc.simplified)) : 0;
}

} // namespace testgenie
