// SPDX-License-Identifier: Apache-2.0
#include "testgenie/prompt_forge.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <regex>
#include <sstream>

namespace testgenie {

namespace detail {
const std::map<std::string, std::string>& builtin_prompt_files();
}

namespace {

constexpr std::array<std::string_view, 5> kTemplateNames{
    "system_prompt", "test_example", "user_prompt", "refactor_prompt", "requirement_expansion"};

std::string chomp(std::string s)
{
    if (!s.empty() && s.back() == '\n') {
        s.pop_back();
    }
    return s;
}

void require_non_empty(std::string_view value, std::string_view what)
{
    if (value.empty()) {
        throw PreconditionError(std::string{what} + " must not be empty");
    }
}

} // namespace

std::string_view to_string(Role role)
{
    switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
    }
    return "user";
}

Role role_from_string(std::string_view s)
{
    if (s == "system") return Role::System;
    if (s == "user") return Role::User;
    if (s == "assistant") return Role::Assistant;
    throw PreconditionError("unknown chat role: " + std::string{s});
}

Role ChatHistory::expected_next() const noexcept
{
    if (turns_.empty()) {
        return Role::System;
    }
    return turns_.back().role == Role::User ? Role::Assistant : Role::User;
}

ChatHistory ChatHistory::append(Role role, std::string content) const
{
    if (content.empty()) {
        throw PreconditionError("chat turn content must not be empty");
    }
    if (role != expected_next()) {
        throw AlternationError("cannot append a " + std::string{to_string(role)} +
                               " turn; expected " + std::string{to_string(expected_next())} +
                               " after " + std::to_string(turns_.size()) + " turn(s)");
    }
    ChatHistory next = *this;
    next.turns_.push_back(ChatTurn{role, std::move(content)});
    return next;
}

Json ChatHistory::to_messages() const
{
    Json messages = Json::array();
    for (const auto& t : turns_) {
        messages.push_back(Json{{"role", to_string(t.role)}, {"content", t.content}});
    }
    return messages;
}

ChatHistory ChatHistory::from_messages(const Json& messages)
{
    ChatHistory h;
    for (const auto& m : messages) {
        h = h.append(role_from_string(m.at("role").get<std::string>()),
                     m.at("content").get<std::string>());
    }
    return h;
}

Json ChatHistory::to_template_json() const
{
    Json out = Json::object();
    out["system_prompt"] = turns_.empty() ? Json(nullptr) : Json(turns_.front().content);
    Json interactions = Json::array();
    for (std::size_t i = 1; i < turns_.size(); i += 2) {
        Json entry = Json::object();
        entry["user_prompt"] = turns_[i].content;
        entry["generation"] = i + 1 < turns_.size() ? Json(turns_[i + 1].content) : Json(nullptr);
        interactions.push_back(std::move(entry));
    }
    out["interactions"] = std::move(interactions);
    return out;
}

std::string_view to_string(PromptLevel level)
{
    switch (level) {
    case PromptLevel::L1: return "L1";
    case PromptLevel::L2: return "L2";
    case PromptLevel::L3: return "L3";
    }
    return "L1";
}

PromptLevel prompt_level_from_string(std::string_view s)
{
    if (s == "L1" || s == "l1" || s == "1") return PromptLevel::L1;
    if (s == "L2" || s == "l2" || s == "2") return PromptLevel::L2;
    if (s == "L3" || s == "l3" || s == "3") return PromptLevel::L3;
    throw PreconditionError("unknown prompt level: " + std::string{s});
}

bool is_valid_env_name(std::string_view name)
{
    if (name.empty() || name[0] < 'A' || name[0] > 'Z') {
        return false;
    }
    for (const char c : name) {
        if (!((c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_')) {
            return false;
        }
    }
    return true;
}

std::vector<EnvVarDescriptor> parse_env_descriptors(std::string_view text)
{
    std::vector<EnvVarDescriptor> out;
    std::istringstream in{std::string{text}};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        const auto colon = line.find(':');
        if (colon == std::string::npos) {
            throw PreconditionError("env allowlist line " + std::to_string(line_no) +
                                    ": expected 'NAME: description'");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        EnvVarDescriptor d{trim(line.substr(0, colon)), trim(line.substr(colon + 1))};
        if (!is_valid_env_name(d.name)) {
            throw PreconditionError("env allowlist line " + std::to_string(line_no) +
                                    ": invalid variable name '" + d.name + "'");
        }
        out.push_back(std::move(d));
    }
    return out;
}

const PromptTemplates& PromptTemplates::builtin()
{
    static const PromptTemplates templates = [] {
        PromptTemplates t;
        for (const auto& [name, text] : detail::builtin_prompt_files()) {
            t.files_.emplace(name, chomp(text));
        }
        return t;
    }();
    return templates;
}

PromptTemplates PromptTemplates::load(const std::filesystem::path& dir)
{
    PromptTemplates t = builtin();
    for (const auto name : kTemplateNames) {
        const auto path = dir / (std::string{name} + ".txt");
        std::ifstream in{path, std::ios::binary};
        if (!in) {
            continue;
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        t.set(std::string{name}, chomp(buf.str()));
    }
    return t;
}

const std::string& PromptTemplates::get(std::string_view name) const
{
    const auto it = files_.find(name);
    if (it == files_.end()) {
        throw TemplateError("unknown prompt template: " + std::string{name});
    }
    return it->second;
}

void PromptTemplates::set(std::string name, std::string text)
{
    files_.insert_or_assign(std::move(name), std::move(text));
}

std::vector<std::string> placeholders_of(std::string_view tpl)
{
    static const std::regex re{R"(\{\{([A-Za-z_][A-Za-z0-9_]*)\}\})"};
    std::vector<std::string> names;
    const std::string text{tpl};
    for (auto it = std::sregex_iterator(text.begin(), text.end(), re); it != std::sregex_iterator();
         ++it) {
        names.push_back((*it)[1].str());
    }
    return names;
}

std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& values,
                            std::string_view template_name)
{
    const auto present = placeholders_of(tpl);
    for (const auto& [key, value] : values) {
        if (std::find(present.begin(), present.end(), key) == present.end()) {
            throw TemplateError(std::string{template_name} + " is missing placeholder {{" + key + "}}");
        }
    }
    std::string out;
    out.reserve(tpl.size());
    std::size_t pos = 0;
    while (pos < tpl.size()) {
        const auto open = tpl.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        const auto close = tpl.find("}}", open + 2);
        if (close == std::string_view::npos) {
            out.append(tpl.substr(pos));
            break;
        }
        const std::string name{tpl.substr(open + 2, close - open - 2)};
        out.append(tpl.substr(pos, open - pos));
        if (const auto it = values.find(name); it != values.end()) {
            out.append(it->second);
        } else if (std::find(present.begin(), present.end(), name) != present.end()) {
            throw TemplateError(std::string{template_name} + ": unresolved placeholder {{" + name + "}}");
        } else {
            out.append(tpl.substr(open, close + 2 - open));
        }
        pos = close + 2;
    }
    return out;
}

std::string render_env_description(const std::vector<EnvVarDescriptor>& env_vars)
{
    std::string out;
    for (const auto& v : env_vars) {
        if (!is_valid_env_name(v.name)) {
            throw PreconditionError("invalid environment variable name: " + v.name);
        }
        if (!out.empty()) {
            out += '\n';
        }
        out += v.name + ": " + v.description;
    }
    return out;
}

std::string render_system_prompt(std::string_view test_example,
                                 const std::vector<EnvVarDescriptor>& env_vars,
                                 const PromptTemplates& templates)
{
    require_non_empty(test_example, "test_example");
    return render_template(templates.get("system_prompt"),
                           {{"test_example", std::string{test_example}},
                            {"env_description", render_env_description(env_vars)}},
                           "system_prompt");
}

std::string render_user_prompt(std::string_view requirement,
                               std::string_view setup_instructions,
                               std::string_view api_context,
                               const PromptTemplates& templates)
{
    require_non_empty(requirement, "requirement");
    require_non_empty(api_context, "api_context");
    return render_template(templates.get("user_prompt"),
                           {{"user_story", std::string{requirement}},
                            {"setup_instructions", std::string{setup_instructions}},
                            {"api_specification", std::string{api_context}}},
                           "user_prompt");
}

std::string render_refactor_prompt(std::string_view error_log,
                                   std::string_view user_instruction,
                                   const PromptTemplates& templates)
{
    require_non_empty(error_log, "error_log");
    return render_template(templates.get("refactor_prompt"),
                           {{"error", std::string{error_log}},
                            {"user_instruction", std::string{user_instruction}}},
                           "refactor_prompt");
}

std::string render_expansion_prompt(std::string_view requirement, std::size_t count,
                                    const PromptTemplates& templates)
{
    require_non_empty(requirement, "requirement");
    return render_template(templates.get("requirement_expansion"),
                           {{"requirement", std::string{requirement}},
                            {"count", std::to_string(count)}},
                           "requirement_expansion");
}

const std::string& default_test_example()
{
    return PromptTemplates::builtin().get("test_example");
}

} // namespace testgenie
