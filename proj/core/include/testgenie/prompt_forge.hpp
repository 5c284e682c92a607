// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"
#include "testgenie/json_text.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace testgenie {

enum class Role { System, User, Assistant };

std::string_view to_string(Role role);
Role role_from_string(std::string_view s);

struct ChatTurn {
    Role role;
    std::string content;

    bool operator==(const ChatTurn&) const = default;
};

/// Raised when an append would break system, user, assistant, user, ... ordering.
class AlternationError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

/// Immutable transcript: a system turn followed by strictly alternating
/// user and assistant turns.
class ChatHistory {
public:
    ChatHistory() = default;

    /// Returns a new history with the turn appended; `*this` is unchanged.
    [[nodiscard]] ChatHistory append(Role role, std::string content) const;

    const std::vector<ChatTurn>& turns() const noexcept { return turns_; }
    std::size_t size() const noexcept { return turns_.size(); }
    bool empty() const noexcept { return turns_.empty(); }

    /// Role the next appended turn must have.
    Role expected_next() const noexcept;

    /// `[{"role", "content"}, ...]`, the chat-completions `messages` array.
    Json to_messages() const;
    static ChatHistory from_messages(const Json& messages);

    /// `{"system_prompt", "interactions": [{"user_prompt", "generation"}]}`.
    Json to_template_json() const;

    bool operator==(const ChatHistory&) const = default;

private:
    std::vector<ChatTurn> turns_;
};

enum class PromptLevel { L1, L2, L3 };

std::string_view to_string(PromptLevel level);
PromptLevel prompt_level_from_string(std::string_view s);

struct EnvVarDescriptor {
    std::string name;
    std::string description;

    bool operator==(const EnvVarDescriptor&) const = default;
};

/// `[A-Z][A-Z0-9_]*`
bool is_valid_env_name(std::string_view name);

/// Parses `NAME: description` lines; blank lines and `#` comments are skipped.
/// Throws PreconditionError on a malformed line or invalid name.
std::vector<EnvVarDescriptor> parse_env_descriptors(std::string_view text);

/// A placeholder was left unresolved, or a template lacks a required one.
class TemplateError : public Error {
public:
    using Error::Error;
};

/// Prompt template files keyed by stem: system_prompt, test_example,
/// user_prompt, refactor_prompt, requirement_expansion.
class PromptTemplates {
public:
    /// The templates compiled into the library from prompts/.
    static const PromptTemplates& builtin();

    /// Loads `<dir>/<name>.txt` for every known name; missing files fall back to builtin.
    static PromptTemplates load(const std::filesystem::path& dir);

    const std::string& get(std::string_view name) const;
    void set(std::string name, std::string text);

private:
    std::map<std::string, std::string, std::less<>> files_;
};

/// Single-pass `{{name}}` substitution. Every key in `values` must occur in
/// the template and every placeholder in the template must have a value.
/// Substituted text is not rescanned.
std::string render_template(std::string_view tpl,
                            const std::map<std::string, std::string>& values,
                            std::string_view template_name = "template");

/// Placeholder names in order of appearance.
std::vector<std::string> placeholders_of(std::string_view tpl);

std::string render_env_description(const std::vector<EnvVarDescriptor>& env_vars);

std::string render_system_prompt(std::string_view test_example,
                                 const std::vector<EnvVarDescriptor>& env_vars,
                                 const PromptTemplates& templates = PromptTemplates::builtin());

std::string render_user_prompt(std::string_view requirement,
                               std::string_view setup_instructions,
                               std::string_view api_context,
                               const PromptTemplates& templates = PromptTemplates::builtin());

std::string render_refactor_prompt(std::string_view error_log,
                                   std::string_view user_instruction,
                                   const PromptTemplates& templates = PromptTemplates::builtin());

std::string render_expansion_prompt(std::string_view requirement, std::size_t count,
                                    const PromptTemplates& templates = PromptTemplates::builtin());

/// The TypeScript skeleton used as `{{test_example}}` by default.
const std::string& default_test_example();

} // namespace testgenie
