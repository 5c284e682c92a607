// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/llm_gateway.hpp"
#include "testgenie/session_service.hpp"
#include "testgenie/tokenizer.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace testgenie {

/// Runtime settings shared by the CLI and the server.
struct Settings {
    std::string llm_base_url = "https://api.openai.com/v1";
    /// Name of the environment variable holding the API key (never the key itself).
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model = "gpt-4-turbo";
    std::string embedding_model = "text-embedding-ada-002";
    /// "api" or "hashing" (offline).
    std::string embedder = "api";
    /// "auto", "exact" or "approximate".
    std::string tokenizer = "auto";
    std::optional<std::filesystem::path> vocabulary;
    std::filesystem::path specs = "data/specs";
    std::filesystem::path sandbox = "sandbox";
    std::filesystem::path sessions = "sessions";
    std::optional<std::filesystem::path> runs;
    /// Offline provider fixtures; selects mock mode when set.
    std::optional<std::filesystem::path> fixtures;
    std::optional<std::filesystem::path> prompts;
    std::size_t rag_threshold = 100000;
    std::size_t top_k = 5;
    std::size_t variants = 5;
    std::size_t runner_timeout = 120;
    std::size_t llm_timeout = 300;
};

/// Setting names accepted by apply_setting, in snake_case.
const std::vector<std::string>& setting_keys();

/// Parses and stores one setting; throws PreconditionError for unknown keys or bad values.
void apply_setting(Settings& s, const std::string& key, const std::string& value);

/// Current values as strings (the API key is never included).
std::map<std::string, std::string> describe_settings(const Settings& s);

TokenizerHandle make_tokenizer(const Settings& s);

/// Mock client over FixtureTransport when `fixtures` is set, HTTP otherwise.
std::shared_ptr<OpenAiClient> make_client(const Settings& s, const TokenizerHandle& tok);

std::shared_ptr<Embedder> make_embedder(const Settings& s, std::shared_ptr<OpenAiClient> client);

ServiceConfig make_service_config(const Settings& s, const TokenizerHandle& tok);

} // namespace testgenie
