// SPDX-License-Identifier: Apache-2.0
#include "testgenie/config.hpp"

#include <charconv>
#include <cstdlib>

namespace testgenie {

namespace {

std::size_t parse_count(const std::string& key, const std::string& value)
{
    unsigned long long v = 0;
    const auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (value.empty() || ec != std::errc{} || end != value.data() + value.size()) {
        throw PreconditionError("setting " + key + " expects a non-negative integer, got '" + value + "'");
    }
    return static_cast<std::size_t>(v);
}

std::optional<std::filesystem::path> optional_path(const std::string& value)
{
    if (value.empty()) {
        return std::nullopt;
    }
    return std::filesystem::path{value};
}

} // namespace

const std::vector<std::string>& setting_keys()
{
    static const std::vector<std::string> keys{
        "llm_base_url", "api_key_env", "model",   "embedding_model", "embedder",      "tokenizer",
        "vocabulary",   "specs",       "sandbox", "sessions",        "runs",          "fixtures",
        "prompts",      "rag_threshold", "top_k", "variants",        "runner_timeout", "llm_timeout"};
    return keys;
}

void apply_setting(Settings& s, const std::string& key, const std::string& value)
{
    if (key == "llm_base_url") {
        s.llm_base_url = value;
    } else if (key == "api_key_env") {
        s.api_key_env = value;
    } else if (key == "model") {
        s.model = value;
    } else if (key == "embedding_model") {
        s.embedding_model = value;
    } else if (key == "embedder") {
        if (value != "api" && value != "hashing") {
            throw PreconditionError("embedder must be 'api' or 'hashing', got '" + value + "'");
        }
        s.embedder = value;
    } else if (key == "tokenizer") {
        if (value != "auto" && value != "exact" && value != "approximate") {
            throw PreconditionError("tokenizer must be auto, exact or approximate, got '" + value + "'");
        }
        s.tokenizer = value;
    } else if (key == "vocabulary") {
        s.vocabulary = optional_path(value);
    } else if (key == "specs") {
        s.specs = value;
    } else if (key == "sandbox") {
        s.sandbox = value;
    } else if (key == "sessions") {
        s.sessions = value;
    } else if (key == "runs") {
        s.runs = optional_path(value);
    } else if (key == "fixtures") {
        s.fixtures = optional_path(value);
    } else if (key == "prompts") {
        s.prompts = optional_path(value);
    } else if (key == "rag_threshold") {
        s.rag_threshold = parse_count(key, value);
    } else if (key == "top_k") {
        s.top_k = parse_count(key, value);
    } else if (key == "variants") {
        s.variants = parse_count(key, value);
    } else if (key == "runner_timeout") {
        s.runner_timeout = parse_count(key, value);
    } else if (key == "llm_timeout") {
        s.llm_timeout = parse_count(key, value);
    } else {
        throw PreconditionError("unknown setting: " + key);
    }
}

std::map<std::string, std::string> describe_settings(const Settings& s)
{
    auto p = [](const std::optional<std::filesystem::path>& v) { return v ? v->string() : std::string{}; };
    return {
        {"llm_base_url", s.llm_base_url},
        {"api_key_env", s.api_key_env},
        {"model", s.model},
        {"embedding_model", s.embedding_model},
        {"embedder", s.embedder},
        {"tokenizer", s.tokenizer},
        {"vocabulary", p(s.vocabulary)},
        {"specs", s.specs.string()},
        {"sandbox", s.sandbox.string()},
        {"sessions", s.sessions.string()},
        {"runs", p(s.runs)},
        {"fixtures", p(s.fixtures)},
        {"prompts", p(s.prompts)},
        {"rag_threshold", std::to_string(s.rag_threshold)},
        {"top_k", std::to_string(s.top_k)},
        {"variants", std::to_string(s.variants)},
        {"runner_timeout", std::to_string(s.runner_timeout)},
        {"llm_timeout", std::to_string(s.llm_timeout)},
    };
}

TokenizerHandle make_tokenizer(const Settings& s)
{
    if (s.tokenizer == "approximate") {
        return TokenizerHandle::approximate();
    }
    if (s.vocabulary) {
        std::error_code ec;
        if (!std::filesystem::is_regular_file(*s.vocabulary, ec)) {
            throw VocabularyError("vocabulary file not found: " + s.vocabulary->string());
        }
        return TokenizerHandle::exact(*s.vocabulary);
    }
    const TokenizerHandle found = TokenizerHandle::detect();
    if (s.tokenizer == "exact" && found.kind != TokenizerKind::ExactBpe) {
        throw VocabularyError("exact tokenizer requested but no cl100k_base vocabulary was found");
    }
    return found;
}

std::shared_ptr<OpenAiClient> make_client(const Settings& s, const TokenizerHandle& tok)
{
    GatewayConfig gc;
    gc.embedding_model = s.embedding_model;
    gc.tokenizer = tok;
    std::shared_ptr<Transport> transport;
    if (s.fixtures) {
        transport = std::make_shared<FixtureTransport>(*s.fixtures);
    } else {
        if (const char* key = std::getenv(s.api_key_env.c_str())) {
            gc.api_key = key;
        }
        transport = std::make_shared<HttplibTransport>(s.llm_base_url, std::chrono::seconds{s.llm_timeout});
    }
    return std::make_shared<OpenAiClient>(std::move(transport), std::move(gc));
}

std::shared_ptr<Embedder> make_embedder(const Settings& s, std::shared_ptr<OpenAiClient> client)
{
    if (s.embedder == "hashing") {
        return std::make_shared<HashingEmbedder>();
    }
    return client;
}

ServiceConfig make_service_config(const Settings& s, const TokenizerHandle& tok)
{
    ServiceConfig cfg;
    cfg.sessions_dir = s.sessions;
    cfg.runs_dir = s.runs;
    cfg.sandbox_dir = s.sandbox;
    cfg.runner.timeout = std::chrono::seconds{s.runner_timeout};
    cfg.rag_threshold = s.rag_threshold;
    cfg.top_k = s.top_k;
    cfg.variants = s.variants;
    cfg.tokenizer = tok;
    if (s.prompts) {
        cfg.templates = PromptTemplates::load(*s.prompts);
        cfg.test_example = cfg.templates.get("test_example");
    }
    return cfg;
}

} // namespace testgenie
