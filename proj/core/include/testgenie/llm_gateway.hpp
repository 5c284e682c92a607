// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"
#include "testgenie/json_text.hpp"
#include "testgenie/prompt_forge.hpp"
#include "testgenie/tokenizer.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace testgenie {

/// A chat model with its context size and per-1000-token prices (EUR).
struct ModelProfile {
    std::string name;
    std::size_t context_window = 0;
    double input_price = 0.0;
    double output_price = 0.0;
    double temperature = 1.0;
    double top_p = 1.0;

    /// Throws PreconditionError when a field is out of range.
    void validate() const;
};

/// gpt-3.5-turbo, gpt-4 and gpt-4-turbo with their published EUR prices.
const std::vector<ModelProfile>& builtin_model_profiles();
const ModelProfile& find_model_profile(std::string_view name);

struct Usage {
    std::size_t input_tokens = 0;
    std::size_t output_tokens = 0;
    double elapsed_seconds = 0.0;
    /// True when counts came from the provider's `usage` object.
    bool provider_reported = false;

    bool operator==(const Usage&) const = default;
};

/// input_tokens/1000 * input_price + output_tokens/1000 * output_price.
double estimate_cost(const Usage& usage, const ModelProfile& profile);

struct ChatResult {
    std::string content;
    Usage usage;
};

class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResult complete(const ChatHistory& history, const ModelProfile& profile) = 0;
};

struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    /// One vector per input, same order, uniform dimension.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
};

class TransportError : public Error {
public:
    using Error::Error;
};

class HttpStatusError : public Error {
public:
    HttpStatusError(int status, std::string body);
    int status() const noexcept { return status_; }
    const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

class MalformedResponseError : public Error {
public:
    using Error::Error;
};

class ContextOverflowError : public PreconditionError {
public:
    ContextOverflowError(std::size_t needed, std::size_t window);
    std::size_t needed() const noexcept { return needed_; }
    std::size_t window() const noexcept { return window_; }

private:
    std::size_t needed_;
    std::size_t window_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

/// POSTs a JSON body to an endpoint path ("/chat/completions", "/embeddings").
/// Throws TransportError when no response is received.
class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post_json(const std::string& path, const std::string& body,
                                   const std::map<std::string, std::string>& headers) = 0;
};

/// Real network transport. `base_url` like "https://api.openai.com/v1".
class HttplibTransport : public Transport {
public:
    explicit HttplibTransport(std::string base_url,
                              std::chrono::seconds timeout = std::chrono::seconds{300});
    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers) override;

private:
    std::string origin_;
    std::string path_prefix_;
    std::chrono::seconds timeout_;
};

/// Offline provider: answers from `<dir>/<sha256(body)>.json`; chat requests
/// with no exact fixture fall back to `<dir>/default_chat.json` when present.
class FixtureTransport : public Transport {
public:
    explicit FixtureTransport(std::filesystem::path dir);
    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers) override;

    /// Bodies of every request seen, in order.
    std::vector<std::string> requests() const;

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::vector<std::string> requests_;
};

std::string sha256_hex(std::string_view data);

struct GatewayConfig {
    std::string api_key;
    std::string embedding_model = "text-embedding-ada-002";
    TokenizerHandle tokenizer = TokenizerHandle::approximate();
    int max_attempts = 2;
    std::chrono::milliseconds backoff_base{2000};
    /// Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

/// Chat-completions and embeddings over an OpenAI-compatible wire protocol.
class OpenAiClient : public ChatClient, public Embedder {
public:
    OpenAiClient(std::shared_ptr<Transport> transport, GatewayConfig config);

    ChatResult complete(const ChatHistory& history, const ModelProfile& profile) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

    /// Pre-flight prompt size; approximate mode includes a 5% safety margin.
    std::size_t prompt_tokens(const ChatHistory& history) const;

private:
    HttpResponse post_with_retry(const std::string& path, const std::string& body);

    std::shared_ptr<Transport> transport_;
    GatewayConfig config_;
};

Json make_chat_request(const ChatHistory& history, const ModelProfile& profile);
ChatResult parse_chat_response(const Json& response);
Json make_embedding_request(const std::vector<std::string>& texts, const std::string& model);
std::vector<EmbeddingVector> parse_embedding_response(const Json& response, std::size_t expected);

/// Deterministic offline embedder: hashed bag of lower-cased word and
/// character-trigram features, L2-normalised.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dim = 256);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;

private:
    std::size_t dim_;
};

} // namespace testgenie
