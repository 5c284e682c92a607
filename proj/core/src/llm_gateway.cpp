// SPDX-License-Identifier: Apache-2.0
#include "testgenie/llm_gateway.hpp"

#include <httplib.h>
#include <openssl/sha.h>
#include <spdlog/spdlog.h>

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

namespace testgenie {

namespace {

bool retryable(int status)
{
    return status == 429 || status >= 500;
}

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in{path, std::ios::binary};
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

void ModelProfile::validate() const
{
    if (name.empty()) {
        throw PreconditionError("model profile needs a name");
    }
    if (context_window == 0) {
        throw PreconditionError("model " + name + ": context_window must be positive");
    }
    if (input_price < 0 || output_price < 0) {
        throw PreconditionError("model " + name + ": prices must be non-negative");
    }
    if (temperature < 0 || temperature > 2) {
        throw PreconditionError("model " + name + ": temperature must be in [0, 2]");
    }
    if (top_p < 0 || top_p > 1) {
        throw PreconditionError("model " + name + ": top_p must be in [0, 1]");
    }
}

const std::vector<ModelProfile>& builtin_model_profiles()
{
    static const std::vector<ModelProfile> profiles{
        {"gpt-3.5-turbo", 16385, 0.0010, 0.0019, 1.0, 1.0},
        {"gpt-4", 32768, 0.056, 0.111, 1.0, 1.0},
        {"gpt-4-turbo", 128000, 0.010, 0.028, 1.0, 1.0},
    };
    return profiles;
}

const ModelProfile& find_model_profile(std::string_view name)
{
    for (const auto& p : builtin_model_profiles()) {
        if (p.name == name) {
            return p;
        }
    }
    throw NotFoundError("unknown model: " + std::string{name});
}

double estimate_cost(const Usage& usage, const ModelProfile& profile)
{
    return static_cast<double>(usage.input_tokens) / 1000.0 * profile.input_price +
           static_cast<double>(usage.output_tokens) / 1000.0 * profile.output_price;
}

HttpStatusError::HttpStatusError(int status, std::string body)
    : Error("HTTP " + std::to_string(status) + ": " + body), status_(status), body_(std::move(body))
{
}

ContextOverflowError::ContextOverflowError(std::size_t needed, std::size_t window)
    : PreconditionError("prompt needs " + std::to_string(needed) + " tokens but the context window is " +
                        std::to_string(window) + " (over by " + std::to_string(needed - window) + ")"),
      needed_(needed), window_(window)
{
}

HttplibTransport::HttplibTransport(std::string base_url, std::chrono::seconds timeout)
    : timeout_(timeout)
{
    while (!base_url.empty() && base_url.back() == '/') {
        base_url.pop_back();
    }
    const auto scheme_end = base_url.find("://");
    const auto path_start =
        base_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    origin_ = base_url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : base_url.substr(path_start);
}

HttpResponse HttplibTransport::post_json(const std::string& path, const std::string& body,
                                         const std::map<std::string, std::string>& headers)
{
    httplib::Client client{origin_};
    client.set_connection_timeout(30);
    client.set_read_timeout(static_cast<time_t>(timeout_.count()));
    client.set_write_timeout(60);
    httplib::Headers hdrs;
    for (const auto& [k, v] : headers) {
        hdrs.emplace(k, v);
    }
    auto res = client.Post(path_prefix_ + path, hdrs, body, "application/json");
    if (!res) {
        throw TransportError("request to " + origin_ + path_prefix_ + path +
                             " failed: " + httplib::to_string(res.error()));
    }
    return HttpResponse{res->status, res->body};
}

FixtureTransport::FixtureTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

HttpResponse FixtureTransport::post_json(const std::string& path, const std::string& body,
                                         const std::map<std::string, std::string>&)
{
    {
        const std::lock_guard lock{mutex_};
        requests_.push_back(body);
    }
    const std::string key = sha256_hex(body);
    std::error_code ec;
    auto file = dir_ / (key + ".json");
    if (!std::filesystem::is_regular_file(file, ec)) {
        const auto fallback = dir_ / "default_chat.json";
        if (path == "/chat/completions" && std::filesystem::is_regular_file(fallback, ec)) {
            file = fallback;
        } else {
            throw TransportError("no mock fixture for request " + key + " (expected " +
                                 file.string() + ")");
        }
    }
    return HttpResponse{200, read_text(file)};
}

std::vector<std::string> FixtureTransport::requests() const
{
    const std::lock_guard lock{mutex_};
    return requests_;
}

std::string sha256_hex(std::string_view data)
{
    unsigned char digest[SHA256_DIGEST_LENGTH];
    SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * SHA256_DIGEST_LENGTH);
    for (const unsigned char b : digest) {
        out += hex[b >> 4];
        out += hex[b & 0xF];
    }
    return out;
}

Json make_chat_request(const ChatHistory& history, const ModelProfile& profile)
{
    Json req = Json::object();
    req["model"] = profile.name;
    req["messages"] = history.to_messages();
    req["temperature"] = profile.temperature;
    req["top_p"] = profile.top_p;
    return req;
}

ChatResult parse_chat_response(const Json& response)
{
    ChatResult result;
    try {
        result.content = response.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const Json::exception& e) {
        throw MalformedResponseError(std::string{"chat response lacks choices[0].message.content: "} +
                                     e.what());
    }
    if (const auto usage = response.find("usage"); usage != response.end() && usage->is_object()) {
        result.usage.input_tokens = usage->value("prompt_tokens", std::size_t{0});
        result.usage.output_tokens = usage->value("completion_tokens", std::size_t{0});
        result.usage.provider_reported = true;
    }
    return result;
}

Json make_embedding_request(const std::vector<std::string>& texts, const std::string& model)
{
    Json req = Json::object();
    req["model"] = model;
    req["input"] = texts;
    return req;
}

std::vector<EmbeddingVector> parse_embedding_response(const Json& response, std::size_t expected)
{
    const auto data = response.find("data");
    if (data == response.end() || !data->is_array()) {
        throw MalformedResponseError("embedding response lacks a data array");
    }
    if (data->size() != expected) {
        throw MalformedResponseError("embedding response has " + std::to_string(data->size()) +
                                     " vectors for " + std::to_string(expected) + " inputs");
    }
    std::vector<EmbeddingVector> out(expected);
    std::vector<bool> seen(expected, false);
    for (std::size_t i = 0; i < data->size(); ++i) {
        const auto& item = (*data)[i];
        const std::size_t index = item.value("index", i);
        if (index >= expected || seen[index]) {
            throw MalformedResponseError("embedding response has a bad or duplicate index");
        }
        seen[index] = true;
        try {
            out[index].values = item.at("embedding").get<std::vector<double>>();
        } catch (const Json::exception& e) {
            throw MalformedResponseError(std::string{"bad embedding payload: "} + e.what());
        }
        for (const double v : out[index].values) {
            if (!std::isfinite(v)) {
                throw MalformedResponseError("embedding contains a non-finite component");
            }
        }
    }
    for (const auto& v : out) {
        if (v.dim() == 0 || v.dim() != out.front().dim()) {
            throw MalformedResponseError("embedding dimensions are not uniform");
        }
    }
    return out;
}

OpenAiClient::OpenAiClient(std::shared_ptr<Transport> transport, GatewayConfig config)
    : transport_(std::move(transport)), config_(std::move(config))
{
    if (!config_.sleep) {
        config_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
    if (config_.max_attempts < 1) {
        config_.max_attempts = 1;
    }
}

std::size_t OpenAiClient::prompt_tokens(const ChatHistory& history) const
{
    const auto tok = Tokenizer::open(config_.tokenizer);
    // Chat framing: 3 tokens per message plus 3 priming the reply.
    std::size_t total = 3;
    for (const auto& turn : history.turns()) {
        total += 3 + tok->count(to_string(turn.role)) + tok->count(turn.content);
    }
    if (tok->kind() == TokenizerKind::Approximate) {
        total = static_cast<std::size_t>(std::ceil(static_cast<double>(total) * 1.05));
    }
    return total;
}

HttpResponse OpenAiClient::post_with_retry(const std::string& path, const std::string& body)
{
    std::map<std::string, std::string> headers;
    if (!config_.api_key.empty()) {
        headers["Authorization"] = "Bearer " + config_.api_key;
    }
    for (int attempt = 1;; ++attempt) {
        const bool last = attempt >= config_.max_attempts;
        try {
            HttpResponse res = transport_->post_json(path, body, headers);
            if (res.status >= 200 && res.status < 300) {
                return res;
            }
            if (!retryable(res.status) || last) {
                throw HttpStatusError(res.status, res.body);
            }
            spdlog::warn("{} returned HTTP {}; retrying", path, res.status);
        } catch (const TransportError& e) {
            if (last) {
                throw;
            }
            spdlog::warn("{} transport failure ({}); retrying", path, e.what());
        }
        config_.sleep(config_.backoff_base * (1 << (attempt - 1)));
    }
}

ChatResult OpenAiClient::complete(const ChatHistory& history, const ModelProfile& profile)
{
    profile.validate();
    const std::size_t needed = prompt_tokens(history);
    if (needed > profile.context_window) {
        throw ContextOverflowError(needed, profile.context_window);
    }
    const auto started = std::chrono::steady_clock::now();
    const HttpResponse res = post_with_retry("/chat/completions", make_chat_request(history, profile).dump());
    Json body;
    try {
        body = Json::parse(res.body);
    } catch (const Json::parse_error& e) {
        throw MalformedResponseError(std::string{"chat response is not JSON: "} + e.what());
    }
    ChatResult result = parse_chat_response(body);
    result.usage.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!result.usage.provider_reported) {
        const auto tok = Tokenizer::open(config_.tokenizer);
        result.usage.input_tokens = needed;
        result.usage.output_tokens = tok->count(result.content);
    }
    return result;
}

std::vector<EmbeddingVector> OpenAiClient::embed(const std::vector<std::string>& texts)
{
    if (texts.empty()) {
        throw PreconditionError("embed() needs at least one text");
    }
    for (const auto& t : texts) {
        if (t.empty()) {
            throw PreconditionError("embed() inputs must be non-empty");
        }
    }
    const HttpResponse res =
        post_with_retry("/embeddings", make_embedding_request(texts, config_.embedding_model).dump());
    Json body;
    try {
        body = Json::parse(res.body);
    } catch (const Json::parse_error& e) {
        throw MalformedResponseError(std::string{"embedding response is not JSON: "} + e.what());
    }
    return parse_embedding_response(body, texts.size());
}

HashingEmbedder::HashingEmbedder(std::size_t dim) : dim_(dim == 0 ? 1 : dim) {}

std::vector<EmbeddingVector> HashingEmbedder::embed(const std::vector<std::string>& texts)
{
    if (texts.empty()) {
        throw PreconditionError("embed() needs at least one text");
    }
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& text : texts) {
        std::vector<double> v(dim_, 0.0);
        auto add = [&](std::string_view feature, double weight) {
            // FNV-1a
            std::uint64_t h = 1469598103934665603ULL;
            for (const char c : feature) {
                h ^= static_cast<unsigned char>(c);
                h *= 1099511628211ULL;
            }
            v[h % dim_] += (h >> 63) ? -weight : weight;
        };
        std::string word;
        auto flush = [&] {
            if (word.empty()) {
                return;
            }
            add(word, 1.0);
            const std::string padded = "#" + word + "#";
            for (std::size_t i = 0; i + 3 <= padded.size(); ++i) {
                add(std::string_view{padded}.substr(i, 3), 0.5);
            }
            word.clear();
        };
        for (const char c : text) {
            if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
                word += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
            } else {
                flush();
            }
        }
        flush();
        double norm = 0.0;
        for (const double x : v) {
            norm += x * x;
        }
        norm = std::sqrt(norm);
        if (norm > 0.0) {
            for (double& x : v) {
                x /= norm;
            }
        }
        out.push_back(EmbeddingVector{std::move(v)});
    }
    return out;
}

} // namespace testgenie
