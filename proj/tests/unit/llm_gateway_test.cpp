// SPDX-License-Identifier: Apache-2.0
#include "testgenie/llm_gateway.hpp"

#include "support.hpp"

#include <httplib.h>
#include <gtest/gtest.h>

#include <cmath>
#include <deque>
#include <thread>

using namespace testgenie;
namespace tt = testgenie::testing;

namespace {

struct Scripted {
    std::optional<HttpResponse> response;  // nullopt means a transport failure
};

class QueueTransport : public Transport {
public:
    explicit QueueTransport(std::deque<Scripted> q) : q_(std::move(q)) {}

    HttpResponse post_json(const std::string& path, const std::string& body,
                           const std::map<std::string, std::string>& headers) override {
        paths.push_back(path);
        bodies.push_back(body);
        last_headers = headers;
        if (q_.empty()) {
            throw TransportError("queue drained");
        }
        auto next = q_.front();
        q_.pop_front();
        if (!next.response) {
            throw TransportError("connection reset");
        }
        return *next.response;
    }

    std::vector<std::string> paths;
    std::vector<std::string> bodies;
    std::map<std::string, std::string> last_headers;

private:
    std::deque<Scripted> q_;
};

std::string chat_body(const std::string& content, bool with_usage = true) {
    Json j = {{"choices", Json::array({Json{{"message", Json{{"role", "assistant"}, {"content", content}}}}})}};
    if (with_usage) {
        j["usage"] = Json{{"prompt_tokens", 57}, {"completion_tokens", 17}, {"total_tokens", 74}};
    }
    return j.dump();
}

ChatHistory small_history() {
    return ChatHistory{}.append(Role::System, "You write tests.").append(Role::User, "Test GET /fact.");
}

struct Harness {
    std::shared_ptr<QueueTransport> transport;
    std::vector<std::chrono::milliseconds> sleeps;
    std::unique_ptr<OpenAiClient> client;

    Harness(std::deque<Scripted> q, int attempts = 3) {
        transport = std::make_shared<QueueTransport>(std::move(q));
        GatewayConfig cfg;
        cfg.api_key = "sk-test";
        cfg.max_attempts = attempts;
        cfg.backoff_base = std::chrono::milliseconds{100};
        cfg.sleep = [this](std::chrono::milliseconds d) { sleeps.push_back(d); };
        client = std::make_unique<OpenAiClient>(transport, cfg);
    }
};

} // namespace

TEST(Profiles, Builtin) {
    const auto& turbo = find_model_profile("gpt-4-turbo");
    EXPECT_EQ(turbo.context_window, 128000U);
    EXPECT_DOUBLE_EQ(turbo.input_price, 0.010);
    EXPECT_DOUBLE_EQ(turbo.output_price, 0.028);
    EXPECT_EQ(find_model_profile("gpt-3.5-turbo").context_window, 16385U);
    EXPECT_EQ(find_model_profile("gpt-4").context_window, 32768U);
    EXPECT_THROW(find_model_profile("gpt-5"), NotFoundError);
}

TEST(Profiles, Validate) {
    ModelProfile p = find_model_profile("gpt-4");
    EXPECT_NO_THROW(p.validate());
    p.temperature = 2.5;
    EXPECT_THROW(p.validate(), PreconditionError);
    p.temperature = 1.0;
    p.top_p = -0.1;
    EXPECT_THROW(p.validate(), PreconditionError);
}

TEST(Cost, MeanRunAtTurboPrices) {
    const double cost = estimate_cost(Usage{35289, 698}, find_model_profile("gpt-4-turbo"));
    EXPECT_NEAR(cost, 0.352890 + 0.019544, 1e-12);
    EXPECT_EQ(std::lround(cost * 100), 37);
}

TEST(Sha256, KnownVector) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(Wire, ChatRequestShape) {
    const Json req = make_chat_request(small_history(), find_model_profile("gpt-4-turbo"));
    EXPECT_EQ(req["model"], "gpt-4-turbo");
    EXPECT_EQ(req["messages"].size(), 2U);
    EXPECT_EQ(req["messages"][0]["role"], "system");
    EXPECT_DOUBLE_EQ(req["temperature"].get<double>(), 1.0);
}

TEST(Wire, ChatResponseMissingContent) {
    EXPECT_THROW(parse_chat_response(Json::parse(R"({"choices": []})")), MalformedResponseError);
}

TEST(Wire, EmbeddingResponseSortedByIndex) {
    const Json r = Json::parse(R"({"data": [{"index": 1, "embedding": [0, 1]}, {"index": 0, "embedding": [1, 0]}]})");
    const auto v = parse_embedding_response(r, 2);
    EXPECT_EQ(v[0].values, (std::vector<double>{1, 0}));
    EXPECT_EQ(v[1].values, (std::vector<double>{0, 1}));
}

TEST(Wire, EmbeddingResponseRejects) {
    EXPECT_THROW(parse_embedding_response(Json::parse(R"({"data": [{"embedding": [1]}]})"), 2), MalformedResponseError);
    EXPECT_THROW(parse_embedding_response(Json::parse(R"({"data": [{"embedding": [1]}, {"embedding": [1, 2]}]})"), 2),
                 MalformedResponseError);
    EXPECT_THROW(parse_embedding_response(Json::parse(R"({"data": [{"index": 0, "embedding": [1]}, {"index": 0, "embedding": [1]}]})"), 2),
                 MalformedResponseError);
    EXPECT_THROW(parse_embedding_response(Json::parse(R"({"nope": 1})"), 1), MalformedResponseError);
}

TEST(Client, ProviderUsageWins) {
    Harness h({Scripted{HttpResponse{200, chat_body("REQUIREMENT:\nx")}}});
    const auto r = h.client->complete(small_history(), find_model_profile("gpt-4-turbo"));
    EXPECT_EQ(r.content, "REQUIREMENT:\nx");
    EXPECT_EQ(r.usage.input_tokens, 57U);
    EXPECT_EQ(r.usage.output_tokens, 17U);
    EXPECT_TRUE(r.usage.provider_reported);
    EXPECT_EQ(h.transport->paths.front(), "/chat/completions");
    EXPECT_EQ(h.transport->last_headers.at("Authorization"), "Bearer sk-test");
}

TEST(Client, LocalUsageWhenProviderSilent) {
    Harness h({Scripted{HttpResponse{200, chat_body("abcdefgh", false)}}});
    const auto r = h.client->complete(small_history(), find_model_profile("gpt-4-turbo"));
    EXPECT_FALSE(r.usage.provider_reported);
    EXPECT_EQ(r.usage.input_tokens, h.client->prompt_tokens(small_history()));
    EXPECT_EQ(r.usage.output_tokens, 2U);
}

TEST(Client, PromptTokensApproximateMargin) {
    Harness h({});
    // 3 + (3 + 2 + 4) + (3 + 1 + 4) = 20 framed tokens; 5% margin rounds up to 21.
    EXPECT_EQ(h.client->prompt_tokens(small_history()), 21U);
}

TEST(Client, RetriesTransientFailures) {
    Harness h({Scripted{std::nullopt}, Scripted{HttpResponse{503, "busy"}},
               Scripted{HttpResponse{200, chat_body("ok")}}});
    const auto r = h.client->complete(small_history(), find_model_profile("gpt-4"));
    EXPECT_EQ(r.content, "ok");
    EXPECT_EQ(h.transport->paths.size(), 3U);
    ASSERT_EQ(h.sleeps.size(), 2U);
    EXPECT_EQ(h.sleeps[0].count(), 100);
    EXPECT_EQ(h.sleeps[1].count(), 200);
}

TEST(Client, RateLimitExhaustsAttempts) {
    Harness h({Scripted{HttpResponse{429, "slow"}}, Scripted{HttpResponse{429, "slow down"}}}, 2);
    try {
        h.client->complete(small_history(), find_model_profile("gpt-4"));
        FAIL() << "expected HttpStatusError";
    } catch (const HttpStatusError& e) {
        EXPECT_EQ(e.status(), 429);
        EXPECT_EQ(e.body(), "slow down");
    }
    EXPECT_EQ(h.transport->paths.size(), 2U);
}

TEST(Client, ClientErrorNotRetried) {
    Harness h({Scripted{HttpResponse{401, "bad key"}}, Scripted{HttpResponse{200, chat_body("x")}}});
    EXPECT_THROW(h.client->complete(small_history(), find_model_profile("gpt-4")), HttpStatusError);
    EXPECT_EQ(h.transport->paths.size(), 1U);
    EXPECT_TRUE(h.sleeps.empty());
}

TEST(Client, TransportFailureAfterRetries) {
    Harness h({Scripted{std::nullopt}, Scripted{std::nullopt}}, 2);
    EXPECT_THROW(h.client->complete(small_history(), find_model_profile("gpt-4")), TransportError);
}

TEST(Client, MalformedBody) {
    Harness h({Scripted{HttpResponse{200, "<html>"}}});
    EXPECT_THROW(h.client->complete(small_history(), find_model_profile("gpt-4")), MalformedResponseError);
}

TEST(Client, ContextOverflowBeforeSending) {
    Harness h({Scripted{HttpResponse{200, chat_body("x")}}});
    ModelProfile tiny = find_model_profile("gpt-4");
    tiny.context_window = 10;
    try {
        h.client->complete(small_history(), tiny);
        FAIL() << "expected ContextOverflowError";
    } catch (const ContextOverflowError& e) {
        EXPECT_EQ(e.needed(), 21U);
        EXPECT_EQ(e.window(), 10U);
        EXPECT_NE(std::string(e.what()).find("over by 11"), std::string::npos);
    }
    EXPECT_TRUE(h.transport->paths.empty());
}

TEST(Client, Embeddings) {
    Harness h({Scripted{HttpResponse{200, R"({"data": [{"index": 0, "embedding": [0.5, 0.5]}]})"}}});
    const auto v = h.client->embed({"hello"});
    ASSERT_EQ(v.size(), 1U);
    EXPECT_EQ(v[0].dim(), 2U);
    EXPECT_EQ(h.transport->paths.front(), "/embeddings");
    EXPECT_EQ(Json::parse(h.transport->bodies.front())["model"], "text-embedding-ada-002");
    EXPECT_THROW(h.client->embed({}), PreconditionError);
    EXPECT_THROW(h.client->embed({""}), PreconditionError);
}

TEST(Fixtures, ExactHashThenDefault) {
    tt::TempDir dir;
    const Json req = make_chat_request(small_history(), find_model_profile("gpt-4"));
    tt::spit(dir / (sha256_hex(req.dump()) + ".json"), chat_body("exact"));
    tt::spit(dir / "default_chat.json", chat_body("fallback"));
    auto transport = std::make_shared<FixtureTransport>(dir.path());
    OpenAiClient client(transport, GatewayConfig{});

    EXPECT_EQ(client.complete(small_history(), find_model_profile("gpt-4")).content, "exact");
    const auto other = ChatHistory{}.append(Role::System, "s").append(Role::User, "different");
    EXPECT_EQ(client.complete(other, find_model_profile("gpt-4")).content, "fallback");
    EXPECT_EQ(transport->requests().size(), 2U);
}

TEST(Fixtures, EmbeddingsNeedExactFixture) {
    tt::TempDir dir;
    tt::spit(dir / "default_chat.json", chat_body("fallback"));
    GatewayConfig cfg;
    cfg.max_attempts = 1;
    OpenAiClient client(std::make_shared<FixtureTransport>(dir.path()), cfg);
    EXPECT_THROW(client.embed({"x"}), TransportError);
}

TEST(Fixtures, ShippedDefaultReplaysTranscript) {
    OpenAiClient client(std::make_shared<FixtureTransport>(tt::fixtures() / "mock_provider"), GatewayConfig{});
    const auto r = client.complete(small_history(), find_model_profile("gpt-4-turbo"));
    EXPECT_EQ(r.content, tt::slurp(tt::fixtures() / "llm" / "catfact_run1.txt"));
}

TEST(Http, BearerAndPathPrefix) {
    httplib::Server server;
    std::string auth;
    std::string seen_body;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(chat_body("served"), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    GatewayConfig cfg;
    cfg.api_key = "sk-local";
    OpenAiClient client(std::make_shared<HttplibTransport>("http://127.0.0.1:" + std::to_string(port) + "/v1/"), cfg);
    const auto r = client.complete(small_history(), find_model_profile("gpt-3.5-turbo"));
    EXPECT_EQ(r.content, "served");
    EXPECT_EQ(auth, "Bearer sk-local");
    EXPECT_EQ(Json::parse(seen_body)["model"], "gpt-3.5-turbo");

    server.stop();
    t.join();
}

TEST(Http, Unreachable) {
    HttplibTransport t("http://127.0.0.1:1/v1", std::chrono::seconds{2});
    EXPECT_THROW(t.post_json("/chat/completions", "{}", {}), TransportError);
}

TEST(Hashing, DeterministicNormalised) {
    HashingEmbedder e(64);
    const auto a = e.embed({"Get a random cat fact", "get a RANDOM cat fact!", ""});
    EXPECT_EQ(a[0], a[1]);
    double norm = 0;
    for (double x : a[0].values) {
        norm += x * x;
    }
    EXPECT_NEAR(norm, 1.0, 1e-12);
    EXPECT_EQ(a[2].values, std::vector<double>(64, 0.0));
}
