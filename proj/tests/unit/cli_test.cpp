// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include "testgenie/json_text.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace testgenie;
namespace tt = testgenie::testing;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
    std::ostringstream out;
    std::ostringstream err;
    const cli::EnvLookup lookup = [env](const std::string& k) -> std::optional<std::string> {
        if (const auto it = env.find(k); it != env.end()) {
            return it->second;
        }
        return std::nullopt;
    };
    const int code = cli::dispatch(args, out, err, lookup);
    return {code, out.str(), err.str()};
}

} // namespace

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"explode"}).code, 2);
    EXPECT_EQ(run({"distill"}).code, 2);
    const auto help = run({"--help"});
    EXPECT_EQ(help.code, 0);
    EXPECT_NE(help.out.find("distill"), std::string::npos);
}

TEST(Cli, DistillJson) {
    tt::TempDir dir;
    const auto r = run({"distill", "--spec", (tt::data_dir() / "specs" / "petstore.json").string(), "--tokenizer",
                        "approximate", "--out", (dir / "simple.json").string(), "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_EQ(j["name"], "petstore");
    EXPECT_EQ(j["token_mode"], "approximate");
    EXPECT_LT(j["simplified_tokens"].get<std::size_t>(), j["original_tokens"].get<std::size_t>());
    const Json simple = Json::parse(tt::slurp(dir / "simple.json"));
    EXPECT_FALSE(simple["paths"].contains("/pet/findByTags"));
}

TEST(Cli, DistillExactCatFact) {
    if (!tt::have_vocabulary()) {
        GTEST_SKIP() << "cl100k_base vocabulary not present";
    }
    const auto r = run({"distill", "--spec", (tt::data_dir() / "specs" / "catfact.json").string(), "--vocabulary",
                        tt::vocabulary().string(), "--tokenizer", "exact"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "catfact: original 754 tokens, simplified 754 tokens (exact-bpe)\n");
}

TEST(Cli, MissingSpecFails) {
    const auto r = run({"distill", "--spec", "/no/such/spec.json", "--json"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error:"), std::string::npos);
    EXPECT_TRUE(Json::parse(r.out).contains("error"));
}

TEST(Cli, MetricsOverRunLog) {
    const auto r = run({"metrics", "--runs", (tt::fixtures() / "runs").string(), "--k", "1,3", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const Json j = Json::parse(r.out);
    EXPECT_NEAR(j["valid_at_k"]["1"].get<double>(), 43.0 / 75.0, 1e-12);
    EXPECT_NEAR(j["valid_at_k"]["3"].get<double>(), 0.8, 1e-12);
    EXPECT_TRUE(j["pending_tasks"].empty());

    const auto text = run({"metrics", "--k", "1"}, {{"TESTGENIE_RUNS", (tt::fixtures() / "runs").string()}});
    ASSERT_EQ(text.code, 0) << text.err;
    EXPECT_NE(text.out.find("0.5733"), std::string::npos) << text.out;
}

TEST(Cli, Precedence) {
    const std::map<std::string, std::string> file{{"model", "from-file"}, {"top_k", "3"}, {"sandbox", "file-sb"}};
    const cli::EnvLookup env = [](const std::string& k) -> std::optional<std::string> {
        if (k == "TESTGENIE_MODEL" || k == "TESTGENIE_TOP_K") {
            return "from-env";
        }
        return std::nullopt;
    };
    const auto out = cli::resolve_settings(file, env, {{"model", "from-flag"}});
    EXPECT_EQ(out.at("model"), "from-flag");
    EXPECT_EQ(out.at("top_k"), "from-env");
    EXPECT_EQ(out.at("sandbox"), "file-sb");
    EXPECT_FALSE(out.contains("specs"));
    EXPECT_THROW(cli::resolve_settings({{"colour", "red"}}, env, {}), PreconditionError);
}

TEST(Cli, ConfigFile) {
    tt::TempDir dir;
    tt::spit(dir / "tg.toml", "# settings\nmodel = \"gpt-4\"\ntop-k = 3\n\n[server]\nport = 9\n");
    const auto values = cli::read_config_file((dir / "tg.toml").string());
    EXPECT_EQ(values, (std::map<std::string, std::string>{{"model", "gpt-4"}, {"top_k", "3"}}));
    EXPECT_THROW(cli::read_config_file((dir / "none.toml").string()), FetchError);

    tt::spit(dir / "bad.toml", "colour = \"red\"\n");
    const auto r = run({"--config", (dir / "bad.toml").string(), "metrics"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("colour"), std::string::npos);
}

TEST(Cli, MockSessionFlow) {
    tt::TempDir dir;
    std::filesystem::create_directories(dir / "sandbox");
    const std::map<std::string, std::string> env{
        {"TESTGENIE_SPECS", (tt::data_dir() / "specs").string()},
        {"TESTGENIE_SESSIONS", (dir / "sessions").string()},
        {"TESTGENIE_SANDBOX", (dir / "sandbox").string()},
        {"TESTGENIE_FIXTURES", (tt::fixtures() / "mock_provider").string()},
        {"TESTGENIE_EMBEDDER", "hashing"},
        {"TESTGENIE_TOKENIZER", "approximate"}};
    auto r = run({"generate", "--spec", "catfact", "--requirement", "Get a short fact", "--json"}, env);
    ASSERT_EQ(r.code, 0) << r.err;
    const Json g = Json::parse(r.out);
    const std::string id = g["session"];
    EXPECT_EQ(g["mode"], "Full");
    ASSERT_EQ(g["runs"].size(), 1U);
    EXPECT_TRUE(g["runs"][0]["generation"]["code"].is_string());

    r = run({"generate", "--session", id, "--attempts", "2"}, env);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("attempt 3: code generated"), std::string::npos) << r.out;

    r = run({"annotate", "--session", id, "--label", "Defect", "--level", "L1"}, env);
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, "attempt 3 labelled Defect\n");

    r = run({"annotate", "--session", id, "--attempt", "1", "--label", "Semantic"}, env);
    EXPECT_EQ(r.code, 1);

    r = run({"generate", "--spec", "catfact"}, env);
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("exactly one"), std::string::npos);

    r = run({"execute", "--session", "missing"}, env);
    EXPECT_EQ(r.code, 1);
}
