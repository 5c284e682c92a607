// SPDX-License-Identifier: Apache-2.0
#include "testgenie/prompt_forge.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace testgenie;
namespace tt = testgenie::testing;

TEST(ChatHistory, Alternation) {
    const ChatHistory h0;
    EXPECT_EQ(h0.expected_next(), Role::System);
    EXPECT_THROW(h0.append(Role::User, "u"), AlternationError);
    const auto h1 = h0.append(Role::System, "s");
    EXPECT_EQ(h1.expected_next(), Role::User);
    EXPECT_THROW(h1.append(Role::Assistant, "a"), AlternationError);
    const auto h2 = h1.append(Role::User, "u").append(Role::Assistant, "a");
    EXPECT_EQ(h2.expected_next(), Role::User);
    EXPECT_THROW(h2.append(Role::System, "s"), AlternationError);
    EXPECT_EQ(h2.size(), 3U);
}

TEST(ChatHistory, AppendDoesNotMutate) {
    const auto h = ChatHistory{}.append(Role::System, "s");
    const auto h2 = h.append(Role::User, "u");
    EXPECT_EQ(h.size(), 1U);
    EXPECT_EQ(h2.size(), 2U);
}

TEST(ChatHistory, EmptyContentRejected) {
    EXPECT_THROW(ChatHistory{}.append(Role::System, ""), PreconditionError);
}

TEST(ChatHistory, MessagesRoundTrip) {
    const auto h = ChatHistory{}.append(Role::System, "s").append(Role::User, "u").append(Role::Assistant, "a");
    const Json m = h.to_messages();
    ASSERT_EQ(m.size(), 3U);
    EXPECT_EQ(m[1]["role"], "user");
    EXPECT_EQ(m[2]["content"], "a");
    EXPECT_EQ(ChatHistory::from_messages(m), h);
}

TEST(ChatHistory, FromMessagesRejectsBadOrder) {
    const Json m = Json::parse(R"([{"role": "user", "content": "x"}])");
    EXPECT_THROW(ChatHistory::from_messages(m), AlternationError);
}

TEST(ChatHistory, TemplateJson) {
    const auto h = ChatHistory{}
                       .append(Role::System, "s")
                       .append(Role::User, "u1")
                       .append(Role::Assistant, "g1")
                       .append(Role::User, "u2");
    const Json j = h.to_template_json();
    EXPECT_EQ(j["system_prompt"], "s");
    ASSERT_EQ(j["interactions"].size(), 2U);
    EXPECT_EQ(j["interactions"][0]["generation"], "g1");
    EXPECT_TRUE(j["interactions"][1]["generation"].is_null());
}

TEST(PromptLevel, Parse) {
    EXPECT_EQ(prompt_level_from_string("L2"), PromptLevel::L2);
    EXPECT_EQ(prompt_level_from_string("3"), PromptLevel::L3);
    EXPECT_THROW(prompt_level_from_string("L4"), PreconditionError);
}

TEST(EnvDescriptors, Parse) {
    const auto v = parse_env_descriptors("# comment\n\nAPI_URL: base url of the service\r\nTOKEN_2 :  bearer token\n");
    ASSERT_EQ(v.size(), 2U);
    EXPECT_EQ(v[0], (EnvVarDescriptor{"API_URL", "base url of the service"}));
    EXPECT_EQ(v[1], (EnvVarDescriptor{"TOKEN_2", "bearer token"}));
}

TEST(EnvDescriptors, Rejects) {
    EXPECT_THROW(parse_env_descriptors("no colon here"), PreconditionError);
    EXPECT_THROW(parse_env_descriptors("lower: x"), PreconditionError);
    EXPECT_THROW(parse_env_descriptors("1ABC: x"), PreconditionError);
    EXPECT_FALSE(is_valid_env_name(""));
    EXPECT_TRUE(is_valid_env_name("A_1"));
}

TEST(RenderTemplate, SinglePass) {
    EXPECT_EQ(render_template("a {{x}} b", {{"x", "{{x}}"}}), "a {{x}} b");
}

TEST(RenderTemplate, MissingValue) {
    EXPECT_THROW(render_template("{{x}} {{y}}", {{"x", "1"}}), TemplateError);
}

TEST(RenderTemplate, UnknownKey) {
    EXPECT_THROW(render_template("{{x}}", {{"x", "1"}, {"z", "2"}}), TemplateError);
}

TEST(RenderTemplate, NonIdentifierBracesKept) {
    EXPECT_EQ(render_template("data = {{...}} {{x}}", {{"x", "1"}}), "data = {{...}} 1");
}

TEST(Placeholders, Order) {
    const std::vector<std::string> expected{"a", "b", "a"};
    EXPECT_EQ(placeholders_of("{{a}} {{b}} {{a}} {{ c }}"), expected);
}

TEST(Builtin, TemplatesMatchDataFiles) {
    const std::filesystem::path dir = TESTGENIE_TEST_PROMPTS;
    for (const char* name : {"system_prompt", "test_example", "user_prompt", "refactor_prompt", "requirement_expansion"}) {
        std::string text = tt::slurp(dir / (std::string(name) + ".txt"));
        if (!text.empty() && text.back() == '\n') {
            text.pop_back();
        }
        EXPECT_EQ(PromptTemplates::builtin().get(name), text) << name;
    }
    EXPECT_THROW(PromptTemplates::builtin().get("nope"), TemplateError);
}

TEST(Builtin, PlaceholderSets) {
    const auto& t = PromptTemplates::builtin();
    EXPECT_EQ(placeholders_of(t.get("system_prompt")), (std::vector<std::string>{"test_example", "env_description"}));
    EXPECT_EQ(placeholders_of(t.get("user_prompt")),
              (std::vector<std::string>{"user_story", "setup_instructions", "api_specification"}));
    EXPECT_EQ(placeholders_of(t.get("refactor_prompt")), (std::vector<std::string>{"error", "user_instruction"}));
    EXPECT_TRUE(placeholders_of(t.get("test_example")).empty());
}

TEST(Render, SystemPrompt) {
    const std::string s = render_system_prompt(default_test_example(), {{"CAT_URL", "cat fact base url"}});
    EXPECT_NE(s.find("CAT_URL: cat fact base url"), std::string::npos);
    EXPECT_NE(s.find("import axios from 'axios';"), std::string::npos);
    EXPECT_TRUE(placeholders_of(s).empty());
    EXPECT_THROW(render_system_prompt("", {}), PreconditionError);
    EXPECT_THROW(render_system_prompt("x", {{"bad name", "d"}}), PreconditionError);
}

TEST(Render, UserPrompt) {
    const std::string s = render_user_prompt("req", "setup", R"({"openapi": "3.0.0"})");
    EXPECT_NE(s.find("***\nreq\n***"), std::string::npos);
    EXPECT_NE(s.find("***\nsetup\n***"), std::string::npos);
    EXPECT_NE(s.find(R"({"openapi": "3.0.0"})"), std::string::npos);
    EXPECT_THROW(render_user_prompt("", "s", "c"), PreconditionError);
    EXPECT_THROW(render_user_prompt("r", "s", ""), PreconditionError);
}

TEST(Render, RefactorPrompt) {
    const std::string s = render_refactor_prompt("TS1005: ';' expected.", "use port 8080");
    EXPECT_NE(s.find("***\nTS1005: ';' expected.\n***\nuse port 8080\n"), std::string::npos);
    EXPECT_THROW(render_refactor_prompt("", "x"), PreconditionError);
}

TEST(Render, ExpansionPrompt) {
    const std::string s = render_expansion_prompt("get a fact", 5);
    EXPECT_NE(s.find("5 different versions"), std::string::npos);
    EXPECT_NE(s.find("get a fact"), std::string::npos);
}

TEST(Templates, LoadOverridesFromDirectory) {
    tt::TempDir dir;
    tt::spit(dir / "refactor_prompt.txt", "fix: {{error}} {{user_instruction}}\n");
    const auto t = PromptTemplates::load(dir.path());
    EXPECT_EQ(render_refactor_prompt("e", "i", t), "fix: e i");
    EXPECT_EQ(t.get("system_prompt"), PromptTemplates::builtin().get("system_prompt"));
}
