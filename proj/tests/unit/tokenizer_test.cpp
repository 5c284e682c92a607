// SPDX-License-Identifier: Apache-2.0
#include "testgenie/json_text.hpp"
#include "testgenie/tokenizer.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

using namespace testgenie;
namespace tt = testgenie::testing;

namespace {

std::shared_ptr<const Tokenizer> exact() {
    if (!tt::have_vocabulary()) {
        return nullptr;
    }
    return Tokenizer::open(TokenizerHandle::exact(tt::vocabulary()));
}

} // namespace

TEST(Approximate, CeilOfBytesOverFour) {
    const auto h = TokenizerHandle::approximate();
    EXPECT_EQ(count_tokens("", h), 0U);
    EXPECT_EQ(count_tokens("abc", h), 1U);
    EXPECT_EQ(count_tokens("abcd", h), 1U);
    EXPECT_EQ(count_tokens("abcde", h), 2U);
    EXPECT_EQ(count_tokens("é", h), 1U);
}

TEST(Approximate, EncodeUnavailable) {
    const auto tok = Tokenizer::open(TokenizerHandle::approximate());
    EXPECT_EQ(tok->kind(), TokenizerKind::Approximate);
    EXPECT_THROW(tok->encode("x"), Error);
}

TEST(Handle, MissingVocabularyThrows) {
    EXPECT_THROW(Tokenizer::open(TokenizerHandle::exact("/nonexistent/cl100k_base.tiktoken")), VocabularyError);
}

TEST(Handle, ModeNames) {
    EXPECT_EQ(to_string(TokenizerKind::ExactBpe), "exact-bpe");
    EXPECT_EQ(to_string(TokenizerKind::Approximate), "approximate");
}

// Ids frozen from the reference Python implementation (tiktoken, cl100k_base).
struct IdCase {
    const char* text;
    std::vector<std::uint32_t> ids;
};

void PrintTo(const IdCase& c, std::ostream* os) { *os << ::testing::PrintToString(std::string{c.text}); }

class ExactIds : public ::testing::TestWithParam<IdCase> {};

TEST_P(ExactIds, MatchReference) {
    const auto tok = exact();
    if (!tok) {
        GTEST_SKIP() << "cl100k vocabulary not present";
    }
    EXPECT_EQ(tok->encode(GetParam().text), GetParam().ids);
    EXPECT_EQ(tok->count(GetParam().text), GetParam().ids.size());
}

INSTANTIATE_TEST_SUITE_P(
    Reference, ExactIds,
    ::testing::Values(
        IdCase{"hello world", {15339, 1917}},
        IdCase{"GET /fact?max_length=140", {3891, 611, 34210, 30, 2880, 5228, 28, 6860}},
        IdCase{"  indented\n\tline\r\n", {220, 1280, 16243, 198, 28208, 319}},
        IdCase{"café 日本語 123456 !!!", {936, 59958, 76502, 22656, 45918, 252, 220, 4513, 10961, 33970}},
        IdCase{"don't I'll", {15357, 956, 358, 3358}},
        IdCase{R"({"openapi": "3.0.0"})", {5018, 2569, 2113, 794, 330, 18, 13, 15, 13, 15, 9388}}));

TEST(Exact, PreTokenizerPieces) {
    const auto tok = exact();
    if (!tok) {
        GTEST_SKIP() << "cl100k vocabulary not present";
    }
    const std::vector<std::string> expected{"don", "'t", " I", "'ll", " ", " x", "\n\n", " ", " y", " ", "123", "456", "7"};
    EXPECT_EQ(tok->split_pieces("don't I'll  x\n\n  y 1234567"), expected);
}

TEST(Exact, LongRuns) {
    const auto tok = exact();
    if (!tok) {
        GTEST_SKIP() << "cl100k vocabulary not present";
    }
    EXPECT_EQ(tok->count(std::string(1000, 'x')), 125U);
    EXPECT_EQ(tok->count(std::string(37, ' ')), 1U);
}

TEST(Exact, PetStoreDocument) {
    const auto tok = exact();
    if (!tok) {
        GTEST_SKIP() << "cl100k vocabulary not present";
    }
    const Json doc = Json::parse(tt::slurp(tt::data_dir() / "specs" / "petstore.json"));
    EXPECT_EQ(tok->count(dumps(doc)), 4026U);
}

TEST(Exact, OpenIsCachedPerPath) {
    if (!tt::have_vocabulary()) {
        GTEST_SKIP() << "cl100k vocabulary not present";
    }
    const auto a = Tokenizer::open(TokenizerHandle::exact(tt::vocabulary()));
    const auto b = Tokenizer::open(TokenizerHandle::exact(tt::vocabulary()));
    EXPECT_EQ(a.get(), b.get());
}
