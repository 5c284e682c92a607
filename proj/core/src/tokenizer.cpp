// SPDX-License-Identifier: Apache-2.0
#include "testgenie/tokenizer.hpp"

#include <openssl/evp.h>
#include <unicode/regex.h>
#include <unicode/unistr.h>

#include <cstdlib>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <unordered_map>

namespace testgenie {

namespace {

// cl100k_base pre-tokenizer. `\s` is spelled \p{White_Space} because ICU's
// `\s` omits VT and NEL, unlike the Rust regex engine tiktoken runs on.
constexpr const char* kCl100kPattern =
    "'(?i:[sdmt]|ll|ve|re)"
    "|[^\\r\\n\\p{L}\\p{N}]?+\\p{L}++"
    "|\\p{N}{1,3}+"
    "| ?[^\\p{White_Space}\\p{L}\\p{N}]++[\\r\\n]*+"
    "|\\p{White_Space}++$"
    "|\\p{White_Space}*[\\r\\n]"
    "|\\p{White_Space}+(?!\\P{White_Space})"
    "|\\p{White_Space}";

constexpr std::uint32_t kNoRank = std::numeric_limits<std::uint32_t>::max();

std::string base64_decode(std::string_view in)
{
    std::string out(in.size() / 4 * 3 + 3, '\0');
    const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(in.data()),
                                  static_cast<int>(in.size()));
    if (n < 0) {
        throw VocabularyError("malformed base64 token in vocabulary: " + std::string{in});
    }
    std::size_t len = static_cast<std::size_t>(n);
    for (auto it = in.rbegin(); it != in.rend() && *it == '='; ++it) {
        --len;
    }
    out.resize(len);
    return out;
}

std::filesystem::path first_existing(std::initializer_list<std::filesystem::path> candidates)
{
    for (const auto& p : candidates) {
        std::error_code ec;
        if (!p.empty() && std::filesystem::is_regular_file(p, ec)) {
            return p;
        }
    }
    return {};
}

} // namespace

struct Tokenizer::Vocabulary {
    std::unordered_map<std::string, std::uint32_t> ranks;
    std::unique_ptr<icu::RegexPattern> pattern;

    std::uint32_t rank_of(std::string_view bytes) const
    {
        const auto it = ranks.find(std::string{bytes});
        return it == ranks.end() ? kNoRank : it->second;
    }

    // Greedy lowest-rank pair merging; ties resolve to the leftmost pair.
    std::vector<std::size_t> merge_bounds(std::string_view piece) const
    {
        std::vector<std::size_t> bounds(piece.size() + 1);
        for (std::size_t i = 0; i <= piece.size(); ++i) {
            bounds[i] = i;
        }
        std::vector<std::uint32_t> pair_rank(bounds.size(), kNoRank);
        auto rank_at = [&](std::size_t i) {
            if (i + 2 >= bounds.size()) {
                return kNoRank;
            }
            return rank_of(piece.substr(bounds[i], bounds[i + 2] - bounds[i]));
        };
        for (std::size_t i = 0; i + 2 < bounds.size(); ++i) {
            pair_rank[i] = rank_at(i);
        }
        while (bounds.size() > 2) {
            std::uint32_t best = kNoRank;
            std::size_t at = 0;
            for (std::size_t i = 0; i + 2 < bounds.size(); ++i) {
                if (pair_rank[i] < best) {
                    best = pair_rank[i];
                    at = i;
                }
            }
            if (best == kNoRank) {
                break;
            }
            bounds.erase(bounds.begin() + static_cast<std::ptrdiff_t>(at) + 1);
            pair_rank.erase(pair_rank.begin() + static_cast<std::ptrdiff_t>(at) + 1);
            pair_rank[at] = rank_at(at);
            if (at > 0) {
                pair_rank[at - 1] = rank_at(at - 1);
            }
        }
        return bounds;
    }
};

std::string_view to_string(TokenizerKind kind)
{
    return kind == TokenizerKind::ExactBpe ? "exact-bpe" : "approximate";
}

TokenizerHandle TokenizerHandle::exact(std::filesystem::path vocabulary)
{
    return TokenizerHandle{TokenizerKind::ExactBpe, std::move(vocabulary)};
}

TokenizerHandle TokenizerHandle::approximate()
{
    return TokenizerHandle{TokenizerKind::Approximate, std::nullopt};
}

TokenizerHandle TokenizerHandle::detect()
{
    std::filesystem::path from_env;
    if (const char* env = std::getenv("TESTGENIE_CL100K")) {
        from_env = env;
    }
    auto found = first_existing({
        from_env,
        std::filesystem::path{TESTGENIE_SOURCE_DATA_DIR} / "cl100k_base.tiktoken",
        std::filesystem::path{TESTGENIE_INSTALL_DATA_DIR} / "cl100k_base.tiktoken",
    });
    if (found.empty()) {
        return approximate();
    }
    return exact(found);
}

Tokenizer::Tokenizer(TokenizerKind kind, std::shared_ptr<const Vocabulary> vocab)
    : kind_(kind), vocab_(std::move(vocab))
{
}

Tokenizer::~Tokenizer() = default;

std::shared_ptr<const Tokenizer> Tokenizer::open(const TokenizerHandle& handle)
{
    if (handle.kind == TokenizerKind::Approximate) {
        static const std::shared_ptr<const Tokenizer> approx{
            new Tokenizer(TokenizerKind::Approximate, nullptr)};
        return approx;
    }
    if (!handle.vocabulary_source) {
        throw VocabularyError("exact-bpe tokenizer requires a vocabulary file");
    }
    const auto path = std::filesystem::absolute(*handle.vocabulary_source).lexically_normal();

    static std::mutex mutex;
    static std::map<std::string, std::shared_ptr<const Tokenizer>> cache;
    const std::lock_guard lock{mutex};
    if (auto it = cache.find(path.string()); it != cache.end()) {
        return it->second;
    }

    std::ifstream in{path};
    if (!in) {
        throw VocabularyError("cl100k vocabulary not found: " + path.string());
    }
    auto vocab = std::make_shared<Vocabulary>();
    vocab->ranks.reserve(100300);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto space = line.find(' ');
        if (space == std::string::npos) {
            throw VocabularyError("malformed vocabulary line in " + path.string());
        }
        const auto rank = static_cast<std::uint32_t>(std::stoul(line.substr(space + 1)));
        vocab->ranks.emplace(base64_decode(std::string_view{line}.substr(0, space)), rank);
    }
    if (vocab->ranks.empty()) {
        throw VocabularyError("empty vocabulary: " + path.string());
    }

    UErrorCode status = U_ZERO_ERROR;
    UParseError parse_error{};
    vocab->pattern.reset(icu::RegexPattern::compile(
        icu::UnicodeString::fromUTF8(kCl100kPattern), parse_error, status));
    if (U_FAILURE(status)) {
        throw VocabularyError(std::string{"cannot compile pre-tokenizer pattern: "} +
                              u_errorName(status));
    }

    std::shared_ptr<const Tokenizer> tok{new Tokenizer(TokenizerKind::ExactBpe, std::move(vocab))};
    cache.emplace(path.string(), tok);
    return tok;
}

std::vector<std::string> Tokenizer::split_pieces(std::string_view text) const
{
    std::vector<std::string> pieces;
    if (!vocab_ || text.empty()) {
        return pieces;
    }
    const auto utext = icu::UnicodeString::fromUTF8(
        icu::StringPiece{text.data(), static_cast<int32_t>(text.size())});
    UErrorCode status = U_ZERO_ERROR;
    std::unique_ptr<icu::RegexMatcher> matcher{vocab_->pattern->matcher(utext, status)};
    if (U_FAILURE(status)) {
        throw Error(std::string{"regex matcher failure: "} + u_errorName(status));
    }
    while (matcher->find(status) && U_SUCCESS(status)) {
        const int32_t start = matcher->start(status);
        const int32_t end = matcher->end(status);
        std::string piece;
        utext.tempSubStringBetween(start, end).toUTF8String(piece);
        pieces.push_back(std::move(piece));
    }
    return pieces;
}

std::vector<std::uint32_t> Tokenizer::encode(std::string_view text) const
{
    if (!vocab_) {
        throw PreconditionError("encode() requires an exact-bpe tokenizer");
    }
    std::vector<std::uint32_t> ids;
    for (const auto& piece : split_pieces(text)) {
        if (const auto r = vocab_->rank_of(piece); r != kNoRank) {
            ids.push_back(r);
            continue;
        }
        const auto bounds = vocab_->merge_bounds(piece);
        for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
            ids.push_back(vocab_->rank_of(std::string_view{piece}.substr(bounds[i], bounds[i + 1] - bounds[i])));
        }
    }
    return ids;
}

std::size_t Tokenizer::count(std::string_view text) const
{
    if (kind_ == TokenizerKind::Approximate) {
        return (text.size() + 3) / 4;
    }
    std::size_t total = 0;
    for (const auto& piece : split_pieces(text)) {
        if (vocab_->rank_of(piece) != kNoRank) {
            ++total;
        } else {
            total += vocab_->merge_bounds(piece).size() - 1;
        }
    }
    return total;
}

std::size_t count_tokens(std::string_view text, const TokenizerHandle& handle)
{
    return Tokenizer::open(handle)->count(text);
}

} // namespace testgenie
