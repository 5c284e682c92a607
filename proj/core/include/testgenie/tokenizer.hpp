// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace testgenie {

enum class TokenizerKind { ExactBpe, Approximate };

std::string_view to_string(TokenizerKind kind);

/// Selects how text is turned into a token count.
struct TokenizerHandle {
    TokenizerKind kind = TokenizerKind::Approximate;
    /// `cl100k_base.tiktoken` data file; required for ExactBpe.
    std::optional<std::filesystem::path> vocabulary_source;

    static TokenizerHandle exact(std::filesystem::path vocabulary);
    static TokenizerHandle approximate();

    /// ExactBpe when a cl100k vocabulary can be located, Approximate otherwise.
    /// Search order: $TESTGENIE_CL100K, the source tree data/ dir, the install share dir.
    static TokenizerHandle detect();
};

/// Raised when ExactBpe is selected but the vocabulary file is missing or unreadable.
class VocabularyError : public Error {
public:
    using Error::Error;
};

class Tokenizer {
public:
    /// Loads (and caches per path) the vocabulary for ExactBpe handles.
    static std::shared_ptr<const Tokenizer> open(const TokenizerHandle& handle);

    TokenizerKind kind() const noexcept { return kind_; }

    std::size_t count(std::string_view text) const;

    /// Token ids; only available for ExactBpe.
    std::vector<std::uint32_t> encode(std::string_view text) const;

    /// Pre-tokenizer output (cl100k regex pieces), exposed for tests.
    std::vector<std::string> split_pieces(std::string_view text) const;

    ~Tokenizer();
    Tokenizer(const Tokenizer&) = delete;
    Tokenizer& operator=(const Tokenizer&) = delete;

private:
    struct Vocabulary;
    explicit Tokenizer(TokenizerKind kind, std::shared_ptr<const Vocabulary> vocab);

    TokenizerKind kind_;
    std::shared_ptr<const Vocabulary> vocab_;
};

/// Deterministic token count of `text` under `handle`.
/// Approximate mode is ceil(bytes / 4).
std::size_t count_tokens(std::string_view text, const TokenizerHandle& handle);

} // namespace testgenie
