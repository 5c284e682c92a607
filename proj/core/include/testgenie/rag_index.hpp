// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/json_text.hpp"
#include "testgenie/llm_gateway.hpp"
#include "testgenie/spec_ingest.hpp"
#include "testgenie/tokenizer.hpp"

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace testgenie {

struct ChunkerConfig {
    std::size_t min_tokens = 800;
    std::size_t max_tokens = 1200;

    void validate() const;
};

/// Position of a piece of a string leaf too large for one chunk.
struct LeafPart {
    std::size_t index = 0;
    std::size_t count = 0;

    bool operator==(const LeafPart&) const = default;
};

/// A token-bounded fragment of a JSON document.
///
/// `text` is the `dumps()` of a tree that keeps the full key path from the
/// document root down to each fragment; array elements appear as objects
/// keyed by their index, so leaf pointers read back from `text` are the
/// pointers of the original document.
struct Chunk {
    std::string chunk_id;
    /// Roots of the subtrees held by this chunk.
    std::vector<std::string> origin_pointers;
    std::string text;
    std::size_t token_len = 0;
    /// Set when the chunk holds one window of a hard-split string leaf.
    std::optional<LeafPart> leaf_part;

    bool operator==(const Chunk&) const = default;
};

/// First 16 hex digits of SHA-256 over the chunk text.
std::string make_chunk_id(std::string_view text);

/// Hierarchical split: a subtree that fits is emitted whole, otherwise its
/// children are split and adjacent siblings are merged while the running
/// fragment is under `min_tokens` and the merge stays within `max_tokens`.
/// Throws PreconditionError for a scalar or empty document.
std::vector<Chunk> split_json(const Json& doc, const ChunkerConfig& cfg, const TokenizerHandle& tok);

/// Leaf pointers recovered by parsing the chunk text. A hard-split leaf
/// contributes its pointer only from its first window.
std::vector<std::string> chunk_leaf_pointers(const Chunk& chunk);

/// Raised when loading a malformed index snapshot or building with inconsistent embeddings.
class IndexError : public Error {
public:
    using Error::Error;
};

/// Chunks with a parallel array of embeddings. Immutable once built.
struct VectorIndex {
    std::string spec_name;
    std::size_t dim = 0;
    std::vector<Chunk> chunks;
    std::vector<EmbeddingVector> vectors;

    /// `{"spec_name","dim","chunks":[...],"vectors":[[...]]}`
    Json to_json() const;
    static VectorIndex from_json(const Json& j);
    void save(const std::filesystem::path& file) const;
    static VectorIndex load(const std::filesystem::path& file);
};

/// Embeds every chunk of `spec.simplified` in batches of `batch_size`.
VectorIndex build_index(const ApiSpecDoc& spec, const ChunkerConfig& cfg, Embedder& embedder,
                        const TokenizerHandle& tok, std::size_t batch_size = 16);

struct QuerySet {
    std::string original;
    std::vector<std::string> variants;

    /// Original first, then the variants.
    std::vector<std::string> effective() const;
};

/// Asks the model for `count` paraphrases of `req`, one per line.
/// On any gateway failure the variants are empty and a warning is logged.
QuerySet expand_requirement(const std::string& req, ChatClient& llm, const ModelProfile& profile,
                            std::size_t count = 5);

/// Lines of an expansion reply with list markers removed; blank lines and
/// copies of the original are dropped; at most `count` kept.
std::vector<std::string> parse_variants(std::string_view reply, std::string_view original,
                                        std::size_t count);

/// 0 when either vector has zero norm. Throws PreconditionError on dimension mismatch.
double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

struct ScoredChunk {
    std::size_t index = 0;
    double score = 0.0;
};

/// Top `top_k` per effective query, deduplicated, ordered by each chunk's
/// best score descending with ties on chunk_id ascending. A variant whose
/// embedding fails is skipped; a failure on the original propagates.
std::vector<ScoredChunk> retrieve_scored(const QuerySet& qs, const VectorIndex& index,
                                         std::size_t top_k, Embedder& embedder);

std::vector<Chunk> retrieve_context(const QuerySet& qs, const VectorIndex& index,
                                    std::size_t top_k, Embedder& embedder);

/// Chunk texts joined by blank lines, as placed in the user prompt.
std::string join_chunks(const std::vector<Chunk>& chunks);

} // namespace testgenie
