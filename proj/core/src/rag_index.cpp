// SPDX-License-Identifier: Apache-2.0
#include "testgenie/rag_index.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace testgenie {

namespace {

struct Entry {
    std::vector<std::string> path;
    Json value;
};

struct Unit {
    std::vector<Entry> entries;
    std::string text;
    std::size_t tokens = 0;
    std::optional<LeafPart> part;
};

std::string pointer_of(const std::vector<std::string>& path)
{
    std::string out;
    for (const auto& token : path) {
        out += '/';
        out += escape_pointer_token(token);
    }
    return out;
}

Json wrap(const std::vector<Entry>& entries)
{
    if (entries.size() == 1 && entries.front().path.empty()) {
        return entries.front().value;
    }
    Json root = Json::object();
    for (const auto& e : entries) {
        Json* cur = &root;
        for (const auto& token : e.path) {
            cur = &(*cur)[token];
        }
        *cur = e.value;
    }
    return root;
}

class Splitter {
public:
    Splitter(const ChunkerConfig& cfg, std::shared_ptr<const Tokenizer> tok)
        : cfg_(cfg), tok_(std::move(tok))
    {
    }

    Unit make(std::vector<Entry> entries) const
    {
        Unit u;
        u.entries = std::move(entries);
        u.text = dumps(wrap(u.entries));
        u.tokens = tok_->count(u.text);
        return u;
    }

    std::vector<Unit> split(const Json& node, const std::vector<std::string>& path) const
    {
        Unit whole = make({Entry{path, node}});
        if (whole.tokens <= cfg_.max_tokens) {
            return {std::move(whole)};
        }
        if (node.is_string()) {
            return split_string(node.get_ref<const std::string&>(), path);
        }
        if ((node.is_object() || node.is_array()) && !node.empty()) {
            std::vector<Unit> parts;
            if (node.is_object()) {
                for (const auto& [key, child] : node.items()) {
                    auto child_path = path;
                    child_path.push_back(key);
                    auto sub = split(child, child_path);
                    std::move(sub.begin(), sub.end(), std::back_inserter(parts));
                }
            } else {
                for (std::size_t i = 0; i < node.size(); ++i) {
                    auto child_path = path;
                    child_path.push_back(std::to_string(i));
                    auto sub = split(node[i], child_path);
                    std::move(sub.begin(), sub.end(), std::back_inserter(parts));
                }
            }
            return merge(std::move(parts));
        }
        throw PreconditionError("value at '" + pointer_of(path) + "' needs " +
                                std::to_string(whole.tokens) + " tokens and cannot be split below " +
                                std::to_string(cfg_.max_tokens));
    }

private:
    std::vector<Unit> merge(std::vector<Unit> parts) const
    {
        std::vector<Unit> out;
        if (parts.empty()) {
            return out;
        }
        Unit cur = std::move(parts.front());
        for (std::size_t i = 1; i < parts.size(); ++i) {
            Unit& next = parts[i];
            if (cur.tokens < cfg_.min_tokens && !cur.part && !next.part) {
                auto entries = cur.entries;
                entries.insert(entries.end(), next.entries.begin(), next.entries.end());
                Unit joined = make(std::move(entries));
                if (joined.tokens <= cfg_.max_tokens) {
                    cur = std::move(joined);
                    continue;
                }
            }
            out.push_back(std::move(cur));
            cur = std::move(next);
        }
        out.push_back(std::move(cur));
        return out;
    }

    std::vector<Unit> split_string(const std::string& s, const std::vector<std::string>& path) const
    {
        if (make({Entry{path, Json(std::string{})}}).tokens > cfg_.max_tokens) {
            throw PreconditionError("key path '" + pointer_of(path) + "' alone exceeds " +
                                    std::to_string(cfg_.max_tokens) + " tokens");
        }
        // Code point boundaries, so windows never cut a UTF-8 sequence.
        std::vector<std::size_t> bounds;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if ((static_cast<unsigned char>(s[i]) & 0xC0) != 0x80) {
                bounds.push_back(i);
            }
        }
        bounds.push_back(s.size());

        std::vector<Unit> pieces;
        std::size_t start = 0; // index into bounds
        while (start + 1 < bounds.size()) {
            std::size_t lo = start + 1;
            std::size_t hi = bounds.size() - 1;
            std::optional<Unit> best;
            std::size_t next_start = start;
            while (lo <= hi) {
                const std::size_t mid = lo + (hi - lo) / 2;
                Unit u = make({Entry{path, Json(s.substr(bounds[start], bounds[mid] - bounds[start]))}});
                if (u.tokens <= cfg_.max_tokens) {
                    best = std::move(u);
                    next_start = mid;
                    lo = mid + 1;
                } else {
                    hi = mid - 1;
                }
            }
            if (!best) {
                throw PreconditionError("a single character at '" + pointer_of(path) +
                                        "' does not fit in " + std::to_string(cfg_.max_tokens) +
                                        " tokens");
            }
            pieces.push_back(std::move(*best));
            start = next_start;
        }
        for (std::size_t i = 0; i < pieces.size(); ++i) {
            pieces[i].part = LeafPart{i, pieces.size()};
        }
        return pieces;
    }

    const ChunkerConfig& cfg_;
    std::shared_ptr<const Tokenizer> tok_;
};

std::string trim(std::string_view s)
{
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) {
        ++b;
    }
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) {
        --e;
    }
    return std::string{s.substr(b, e - b)};
}

std::string strip_list_marker(std::string line)
{
    std::size_t i = 0;
    while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) {
        ++i;
    }
    if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')' || line[i] == ':')) {
        line = line.substr(i + 1);
    } else if (!line.empty() && (line[0] == '-' || line[0] == '*' || line[0] == '+')) {
        line = line.substr(1);
    }
    line = trim(line);
    if (line.size() >= 2 && line.front() == '"' && line.back() == '"') {
        line = trim(line.substr(1, line.size() - 2));
    }
    return line;
}

} // namespace

void ChunkerConfig::validate() const
{
    if (min_tokens == 0 || min_tokens > max_tokens) {
        throw PreconditionError("chunker needs 0 < min_tokens <= max_tokens (got " +
                                std::to_string(min_tokens) + ", " + std::to_string(max_tokens) + ")");
    }
}

std::string make_chunk_id(std::string_view text)
{
    return sha256_hex(text).substr(0, 16);
}

std::vector<Chunk> split_json(const Json& doc, const ChunkerConfig& cfg, const TokenizerHandle& tok)
{
    cfg.validate();
    if (!(doc.is_object() || doc.is_array()) || doc.empty()) {
        throw PreconditionError("split_json needs a non-empty object or array");
    }
    const Splitter splitter{cfg, Tokenizer::open(tok)};
    std::vector<Chunk> out;
    for (auto& unit : splitter.split(doc, {})) {
        Chunk c;
        c.chunk_id = make_chunk_id(unit.text);
        for (const auto& e : unit.entries) {
            c.origin_pointers.push_back(pointer_of(e.path));
        }
        c.text = std::move(unit.text);
        c.token_len = unit.tokens;
        c.leaf_part = unit.part;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<std::string> chunk_leaf_pointers(const Chunk& chunk)
{
    if (chunk.leaf_part && chunk.leaf_part->index > 0) {
        return {};
    }
    return leaf_pointers(Json::parse(chunk.text));
}

Json VectorIndex::to_json() const
{
    Json j = Json::object();
    j["spec_name"] = spec_name;
    j["dim"] = dim;
    Json cs = Json::array();
    for (const auto& c : chunks) {
        Json cj = Json::object();
        cj["chunk_id"] = c.chunk_id;
        cj["origin_pointers"] = c.origin_pointers;
        cj["text"] = c.text;
        cj["token_len"] = c.token_len;
        if (c.leaf_part) {
            cj["leaf_part"] = {c.leaf_part->index, c.leaf_part->count};
        }
        cs.push_back(std::move(cj));
    }
    j["chunks"] = std::move(cs);
    Json vs = Json::array();
    for (const auto& v : vectors) {
        vs.push_back(v.values);
    }
    j["vectors"] = std::move(vs);
    return j;
}

VectorIndex VectorIndex::from_json(const Json& j)
{
    VectorIndex idx;
    try {
        idx.spec_name = j.at("spec_name").get<std::string>();
        idx.dim = j.at("dim").get<std::size_t>();
        for (const auto& cj : j.at("chunks")) {
            Chunk c;
            c.chunk_id = cj.at("chunk_id").get<std::string>();
            c.origin_pointers = cj.at("origin_pointers").get<std::vector<std::string>>();
            c.text = cj.at("text").get<std::string>();
            c.token_len = cj.at("token_len").get<std::size_t>();
            if (const auto lp = cj.find("leaf_part"); lp != cj.end()) {
                c.leaf_part = LeafPart{lp->at(0).get<std::size_t>(), lp->at(1).get<std::size_t>()};
            }
            idx.chunks.push_back(std::move(c));
        }
        for (const auto& vj : j.at("vectors")) {
            idx.vectors.push_back(EmbeddingVector{vj.get<std::vector<double>>()});
        }
    } catch (const Json::exception& e) {
        throw IndexError(std::string{"malformed index snapshot: "} + e.what());
    }
    if (idx.chunks.size() != idx.vectors.size()) {
        throw IndexError("index snapshot has " + std::to_string(idx.chunks.size()) + " chunks but " +
                         std::to_string(idx.vectors.size()) + " vectors");
    }
    for (const auto& v : idx.vectors) {
        if (v.dim() != idx.dim) {
            throw IndexError("index snapshot vector has dim " + std::to_string(v.dim()) +
                             ", expected " + std::to_string(idx.dim));
        }
    }
    return idx;
}

void VectorIndex::save(const std::filesystem::path& file) const
{
    std::ofstream out{file, std::ios::binary | std::ios::trunc};
    if (!out) {
        throw Error("cannot write index snapshot " + file.string());
    }
    out << to_json().dump() << '\n';
}

VectorIndex VectorIndex::load(const std::filesystem::path& file)
{
    std::ifstream in{file, std::ios::binary};
    if (!in) {
        throw FetchError("cannot read index snapshot " + file.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return from_json(Json::parse(buf.str()));
    } catch (const Json::parse_error& e) {
        throw IndexError(file.string() + ": " + e.what());
    }
}

VectorIndex build_index(const ApiSpecDoc& spec, const ChunkerConfig& cfg, Embedder& embedder,
                        const TokenizerHandle& tok, std::size_t batch_size)
{
    if (!spec.simplified) {
        throw PreconditionError("build_index needs a simplified spec; run simplify_spec first");
    }
    if (batch_size == 0) {
        batch_size = 1;
    }
    VectorIndex idx;
    idx.spec_name = spec.name;
    idx.chunks = split_json(*spec.simplified, cfg, tok);
    for (std::size_t start = 0; start < idx.chunks.size(); start += batch_size) {
        const std::size_t end = std::min(idx.chunks.size(), start + batch_size);
        std::vector<std::string> texts;
        for (std::size_t i = start; i < end; ++i) {
            texts.push_back(idx.chunks[i].text);
        }
        std::vector<EmbeddingVector> batch;
        try {
            batch = embedder.embed(texts);
        } catch (const Error& e) {
            throw IndexError("embedding chunk " + idx.chunks[start].chunk_id + " failed: " + e.what());
        }
        if (batch.size() != texts.size()) {
            throw IndexError("embedder returned " + std::to_string(batch.size()) + " vectors for " +
                             std::to_string(texts.size()) + " chunks");
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
            if (idx.dim == 0) {
                idx.dim = batch[i].dim();
            }
            if (batch[i].dim() == 0 || batch[i].dim() != idx.dim) {
                throw IndexError("chunk " + idx.chunks[start + i].chunk_id + " has embedding dim " +
                                 std::to_string(batch[i].dim()) + ", expected " +
                                 std::to_string(idx.dim));
            }
            idx.vectors.push_back(std::move(batch[i]));
        }
    }
    spdlog::debug("indexed {} chunks of {} (dim {})", idx.chunks.size(), idx.spec_name, idx.dim);
    return idx;
}

std::vector<std::string> QuerySet::effective() const
{
    std::vector<std::string> out{original};
    out.insert(out.end(), variants.begin(), variants.end());
    return out;
}

std::vector<std::string> parse_variants(std::string_view reply, std::string_view original,
                                        std::size_t count)
{
    std::vector<std::string> out;
    std::istringstream in{std::string{reply}};
    std::string line;
    const std::string orig = trim(original);
    while (out.size() < count && std::getline(in, line)) {
        std::string v = strip_list_marker(trim(line));
        if (v.empty() || v == orig || std::find(out.begin(), out.end(), v) != out.end()) {
            continue;
        }
        out.push_back(std::move(v));
    }
    return out;
}

QuerySet expand_requirement(const std::string& req, ChatClient& llm, const ModelProfile& profile,
                            std::size_t count)
{
    if (trim(req).empty()) {
        throw PreconditionError("requirement must be non-empty");
    }
    QuerySet qs{req, {}};
    if (count == 0) {
        return qs;
    }
    try {
        const auto history = ChatHistory{}
                                 .append(Role::System, "You rewrite software requirements.")
                                 .append(Role::User, render_expansion_prompt(req, count));
        const auto result = llm.complete(history, profile);
        qs.variants = parse_variants(result.content, req, count);
    } catch (const Error& e) {
        spdlog::warn("requirement expansion failed, retrieving with the original only: {}", e.what());
        qs.variants.clear();
    }
    return qs;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b)
{
    if (a.size() != b.size()) {
        throw PreconditionError("cosine of vectors with dims " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<ScoredChunk> retrieve_scored(const QuerySet& qs, const VectorIndex& index,
                                         std::size_t top_k, Embedder& embedder)
{
    if (top_k == 0) {
        throw PreconditionError("top_k must be at least 1");
    }
    if (index.chunks.size() != index.vectors.size()) {
        throw IndexError("index chunks and vectors differ in length");
    }
    const auto by_score = [&](const ScoredChunk& x, const ScoredChunk& y) {
        if (x.score != y.score) {
            return x.score > y.score;
        }
        return index.chunks[x.index].chunk_id < index.chunks[y.index].chunk_id;
    };

    std::map<std::size_t, double> best;
    const auto queries = qs.effective();
    for (std::size_t q = 0; q < queries.size(); ++q) {
        EmbeddingVector qv;
        try {
            auto vs = embedder.embed({queries[q]});
            if (vs.size() != 1) {
                throw MalformedResponseError("expected one query embedding");
            }
            qv = std::move(vs.front());
        } catch (const Error& e) {
            if (q == 0) {
                throw;
            }
            spdlog::warn("skipping query variant {}: {}", q, e.what());
            continue;
        }
        std::vector<ScoredChunk> scored;
        scored.reserve(index.chunks.size());
        for (std::size_t i = 0; i < index.chunks.size(); ++i) {
            scored.push_back({i, cosine_similarity(qv.values, index.vectors[i].values)});
        }
        const std::size_t k = std::min(top_k, scored.size());
        std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(),
                          by_score);
        for (std::size_t i = 0; i < k; ++i) {
            auto [it, inserted] = best.emplace(scored[i].index, scored[i].score);
            if (!inserted) {
                it->second = std::max(it->second, scored[i].score);
            }
        }
    }
    std::vector<ScoredChunk> out;
    out.reserve(best.size());
    for (const auto& [i, s] : best) {
        out.push_back({i, s});
    }
    std::sort(out.begin(), out.end(), by_score);
    return out;
}

std::vector<Chunk> retrieve_context(const QuerySet& qs, const VectorIndex& index,
                                    std::size_t top_k, Embedder& embedder)
{
    std::vector<Chunk> out;
    for (const auto& s : retrieve_scored(qs, index, top_k, embedder)) {
        out.push_back(index.chunks[s.index]);
    }
    return out;
}

std::string join_chunks(const std::vector<Chunk>& chunks)
{
    std::string out;
    for (const auto& c : chunks) {
        if (!out.empty()) {
            out += "\n\n";
        }
        out += c.text;
    }
    return out;
}

} // namespace testgenie
