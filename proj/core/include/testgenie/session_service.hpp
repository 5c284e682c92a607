// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/evaluation.hpp"
#include "testgenie/exec_orchestrator.hpp"
#include "testgenie/llm_gateway.hpp"
#include "testgenie/prompt_forge.hpp"
#include "testgenie/rag_index.hpp"
#include "testgenie/spec_ingest.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace testgenie {

/// Per-service extras read from `<name>.service.json` next to the spec.
struct ServiceInfo {
    std::vector<EnvVarDescriptor> env_vars;
    std::string setup_instructions;
};

/// Ingested (simplified, token-counted) specifications by name.
class SpecCatalog {
public:
    struct Entry {
        ApiSpecDoc spec;
        ServiceInfo info;
    };

    /// Loads every *.json/*.yaml/*.yml in `dir` except *.service.json sidecars.
    static SpecCatalog from_directory(const std::filesystem::path& dir, const TokenizerHandle& tok);

    void add(ApiSpecDoc spec, ServiceInfo info = {});
    const Entry& get(std::string_view name) const;
    std::vector<std::string> names() const;
    /// `[{"name","original_tokens","simplified_tokens","token_mode"}]`
    Json list_json() const;

private:
    std::map<std::string, Entry, std::less<>> entries_;
};

ServiceInfo parse_service_info(const Json& j);

/// Where business requirements come from when not typed in.
class RequirementSource {
public:
    virtual ~RequirementSource() = default;
    virtual std::string fetch(const std::string& key) = 0;
};

/// Stand-in for an issue tracker: reads `<dir>/<key>.txt`.
class StubTrackerSource : public RequirementSource {
public:
    explicit StubTrackerSource(std::filesystem::path dir);
    std::string fetch(const std::string& key) override;

private:
    std::filesystem::path dir_;
};

struct Session {
    std::string id;
    std::string spec_name;
    std::string requirement;
    ApiMode mode = ApiMode::Full;
    std::string model;
    /// Main refactoring chain.
    ChatHistory history;
    /// Independent tree branches, branch b stored at index b-1.
    std::vector<ChatHistory> branches;
    std::vector<RunRecord> runs;
    std::string created_at;

    Json to_json() const;
    static Session from_json(const Json& j);

    bool operator==(const Session&) const = default;
};

struct ServiceConfig {
    std::filesystem::path sessions_dir = "sessions";
    /// Also mirror each run to `<runs_dir>/<session>/<attempt>.json` when set.
    std::optional<std::filesystem::path> runs_dir;
    std::filesystem::path sandbox_dir = "sandbox";
    RunnerConfig runner;
    bool isolated_runs = true;
    std::size_t rag_threshold = 100000;
    ChunkerConfig chunker;
    std::size_t top_k = 5;
    std::size_t variants = 5;
    TokenizerHandle tokenizer = TokenizerHandle::approximate();
    PromptTemplates templates = PromptTemplates::builtin();
    std::string test_example = default_test_example();
    std::vector<ModelProfile> models = builtin_model_profiles();
};

/// Generate, execute, refactor and annotate workflows over persisted sessions.
/// Operations on one session are serialised; different sessions run concurrently.
class SessionService {
public:
    SessionService(ServiceConfig cfg, SpecCatalog catalog, std::shared_ptr<ChatClient> llm,
                   std::shared_ptr<Embedder> embedder);

    const SpecCatalog& catalog() const noexcept { return catalog_; }
    const ServiceConfig& config() const noexcept { return cfg_; }
    const ModelProfile& model(std::string_view name) const;

    /// Without a mode, RAG is chosen when the simplified spec has at least
    /// `rag_threshold` tokens. Full is downgraded when the spec exceeds the
    /// model context window.
    Session create_session(const std::string& spec_name, const std::string& requirement,
                           std::optional<ApiMode> mode, const std::string& model);

    Session get(const std::string& id);
    std::vector<std::string> list();

    RunRecord generate(const std::string& id);
    RunRecord execute(const std::string& id, std::size_t attempt_no);
    RunRecord refactor(const std::string& id, const std::string& instruction);
    std::vector<RunRecord> run_tree(const std::string& id, std::size_t attempts);
    RunRecord annotate(const std::string& id, std::size_t attempt_no, ErrorLabel label,
                       std::optional<PromptLevel> level);

    /// Metrics over every session; sessions with untriaged runs are listed
    /// under "pending_tasks" instead of being counted.
    Json metrics(const std::vector<std::size_t>& ks);

    /// The API context the user prompt would carry for this session.
    std::string api_context(const Session& s);

private:
    struct Slot {
        std::mutex mutex;
        Session session;
    };

    std::shared_ptr<Slot> slot(const std::string& id);
    void persist(const Session& s);
    void record_run(Session& s, RunRecord r);
    std::string system_prompt(const Session& s) const;
    std::string user_prompt(Session& s);
    const VectorIndex& index_for(const std::string& spec_name);
    RunRecord complete_into(Session& s, ChatHistory& history, const std::string& user_text,
                            std::size_t branch, bool* overflowed = nullptr);

    ServiceConfig cfg_;
    SpecCatalog catalog_;
    std::shared_ptr<ChatClient> llm_;
    std::shared_ptr<Embedder> embedder_;

    std::mutex slots_mutex_;
    std::map<std::string, std::shared_ptr<Slot>> slots_;
    std::mutex index_mutex_;
    std::map<std::string, std::shared_ptr<const VectorIndex>> indexes_;
};

} // namespace testgenie
