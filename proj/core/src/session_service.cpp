// SPDX-License-Identifier: Apache-2.0
#include "testgenie/session_service.hpp"

#include "testgenie/output_parser.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <random>
#include <set>
#include <sstream>

namespace testgenie {

namespace {

std::string read_text(const std::filesystem::path& path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw FetchError("cannot read " + path.string());
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_atomically(const std::filesystem::path& file, const std::string& text)
{
    std::filesystem::create_directories(file.parent_path());
    auto tmp = file;
    tmp += ".tmp";
    {
        std::ofstream out{tmp, std::ios::binary | std::ios::trunc};
        out << text;
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, file);
}

bool blank(std::string_view s)
{
    return std::all_of(s.begin(), s.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

bool valid_id(std::string_view id)
{
    return !id.empty() && id.size() <= 128 && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
}

std::string utc_now_iso()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return s.str();
}

std::string new_session_id()
{
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::uint64_t r = 0;
    {
        const std::lock_guard lock{m};
        r = rng();
    }
    std::ostringstream s;
    s << std::put_time(&tm, "%Y%m%dT%H%M%S") << '-' << std::hex << std::setw(8) << std::setfill('0')
      << (r & 0xffffffffULL);
    return s.str();
}

} // namespace

ServiceInfo parse_service_info(const Json& j)
{
    ServiceInfo info;
    info.setup_instructions = j.value("setup_instructions", "");
    if (const auto it = j.find("env_vars"); it != j.end()) {
        for (const auto& v : *it) {
            EnvVarDescriptor d{v.at("name").get<std::string>(), v.value("description", "")};
            if (!is_valid_env_name(d.name)) {
                throw PreconditionError("invalid environment variable name '" + d.name + "'");
            }
            info.env_vars.push_back(std::move(d));
        }
    }
    return info;
}

SpecCatalog SpecCatalog::from_directory(const std::filesystem::path& dir, const TokenizerHandle& tok)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw FetchError("spec directory does not exist: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator{dir}) {
        const auto name = entry.path().filename().string();
        const auto ext = entry.path().extension().string();
        if (!entry.is_regular_file() || name.ends_with(".service.json")) {
            continue;
        }
        if (ext == ".json" || ext == ".yaml" || ext == ".yml") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    SpecCatalog catalog;
    for (const auto& file : files) {
        ApiSpecDoc doc = simplify_spec(fetch_spec(file.string()));
        account_tokens(doc, tok);
        ServiceInfo info;
        const auto sidecar = file.parent_path() / (file.stem().string() + ".service.json");
        if (std::filesystem::is_regular_file(sidecar, ec)) {
            try {
                info = parse_service_info(Json::parse(read_text(sidecar)));
            } catch (const Json::exception& e) {
                throw DocumentParseError(sidecar.string() + ": " + e.what());
            }
        }
        catalog.add(std::move(doc), std::move(info));
    }
    return catalog;
}

void SpecCatalog::add(ApiSpecDoc spec, ServiceInfo info)
{
    if (!spec.simplified) {
        spec = simplify_spec(std::move(spec));
    }
    auto name = spec.name;
    entries_.insert_or_assign(std::move(name), Entry{std::move(spec), std::move(info)});
}

const SpecCatalog::Entry& SpecCatalog::get(std::string_view name) const
{
    const auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw NotFoundError("unknown spec: " + std::string{name});
    }
    return it->second;
}

std::vector<std::string> SpecCatalog::names() const
{
    std::vector<std::string> out;
    for (const auto& [name, entry] : entries_) {
        out.push_back(name);
    }
    return out;
}

Json SpecCatalog::list_json() const
{
    Json out = Json::array();
    for (const auto& [name, entry] : entries_) {
        Json j = Json::object();
        j["name"] = name;
        j["original_tokens"] = entry.spec.original_tokens;
        j["simplified_tokens"] = entry.spec.simplified_tokens;
        j["token_mode"] = to_string(entry.spec.token_mode);
        out.push_back(std::move(j));
    }
    return out;
}

StubTrackerSource::StubTrackerSource(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::string StubTrackerSource::fetch(const std::string& key)
{
    if (!valid_id(key)) {
        throw PreconditionError("invalid requirement key: " + key);
    }
    const auto file = dir_ / (key + ".txt");
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) {
        throw NotFoundError("no requirement " + key + " in " + dir_.string());
    }
    return read_text(file);
}

Json Session::to_json() const
{
    Json j = Json::object();
    j["id"] = id;
    j["spec"] = spec_name;
    j["requirement"] = requirement;
    j["mode"] = to_string(mode);
    j["model"] = model;
    j["created_at"] = created_at;
    j["history"] = history.to_messages();
    Json bs = Json::array();
    for (const auto& b : branches) {
        bs.push_back(b.to_messages());
    }
    j["branches"] = std::move(bs);
    Json rs = Json::array();
    for (const auto& r : runs) {
        rs.push_back(r.to_json());
    }
    j["runs"] = std::move(rs);
    return j;
}

Session Session::from_json(const Json& j)
{
    Session s;
    try {
        s.id = j.at("id").get<std::string>();
        s.spec_name = j.at("spec").get<std::string>();
        s.requirement = j.at("requirement").get<std::string>();
        s.mode = api_mode_from_string(j.at("mode").get<std::string>());
        s.model = j.at("model").get<std::string>();
        s.created_at = j.value("created_at", "");
        s.history = ChatHistory::from_messages(j.value("history", Json::array()));
        for (const auto& b : j.value("branches", Json::array())) {
            s.branches.push_back(ChatHistory::from_messages(b));
        }
        for (const auto& r : j.value("runs", Json::array())) {
            s.runs.push_back(RunRecord::from_json(r));
        }
    } catch (const Json::exception& e) {
        throw DocumentParseError(std::string{"malformed session: "} + e.what());
    }
    for (std::size_t i = 0; i < s.runs.size(); ++i) {
        if (s.runs[i].attempt_no != i + 1) {
            throw DocumentParseError("session " + s.id + ": run " + std::to_string(i + 1) +
                                     " has attempt_no " + std::to_string(s.runs[i].attempt_no));
        }
    }
    return s;
}

SessionService::SessionService(ServiceConfig cfg, SpecCatalog catalog, std::shared_ptr<ChatClient> llm,
                               std::shared_ptr<Embedder> embedder)
    : cfg_(std::move(cfg)), catalog_(std::move(catalog)), llm_(std::move(llm)), embedder_(std::move(embedder))
{
    if (!llm_) {
        throw PreconditionError("session service needs a chat client");
    }
    cfg_.chunker.validate();
    std::filesystem::create_directories(cfg_.sessions_dir);
}

const ModelProfile& SessionService::model(std::string_view name) const
{
    for (const auto& p : cfg_.models) {
        if (p.name == name) {
            return p;
        }
    }
    throw NotFoundError("unknown model: " + std::string{name});
}

Session SessionService::create_session(const std::string& spec_name, const std::string& requirement,
                                       std::optional<ApiMode> mode, const std::string& model_name)
{
    if (blank(requirement)) {
        throw PreconditionError("requirement must be non-empty");
    }
    const auto& entry = catalog_.get(spec_name);
    const auto& profile = model(model_name);

    Session s;
    s.id = new_session_id();
    s.spec_name = spec_name;
    s.requirement = requirement;
    s.model = profile.name;
    s.created_at = utc_now_iso();
    s.mode = mode.value_or(entry.spec.simplified_tokens >= cfg_.rag_threshold ? ApiMode::Rag : ApiMode::Full);
    if (s.mode == ApiMode::Full && entry.spec.simplified_tokens > profile.context_window) {
        spdlog::info("{} has {} tokens, more than the {} context of {}; using RAG", spec_name,
                     entry.spec.simplified_tokens, profile.context_window, profile.name);
        s.mode = ApiMode::Rag;
    }

    auto sl = std::make_shared<Slot>();
    sl->session = s;
    persist(s);
    {
        const std::lock_guard lock{slots_mutex_};
        slots_[s.id] = sl;
    }
    return s;
}

std::shared_ptr<SessionService::Slot> SessionService::slot(const std::string& id)
{
    if (!valid_id(id)) {
        throw NotFoundError("unknown session: " + id);
    }
    const std::lock_guard lock{slots_mutex_};
    if (const auto it = slots_.find(id); it != slots_.end()) {
        return it->second;
    }
    const auto file = cfg_.sessions_dir / (id + ".json");
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) {
        throw NotFoundError("unknown session: " + id);
    }
    auto sl = std::make_shared<Slot>();
    try {
        sl->session = Session::from_json(Json::parse(read_text(file)));
    } catch (const Json::parse_error& e) {
        throw DocumentParseError(file.string() + ": " + e.what());
    }
    slots_[id] = sl;
    return sl;
}

Session SessionService::get(const std::string& id)
{
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    return sl->session;
}

std::vector<std::string> SessionService::list()
{
    std::set<std::string> ids;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator{cfg_.sessions_dir, ec}) {
        if (entry.path().extension() == ".json" && valid_id(entry.path().stem().string())) {
            ids.insert(entry.path().stem().string());
        }
    }
    {
        const std::lock_guard lock{slots_mutex_};
        for (const auto& [id, sl] : slots_) {
            ids.insert(id);
        }
    }
    return {ids.begin(), ids.end()};
}

void SessionService::persist(const Session& s)
{
    write_atomically(cfg_.sessions_dir / (s.id + ".json"), dump_pretty(s.to_json()) + "\n");
}

void SessionService::record_run(Session& s, RunRecord r)
{
    s.runs.push_back(std::move(r));
    if (cfg_.runs_dir) {
        save_run(*cfg_.runs_dir, s.runs.back());
    }
}

std::string SessionService::system_prompt(const Session& s) const
{
    const auto& entry = catalog_.get(s.spec_name);
    auto env_vars = entry.info.env_vars;
    if (env_vars.empty()) {
        env_vars = load_env_allowlist(cfg_.sandbox_dir / ".env.allowlist");
    }
    return render_system_prompt(cfg_.test_example, env_vars, cfg_.templates);
}

const VectorIndex& SessionService::index_for(const std::string& spec_name)
{
    if (!embedder_) {
        throw PreconditionError("RAG mode needs an embedding client");
    }
    const std::lock_guard lock{index_mutex_};
    if (const auto it = indexes_.find(spec_name); it != indexes_.end()) {
        return *it->second;
    }
    auto idx = std::make_shared<const VectorIndex>(
        build_index(catalog_.get(spec_name).spec, cfg_.chunker, *embedder_, cfg_.tokenizer));
    return *indexes_.emplace(spec_name, std::move(idx)).first->second;
}

std::string SessionService::api_context(const Session& s)
{
    const auto& entry = catalog_.get(s.spec_name);
    if (s.mode == ApiMode::Full) {
        return dumps(*entry.spec.simplified);
    }
    const auto& index = index_for(s.spec_name);
    const QuerySet qs = expand_requirement(s.requirement, *llm_, model(s.model), cfg_.variants);
    return join_chunks(retrieve_context(qs, index, cfg_.top_k, *embedder_));
}

std::string SessionService::user_prompt(Session& s)
{
    const auto& entry = catalog_.get(s.spec_name);
    return render_user_prompt(s.requirement, entry.info.setup_instructions, api_context(s), cfg_.templates);
}

RunRecord SessionService::complete_into(Session& s, ChatHistory& history, const std::string& user_text,
                                        std::size_t branch, bool* overflowed)
{
    RunRecord r;
    r.task_id = s.id;
    r.attempt_no = s.runs.size() + 1;
    r.branch = branch;
    r.service = s.spec_name;
    r.mode = s.mode;
    r.model = s.model;

    try {
        const auto candidate = history.append(Role::User, user_text);
        const ChatResult result = llm_->complete(candidate, model(s.model));
        r.usage = result.usage;
        r.raw_output = result.content;
        if (blank(result.content)) {
            r.raw_output.clear();
            r.note = "model returned an empty reply";
        } else {
            history = candidate.append(Role::Assistant, result.content);
            try {
                r.generation = parse_generation(result.content);
            } catch (const OutputParseError& e) {
                r.note = e.what();
            }
        }
    } catch (const ContextOverflowError& e) {
        r.note = std::string{"generation failed: "} + e.what();
        if (overflowed != nullptr) {
            *overflowed = true;
        }
    } catch (const Error& e) {
        r.note = std::string{"generation failed: "} + e.what();
        spdlog::warn("session {}: {}", s.id, r.note);
    }
    r.suggested_label = suggest_label(r);
    return r;
}

RunRecord SessionService::generate(const std::string& id)
{
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    Session& s = sl->session;
    if (s.history.empty()) {
        s.history = ChatHistory{}.append(Role::System, system_prompt(s));
    }
    std::string text;
    try {
        text = user_prompt(s);
    } catch (const Error& e) {
        RunRecord r;
        r.task_id = s.id;
        r.attempt_no = s.runs.size() + 1;
        r.service = s.spec_name;
        r.mode = s.mode;
        r.model = s.model;
        r.note = std::string{"prompt construction failed: "} + e.what();
        r.suggested_label = suggest_label(r);
        record_run(s, r);
        persist(s);
        return r;
    }
    bool overflowed = false;
    RunRecord r = complete_into(s, s.history, text, 0, &overflowed);
    if (s.mode == ApiMode::Full && overflowed) {
        spdlog::info("session {}: full spec does not fit {}; switching to RAG", s.id, s.model);
        s.mode = ApiMode::Rag;
        try {
            r = complete_into(s, s.history, user_prompt(s), 0);
        } catch (const Error& e) {
            r.note = std::string{"prompt construction failed: "} + e.what();
        }
    }
    record_run(s, r);
    persist(s);
    return r;
}

RunRecord SessionService::execute(const std::string& id, std::size_t attempt_no)
{
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    Session& s = sl->session;
    if (attempt_no == 0 || attempt_no > s.runs.size()) {
        throw NotFoundError("session " + id + " has no attempt " + std::to_string(attempt_no));
    }
    RunRecord& r = s.runs[attempt_no - 1];
    if (!r.has_code()) {
        r.report = ExecutionReport::error("generation has no test code");
    } else {
        const auto file = cfg_.isolated_runs
                              ? materialize_isolated(*r.generation->code, cfg_.sandbox_dir,
                                                     id + "-" + std::to_string(attempt_no))
                              : materialize_script(*r.generation->code, cfg_.sandbox_dir);
        RunnerConfig runner = cfg_.runner;
        if (runner.cwd.empty()) {
            runner.cwd = cfg_.sandbox_dir;
        }
        r.report = run_script(std::filesystem::absolute(file),
                              load_env_allowlist(cfg_.sandbox_dir / ".env.allowlist"), runner);
    }
    r.suggested_label = suggest_label(r);
    if (cfg_.runs_dir) {
        save_run(*cfg_.runs_dir, r);
    }
    persist(s);
    return r;
}

RunRecord SessionService::refactor(const std::string& id, const std::string& instruction)
{
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    Session& s = sl->session;
    const RunRecord* last = nullptr;
    for (auto it = s.runs.rbegin(); it != s.runs.rend(); ++it) {
        if (it->branch == 0 && !it->raw_output.empty()) {
            last = &*it;
            break;
        }
    }
    if (last == nullptr || s.history.expected_next() != Role::User || s.history.size() < 3) {
        throw PreconditionError("session " + id + " has no generated attempt to refactor");
    }
    std::string error_log;
    if (last->report) {
        error_log = last->report->error_log();
    } else if (!last->note.empty()) {
        error_log = last->note;
    } else {
        error_log = "The test was not executed.";
    }
    const std::string text = render_refactor_prompt(error_log, instruction, cfg_.templates);
    RunRecord r = complete_into(s, s.history, text, 0);
    record_run(s, r);
    persist(s);
    return r;
}

std::vector<RunRecord> SessionService::run_tree(const std::string& id, std::size_t attempts)
{
    if (attempts == 0) {
        throw PreconditionError("run_tree needs at least one attempt");
    }
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    Session& s = sl->session;
    const std::string system = system_prompt(s);
    const std::string text = user_prompt(s);
    std::vector<RunRecord> out;
    for (std::size_t i = 0; i < attempts; ++i) {
        RunRecord r;
        if (i == 0 && s.history.size() <= 1) {
            if (s.history.empty()) {
                s.history = ChatHistory{}.append(Role::System, system);
            }
            r = complete_into(s, s.history, text, 0);
        } else {
            s.branches.push_back(ChatHistory{}.append(Role::System, system));
            r = complete_into(s, s.branches.back(), text, s.branches.size());
        }
        record_run(s, r);
        out.push_back(s.runs.back());
    }
    persist(s);
    return out;
}

RunRecord SessionService::annotate(const std::string& id, std::size_t attempt_no, ErrorLabel label,
                                   std::optional<PromptLevel> level)
{
    label = ErrorLabel::make(label.kind, label.semantic_sub);
    auto sl = slot(id);
    const std::lock_guard lock{sl->mutex};
    Session& s = sl->session;
    if (attempt_no == 0 || attempt_no > s.runs.size()) {
        throw NotFoundError("session " + id + " has no attempt " + std::to_string(attempt_no));
    }
    RunRecord& r = s.runs[attempt_no - 1];
    r.label = label;
    if (level) {
        r.prompt_level = level;
    }
    if (cfg_.runs_dir) {
        save_run(*cfg_.runs_dir, r);
    }
    persist(s);
    return r;
}

Json SessionService::metrics(const std::vector<std::size_t>& ks)
{
    std::vector<RunRecord> runs;
    std::vector<EvalTask> tasks;
    Json pending = Json::array();
    for (const auto& id : list()) {
        const Session s = get(id);
        if (s.runs.empty()) {
            continue;
        }
        try {
            auto t = tasks_from_runs(s.runs);
            tasks.insert(tasks.end(), t.begin(), t.end());
            runs.insert(runs.end(), s.runs.begin(), s.runs.end());
        } catch (const NeedsLabelError&) {
            pending.push_back(id);
        }
    }
    const auto models = cfg_.models;
    const ProfileLookup lookup = [models](const std::string& name) -> std::optional<ModelProfile> {
        for (const auto& p : models) {
            if (p.name == name) {
                return p;
            }
        }
        return std::nullopt;
    };
    const MetricsSummary m = aggregate_metrics(tasks, runs, ks, lookup);
    Json j = m.to_json();
    j["pending_tasks"] = std::move(pending);
    j["text"] = m.to_text();
    return j;
}

} // namespace testgenie
