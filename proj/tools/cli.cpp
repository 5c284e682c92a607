// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include "testgenie/config.hpp"
#include "testgenie/evaluation.hpp"
#include "testgenie/http_api.hpp"
#include "testgenie/rag_index.hpp"
#include "testgenie/session_service.hpp"
#include "testgenie/spec_ingest.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace testgenie::cli {

namespace {

std::string dashed(std::string key)
{
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

std::string env_name(std::string key)
{
    std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::toupper(c); });
    return "TESTGENIE_" + key;
}

std::string read_file(const std::string& path)
{
    std::ifstream in{path, std::ios::binary};
    if (!in) {
        throw FetchError("cannot read " + path);
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// Restores the previous default logger when the command finishes.
class LogCapture {
public:
    LogCapture(std::ostream& err, bool verbose)
        : previous_(spdlog::default_logger())
    {
        auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
        sink->set_pattern("[%l] %v");
        auto logger = std::make_shared<spdlog::logger>("testgenie", sink);
        logger->set_level(verbose ? spdlog::level::debug : spdlog::level::info);
        spdlog::set_default_logger(logger);
    }
    ~LogCapture() { spdlog::set_default_logger(previous_); }
    LogCapture(const LogCapture&) = delete;
    LogCapture& operator=(const LogCapture&) = delete;

private:
    std::shared_ptr<spdlog::logger> previous_;
};

struct Options {
    std::string config;
    bool json = false;
    bool verbose = false;
    std::map<std::string, std::string> settings;

    std::string spec;
    std::string out_file;
    std::size_t min_tokens = 800;
    std::size_t max_tokens = 1200;

    std::string requirement;
    std::string requirement_file;
    std::string requirement_key;
    std::string requirements_dir = "requirements";
    std::string mode = "auto";
    std::size_t attempts = 1;
    std::string session;

    std::size_t attempt = 0;
    std::string instruction;
    std::string label;
    std::string semantic_sub;
    std::string level;

    std::string ks = "1";

    std::string host = "127.0.0.1";
    int port = 8080;
    std::string static_dir;
};

class Runner {
public:
    Runner(const Options& o, Settings s, std::ostream& out) : o_(o), s_(std::move(s)), out_(out) {}

    int distill()
    {
        const TokenizerHandle tok = make_tokenizer(s_);
        ApiSpecDoc doc = simplify_spec(fetch_spec(o_.spec));
        account_tokens(doc, tok);
        if (!o_.out_file.empty()) {
            std::ofstream f{o_.out_file, std::ios::binary | std::ios::trunc};
            f << dump_pretty(*doc.simplified) << '\n';
            if (!f) {
                throw Error("cannot write " + o_.out_file);
            }
        }
        Json j = Json::object();
        j["name"] = doc.name;
        j["source"] = doc.source;
        j["original_tokens"] = doc.original_tokens;
        j["simplified_tokens"] = doc.simplified_tokens;
        j["token_mode"] = to_string(doc.token_mode);
        j["out"] = o_.out_file.empty() ? Json(nullptr) : Json(o_.out_file);
        std::ostringstream t;
        t << doc.name << ": original " << doc.original_tokens << " tokens, simplified "
          << doc.simplified_tokens << " tokens (" << to_string(doc.token_mode) << ")\n";
        if (!o_.out_file.empty()) {
            t << "wrote " << o_.out_file << '\n';
        }
        return emit(j, t.str());
    }

    int index()
    {
        const TokenizerHandle tok = make_tokenizer(s_);
        ApiSpecDoc doc = simplify_spec(fetch_spec(o_.spec));
        account_tokens(doc, tok);
        auto client = make_client(s_, tok);
        auto embedder = make_embedder(s_, client);
        const ChunkerConfig cfg{o_.min_tokens, o_.max_tokens};
        const VectorIndex idx = build_index(doc, cfg, *embedder, tok);
        const std::string file = o_.out_file.empty() ? doc.name + ".index.json" : o_.out_file;
        idx.save(file);
        std::size_t largest = 0;
        for (const auto& c : idx.chunks) {
            largest = std::max(largest, c.token_len);
        }
        Json j = Json::object();
        j["spec_name"] = idx.spec_name;
        j["chunks"] = idx.chunks.size();
        j["dim"] = idx.dim;
        j["largest_chunk_tokens"] = largest;
        j["token_mode"] = to_string(tok.kind);
        j["out"] = file;
        std::ostringstream t;
        t << idx.spec_name << ": " << idx.chunks.size() << " chunks (largest " << largest
          << " tokens), dim " << idx.dim << ", wrote " << file << '\n';
        return emit(j, t.str());
    }

    int generate()
    {
        auto svc = service();
        std::string id = o_.session;
        if (id.empty()) {
            if (o_.spec.empty()) {
                throw PreconditionError("generate needs --spec (or --session to continue one)");
            }
            std::optional<ApiMode> mode;
            if (o_.mode != "auto") {
                mode = api_mode_from_string(o_.mode);
            }
            id = svc->create_session(spec_name_for(o_.spec), requirement(), mode, s_.model).id;
        }
        std::vector<RunRecord> runs;
        if (o_.attempts > 1) {
            runs = svc->run_tree(id, o_.attempts);
        } else {
            runs.push_back(svc->generate(id));
        }
        const Session s = svc->get(id);
        Json j = Json::object();
        j["session"] = id;
        j["mode"] = to_string(s.mode);
        Json rs = Json::array();
        std::ostringstream t;
        t << "session " << id << " (" << to_string(s.mode) << ", " << s.model << ")\n";
        for (const auto& r : runs) {
            rs.push_back(r.to_json());
            t << "attempt " << r.attempt_no << ": " << (r.has_code() ? "code generated" : "no code");
            if (!r.note.empty()) {
                t << " (" << r.note << ")";
            }
            t << ", " << r.usage.input_tokens << " in / " << r.usage.output_tokens << " out tokens\n";
        }
        j["runs"] = std::move(rs);
        return emit(j, t.str());
    }

    int execute()
    {
        auto svc = service();
        const RunRecord r = svc->execute(o_.session, attempt_or_latest(*svc));
        std::ostringstream t;
        t << "attempt " << r.attempt_no << ": " << to_string(r.report->outcome) << ", "
          << r.report->total << " tests, " << r.report->passed << " passed, " << r.report->failed
          << " failed\n";
        for (const auto& m : r.report->failure_messages) {
            t << m << '\n';
        }
        if (r.suggested_label) {
            t << "suggested label: " << to_string(r.suggested_label->kind) << '\n';
        }
        return emit(r.to_json(), t.str());
    }

    int refactor()
    {
        auto svc = service();
        const RunRecord r = svc->refactor(o_.session, o_.instruction);
        std::ostringstream t;
        t << "attempt " << r.attempt_no << ": " << (r.has_code() ? "code generated" : "no code");
        if (!r.note.empty()) {
            t << " (" << r.note << ")";
        }
        t << '\n';
        return emit(r.to_json(), t.str());
    }

    int annotate()
    {
        auto svc = service();
        std::optional<SemanticSub> sub;
        if (!o_.semantic_sub.empty()) {
            sub = semantic_sub_from_string(o_.semantic_sub);
        }
        std::optional<PromptLevel> level;
        if (!o_.level.empty()) {
            level = prompt_level_from_string(o_.level);
        }
        const ErrorLabel label = ErrorLabel::make(error_kind_from_string(o_.label), sub);
        const RunRecord r = svc->annotate(o_.session, attempt_or_latest(*svc), label, level);
        std::ostringstream t;
        t << "attempt " << r.attempt_no << " labelled " << to_string(label.kind);
        if (label.semantic_sub) {
            t << "/" << to_string(*label.semantic_sub);
        }
        t << '\n';
        return emit(r.to_json(), t.str());
    }

    int metrics()
    {
        const auto ks = parse_ks(o_.ks);
        Json j;
        if (s_.runs) {
            const auto runs = load_runs(*s_.runs);
            std::map<std::string, std::vector<RunRecord>> by_task;
            for (const auto& r : runs) {
                by_task[r.task_id].push_back(r);
            }
            std::vector<EvalTask> tasks;
            std::vector<RunRecord> counted;
            Json pending = Json::array();
            for (const auto& [id, group] : by_task) {
                try {
                    const auto t = tasks_from_runs(group);
                    tasks.insert(tasks.end(), t.begin(), t.end());
                    counted.insert(counted.end(), group.begin(), group.end());
                } catch (const NeedsLabelError&) {
                    pending.push_back(id);
                }
            }
            const MetricsSummary m = aggregate_metrics(tasks, counted, ks);
            j = m.to_json();
            j["pending_tasks"] = std::move(pending);
            j["text"] = m.to_text();
        } else {
            j = service()->metrics(ks);
        }
        std::string text = j["text"].get<std::string>();
        if (!j["pending_tasks"].empty()) {
            text += "untriaged tasks skipped: " + std::to_string(j["pending_tasks"].size()) + "\n";
        }
        return emit(j, text);
    }

    int serve()
    {
        auto svc = service();
        std::optional<std::filesystem::path> static_dir;
        if (!o_.static_dir.empty()) {
            static_dir = o_.static_dir;
        }
        ApiServer server{*svc, static_dir};
        const int port = server.bind(o_.host, o_.port);
        spdlog::info("listening on http://{}:{}", o_.host, port);
        server.listen();
        return 0;
    }

private:
    int emit(const Json& j, const std::string& text)
    {
        if (o_.json) {
            out_ << j.dump(2) << '\n';
        } else {
            out_ << text;
        }
        return 0;
    }

    std::string requirement() const
    {
        const int given = !o_.requirement.empty() + !o_.requirement_file.empty() + !o_.requirement_key.empty();
        if (given != 1) {
            throw PreconditionError(
                "give exactly one of --requirement, --requirement-file or --requirement-key");
        }
        if (!o_.requirement.empty()) {
            return o_.requirement;
        }
        if (!o_.requirement_file.empty()) {
            return read_file(o_.requirement_file);
        }
        StubTrackerSource source{o_.requirements_dir};
        return source.fetch(o_.requirement_key);
    }

    std::string spec_name_for(const std::string& spec)
    {
        std::error_code ec;
        if (std::filesystem::is_regular_file(spec, ec)) {
            return std::filesystem::path{spec}.stem().string();
        }
        return spec;
    }

    std::size_t attempt_or_latest(SessionService& svc) const
    {
        if (o_.attempt > 0) {
            return o_.attempt;
        }
        const Session s = svc.get(o_.session);
        if (s.runs.empty()) {
            throw PreconditionError("session " + o_.session + " has no attempts");
        }
        return s.runs.size();
    }

    std::unique_ptr<SessionService> service()
    {
        const TokenizerHandle tok = make_tokenizer(s_);
        SpecCatalog catalog;
        std::error_code ec;
        if (std::filesystem::is_directory(s_.specs, ec)) {
            catalog = SpecCatalog::from_directory(s_.specs, tok);
        }
        if (!o_.spec.empty() && std::filesystem::is_regular_file(o_.spec, ec)) {
            ApiSpecDoc doc = simplify_spec(fetch_spec(o_.spec));
            account_tokens(doc, tok);
            ServiceInfo info;
            const auto sidecar = std::filesystem::path{o_.spec}.parent_path() /
                                 (std::filesystem::path{o_.spec}.stem().string() + ".service.json");
            if (std::filesystem::is_regular_file(sidecar, ec)) {
                info = parse_service_info(Json::parse(read_file(sidecar.string())));
            }
            catalog.add(std::move(doc), std::move(info));
        }
        auto client = make_client(s_, tok);
        auto embedder = make_embedder(s_, client);
        return std::make_unique<SessionService>(make_service_config(s_, tok), std::move(catalog), client,
                                                embedder);
    }

    const Options& o_;
    Settings s_;
    std::ostream& out_;
};

} // namespace

EnvLookup process_env()
{
    return [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str())) {
            return std::string{v};
        }
        return std::nullopt;
    };
}

std::map<std::string, std::string> read_config_file(const std::string& path)
{
    std::ifstream in{path};
    if (!in) {
        throw FetchError("cannot read config file " + path);
    }
    std::map<std::string, std::string> out;
    for (const auto& item : CLI::ConfigTOML().from_config(in)) {
        if (!item.parents.empty() || item.inputs.empty()) {
            continue;
        }
        std::string key = item.name;
        std::replace(key.begin(), key.end(), '-', '_');
        out[key] = item.inputs.front();
    }
    return out;
}

std::map<std::string, std::string> resolve_settings(const std::map<std::string, std::string>& file_values,
                                                    const EnvLookup& env,
                                                    const std::map<std::string, std::string>& flag_values)
{
    std::map<std::string, std::string> out;
    for (const auto& key : setting_keys()) {
        if (const auto it = flag_values.find(key); it != flag_values.end()) {
            out[key] = it->second;
        } else if (auto v = env ? env(env_name(key)) : std::nullopt) {
            out[key] = *v;
        } else if (const auto f = file_values.find(key); f != file_values.end()) {
            out[key] = f->second;
        }
    }
    for (const auto& [key, value] : file_values) {
        if (std::find(setting_keys().begin(), setting_keys().end(), key) == setting_keys().end()) {
            throw PreconditionError("unknown setting '" + key + "' in config file");
        }
    }
    return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env)
{
    Options o;
    CLI::App app{"Generate, run and evaluate API integration tests from business requirements.", "testgenie"};
    app.require_subcommand(1);
    app.fallthrough();
    app.add_option("--config", o.config, "Config file (key = value); default ./testgenie.toml when present");
    app.add_flag("--json", o.json, "Print one JSON document on stdout");
    app.add_flag("-v,--verbose", o.verbose, "Debug logging on stderr");

    std::map<std::string, std::string> flag_storage;
    std::map<std::string, CLI::Option*> setting_options;
    for (const auto& key : setting_keys()) {
        setting_options[key] = app.add_option("--" + dashed(key), flag_storage[key])
                                   ->group("Settings (also TESTGENIE_" + std::string{"<NAME>"} + " or config file)");
    }

    auto* distill = app.add_subcommand("distill", "Simplify a spec and report its token counts");
    distill->add_option("--spec", o.spec, "Spec file path or URL")->required();
    distill->add_option("--out", o.out_file, "Write the simplified spec (pretty JSON)");

    auto* index = app.add_subcommand("index", "Chunk and embed a spec into an index snapshot");
    index->add_option("--spec", o.spec, "Spec file path or URL")->required();
    index->add_option("--out", o.out_file, "Snapshot file (default <name>.index.json)");
    index->add_option("--min-tokens", o.min_tokens, "Minimum chunk size")->capture_default_str();
    index->add_option("--max-tokens", o.max_tokens, "Maximum chunk size")->capture_default_str();

    auto* generate = app.add_subcommand("generate", "Generate a test for a requirement");
    generate->add_option("--spec", o.spec, "Spec name from the catalog, or a spec file");
    generate->add_option("--requirement", o.requirement, "Requirement text");
    generate->add_option("--requirement-file", o.requirement_file, "Read the requirement from a file");
    generate->add_option("--requirement-key", o.requirement_key, "Requirement id in the stub tracker");
    generate->add_option("--requirements-dir", o.requirements_dir, "Stub tracker directory")->capture_default_str();
    generate->add_option("--mode", o.mode, "auto, full or rag")->capture_default_str();
    generate->add_option("--attempts", o.attempts, "Independent attempts (tree); 1 extends the chain")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    generate->add_option("--session", o.session, "Continue an existing session");

    auto* execute = app.add_subcommand("execute", "Run a generated test in the sandbox");
    execute->add_option("--session", o.session)->required();
    execute->add_option("--attempt", o.attempt, "Attempt number (default latest)");

    auto* refactor = app.add_subcommand("refactor", "Ask for a fixed test from the latest failure");
    refactor->add_option("--session", o.session)->required();
    refactor->add_option("--instruction", o.instruction, "Extra instruction for the model");

    auto* annotate = app.add_subcommand("annotate", "Label an attempt");
    annotate->add_option("--session", o.session)->required();
    annotate->add_option("--attempt", o.attempt, "Attempt number (default latest)");
    annotate->add_option("--label", o.label, "Syntax, Semantic, NoTest, Permission or Defect")->required();
    annotate->add_option("--semantic-sub", o.semantic_sub, "Hallucination, ApiOutdated or Other");
    annotate->add_option("--level", o.level, "Prompt level L1, L2 or L3");

    auto* metrics = app.add_subcommand("metrics", "valid@k and run statistics (from --runs or sessions)");
    metrics->add_option("--k", o.ks, "Comma-separated k values")->capture_default_str();

    auto* serve = app.add_subcommand("serve", "Serve the session HTTP API");
    serve->add_option("--host", o.host)->capture_default_str();
    serve->add_option("--port", o.port)->capture_default_str();
    serve->add_option("--static", o.static_dir, "Directory served at /");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    LogCapture capture{err, o.verbose};
    auto fail = [&](const std::string& message) {
        err << "error: " << message << '\n';
        if (o.json) {
            Json j = Json::object();
            j["error"] = message;
            out << j.dump(2) << '\n';
        }
        return 1;
    };

    try {
        std::map<std::string, std::string> flags;
        for (const auto& [key, opt] : setting_options) {
            if (opt->count() > 0) {
                flags[key] = flag_storage[key];
            }
        }
        std::string config = o.config;
        if (config.empty()) {
            if (auto v = env ? env("TESTGENIE_CONFIG") : std::nullopt) {
                config = *v;
            } else if (std::filesystem::is_regular_file("testgenie.toml")) {
                config = "testgenie.toml";
            }
        }
        const auto file_values = config.empty() ? std::map<std::string, std::string>{} : read_config_file(config);
        Settings settings;
        for (const auto& [key, value] : resolve_settings(file_values, env, flags)) {
            apply_setting(settings, key, value);
        }

        Runner runner{o, settings, out};
        if (distill->parsed()) {
            return runner.distill();
        }
        if (index->parsed()) {
            return runner.index();
        }
        if (generate->parsed()) {
            return runner.generate();
        }
        if (execute->parsed()) {
            return runner.execute();
        }
        if (refactor->parsed()) {
            return runner.refactor();
        }
        if (annotate->parsed()) {
            return runner.annotate();
        }
        if (metrics->parsed()) {
            return runner.metrics();
        }
        if (serve->parsed()) {
            return runner.serve();
        }
    } catch (const CLI::Error& e) {
        return fail(e.what());
    } catch (const std::exception& e) {
        return fail(e.what());
    }
    return 2;
}

} // namespace testgenie::cli
