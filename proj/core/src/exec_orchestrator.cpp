// SPDX-License-Identifier: Apache-2.0
#include "testgenie/exec_orchestrator.hpp"

#include "testgenie/subprocess.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

extern char** environ;

namespace testgenie {

namespace {

std::size_t count_field(const Json& raw, const char* name)
{
    const auto it = raw.find(name);
    if (it == raw.end()) {
        throw ReportFieldError(std::string{"runner report is missing "} + name);
    }
    if (!it->is_number_unsigned() && !(it->is_number_integer() && it->get<long long>() >= 0)) {
        throw ReportFieldError(std::string{"runner report field "} + name + " is not a count");
    }
    return it->get<std::size_t>();
}

std::size_t optional_count(const Json& raw, const char* name)
{
    const auto it = raw.find(name);
    return it != raw.end() && it->is_number_unsigned() ? it->get<std::size_t>() : 0;
}

std::optional<Json> find_report(const std::string& out)
{
    auto try_parse = [](std::string_view text) -> std::optional<Json> {
        try {
            Json j = Json::parse(text);
            if (j.is_object() && j.contains("numTotalTests")) {
                return j;
            }
        } catch (const Json::parse_error&) {
        }
        return std::nullopt;
    };
    if (auto j = try_parse(out)) {
        return j;
    }
    // Some runners print banners before the report; try from each line starting with '{'.
    std::size_t pos = out.size();
    while (pos > 0) {
        const std::size_t brace = out.rfind("\n{", pos - 1);
        if (brace == std::string::npos) {
            break;
        }
        if (auto j = try_parse(std::string_view{out}.substr(brace + 1))) {
            return j;
        }
        pos = brace;
    }
    return std::nullopt;
}

std::string tail(const std::string& s, std::size_t max_bytes)
{
    return s.size() <= max_bytes ? s : s.substr(s.size() - max_bytes);
}

} // namespace

std::string_view to_string(Outcome o)
{
    return o == Outcome::Run ? "RUN" : "ERROR";
}

Outcome outcome_from_string(std::string_view s)
{
    if (s == "RUN") {
        return Outcome::Run;
    }
    if (s == "ERROR") {
        return Outcome::Error;
    }
    throw PreconditionError("unknown outcome: " + std::string{s});
}

ExecutionReport ExecutionReport::error(std::string message, double elapsed_seconds)
{
    ExecutionReport r;
    r.outcome = Outcome::Error;
    if (!message.empty()) {
        r.failure_messages.push_back(std::move(message));
    }
    r.elapsed_seconds = elapsed_seconds;
    return r;
}

std::string ExecutionReport::error_log() const
{
    if (failure_messages.empty()) {
        std::ostringstream s;
        s << "Outcome " << to_string(outcome) << ": " << total << " tests, " << passed << " passed, "
          << failed << " failed.";
        return s.str();
    }
    std::string out;
    for (const auto& m : failure_messages) {
        if (!out.empty()) {
            out += "\n\n";
        }
        out += m;
    }
    return out;
}

Json ExecutionReport::to_json() const
{
    Json j = Json::object();
    j["outcome"] = to_string(outcome);
    j["total"] = total;
    j["passed"] = passed;
    j["failed"] = failed;
    j["failure_messages"] = failure_messages;
    j["raw_report"] = raw_report ? *raw_report : Json(nullptr);
    j["elapsed_seconds"] = elapsed_seconds;
    return j;
}

ExecutionReport ExecutionReport::from_json(const Json& j)
{
    ExecutionReport r;
    r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
    r.total = j.at("total").get<std::size_t>();
    r.passed = j.at("passed").get<std::size_t>();
    r.failed = j.at("failed").get<std::size_t>();
    r.failure_messages = j.value("failure_messages", std::vector<std::string>{});
    if (const auto it = j.find("raw_report"); it != j.end() && !it->is_null()) {
        r.raw_report = *it;
    }
    r.elapsed_seconds = j.value("elapsed_seconds", 0.0);
    if (r.outcome == Outcome::Run && r.total != r.passed + r.failed) {
        throw PreconditionError("RUN report with total != passed + failed");
    }
    if (r.outcome == Outcome::Error && (r.total || r.passed || r.failed)) {
        throw PreconditionError("ERROR report with non-zero counts");
    }
    return r;
}

ReportCounts parse_report(const Json& raw)
{
    if (!raw.is_object()) {
        throw ReportFieldError("runner report is not a JSON object");
    }
    ReportCounts c;
    const std::size_t total = count_field(raw, "numTotalTests");
    c.passed = count_field(raw, "numPassedTests");
    c.failed = count_field(raw, "numFailedTests");
    const std::size_t skipped = optional_count(raw, "numPendingTests") + optional_count(raw, "numTodoTests");
    c.total = total >= skipped ? total - skipped : 0;
    if (c.total != c.passed + c.failed) {
        throw ReportFieldError("runner report counts disagree: total " + std::to_string(total) +
                               ", passed " + std::to_string(c.passed) + ", failed " +
                               std::to_string(c.failed));
    }
    if (const auto it = raw.find("testResults"); it != raw.end() && it->is_array()) {
        for (const auto& tr : *it) {
            if (const auto m = tr.find("message"); m != tr.end() && m->is_string() && !m->get<std::string>().empty()) {
                c.failure_messages.push_back(m->get<std::string>());
            }
        }
    }
    return c;
}

ExecutionReport report_from_json(const Json& raw, double elapsed_seconds)
{
    const ReportCounts c = parse_report(raw);
    const bool runtime_errors = optional_count(raw, "numRuntimeErrorTestSuites") > 0;
    const bool failed_run = raw.contains("success") && raw["success"].is_boolean() && !raw["success"].get<bool>();
    if (c.total == 0 && (runtime_errors || failed_run) && !c.failure_messages.empty()) {
        ExecutionReport r;
        r.outcome = Outcome::Error;
        r.failure_messages = c.failure_messages;
        r.raw_report = raw;
        r.elapsed_seconds = elapsed_seconds;
        return r;
    }
    ExecutionReport r;
    r.outcome = Outcome::Run;
    r.total = c.total;
    r.passed = c.passed;
    r.failed = c.failed;
    r.failure_messages = c.failure_messages;
    r.raw_report = raw;
    r.elapsed_seconds = elapsed_seconds;
    return r;
}

std::filesystem::path materialize_script(std::string_view code, const std::filesystem::path& sandbox_dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(sandbox_dir, ec)) {
        throw PreconditionError("sandbox directory does not exist: " + sandbox_dir.string());
    }
    std::string text;
    text.reserve(code.size());
    for (std::size_t i = 0; i < code.size(); ++i) {
        if (code[i] == '\r' && i + 1 < code.size() && code[i + 1] == '\n') {
            continue;
        }
        text += code[i];
    }
    const auto file = sandbox_dir / kScriptFileName;
    std::ofstream out{file, std::ios::binary | std::ios::trunc};
    if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
        throw Error("cannot write " + file.string());
    }
    return file;
}

std::filesystem::path materialize_isolated(std::string_view code, const std::filesystem::path& sandbox_dir,
                                           std::string_view run_id)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(sandbox_dir, ec)) {
        throw PreconditionError("sandbox directory does not exist: " + sandbox_dir.string());
    }
    const auto dir = sandbox_dir / "runs" / std::string{run_id};
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw Error("cannot create run directory " + dir.string() + ": " + ec.message());
    }
    return materialize_script(code, dir);
}

std::vector<EnvVarDescriptor> load_env_allowlist(const std::filesystem::path& file)
{
    std::ifstream in{file, std::ios::binary};
    if (!in) {
        return {};
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_env_descriptors(buf.str());
}

std::map<std::string, std::string> build_child_env(const std::vector<EnvVarDescriptor>& allowlist,
                                                   const RunnerConfig& cfg,
                                                   const std::map<std::string, std::string>* source)
{
    std::map<std::string, std::string> parent;
    if (source == nullptr) {
        for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
            std::string_view kv{*e};
            const auto eq = kv.find('=');
            if (eq != std::string_view::npos) {
                parent.emplace(std::string{kv.substr(0, eq)}, std::string{kv.substr(eq + 1)});
            }
        }
        source = &parent;
    }
    std::map<std::string, std::string> env;
    auto take = [&](const std::string& name) {
        if (const auto it = source->find(name); it != source->end()) {
            env[name] = it->second;
        }
    };
    for (const auto& name : cfg.baseline_env) {
        take(name);
    }
    for (const auto& var : allowlist) {
        take(var.name);
    }
    return env;
}

ExecutionReport run_script(const std::filesystem::path& file,
                           const std::vector<EnvVarDescriptor>& allowlist, const RunnerConfig& cfg,
                           const std::map<std::string, std::string>* env_source)
{
    std::error_code ec;
    if (!std::filesystem::is_regular_file(file, ec)) {
        return ExecutionReport::error("test file does not exist: " + file.string());
    }
    ProcessSpec spec;
    for (const auto& part : cfg.command) {
        std::string arg = part;
        if (const auto at = arg.find("{file}"); at != std::string::npos) {
            arg.replace(at, 6, file.string());
        }
        spec.argv.push_back(std::move(arg));
    }
    spec.cwd = cfg.cwd.empty() ? file.parent_path() : cfg.cwd;
    spec.env = build_child_env(allowlist, cfg, env_source);
    spec.timeout = std::chrono::duration_cast<std::chrono::milliseconds>(cfg.timeout);

    ProcessResult res;
    try {
        res = run_process(spec);
    } catch (const SpawnError& e) {
        return ExecutionReport::error(std::string{"runner could not be started: "} + e.what());
    }
    if (res.timed_out) {
        return ExecutionReport::error("timeout after " + std::to_string(cfg.timeout.count()) + " s",
                                      res.elapsed_seconds);
    }
    if (auto report = find_report(res.out)) {
        try {
            return report_from_json(*report, res.elapsed_seconds);
        } catch (const ReportFieldError& e) {
            spdlog::warn("runner report rejected: {}", e.what());
        }
    }
    std::string msg = tail(res.err, 16384);
    if (msg.empty()) {
        msg = tail(res.out, 16384);
    }
    if (msg.empty()) {
        msg = "runner exited with status " + std::to_string(res.exit_code) + " and produced no report";
    }
    return ExecutionReport::error(std::move(msg), res.elapsed_seconds);
}

} // namespace testgenie
