// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"
#include "testgenie/json_text.hpp"
#include "testgenie/prompt_forge.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace testgenie {

enum class Outcome { Run, Error };

std::string_view to_string(Outcome o);
Outcome outcome_from_string(std::string_view s);

/// Normalised result of one runner invocation.
/// Run implies total == passed + failed; Error implies all counts are zero.
struct ExecutionReport {
    Outcome outcome = Outcome::Error;
    std::size_t total = 0;
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::vector<std::string> failure_messages;
    std::optional<Json> raw_report;
    double elapsed_seconds = 0.0;

    static ExecutionReport error(std::string message, double elapsed_seconds = 0.0);

    /// Failure messages joined for a refactor prompt; a short summary when there are none.
    std::string error_log() const;

    Json to_json() const;
    static ExecutionReport from_json(const Json& j);

    bool operator==(const ExecutionReport&) const = default;
};

/// A runner report lacks a required field.
class ReportFieldError : public Error {
public:
    using Error::Error;
};

struct ReportCounts {
    std::size_t total = 0;
    std::size_t passed = 0;
    std::size_t failed = 0;
    std::vector<std::string> failure_messages;

    bool operator==(const ReportCounts&) const = default;
};

/// Maps numTotalTests/numPassedTests/numFailedTests and the non-empty
/// testResults[*].message fields. Pending and todo tests are taken out of
/// the total so that total == passed + failed.
ReportCounts parse_report(const Json& raw);

/// Converts a runner report into an ExecutionReport. A report with no tests
/// whose suites failed to run (compile errors) is an Error outcome.
ExecutionReport report_from_json(const Json& raw, double elapsed_seconds);

inline constexpr std::string_view kScriptFileName = "generated.test.ts";

/// Writes `code` to `<sandbox_dir>/generated.test.ts` with LF line endings.
std::filesystem::path materialize_script(std::string_view code, const std::filesystem::path& sandbox_dir);

/// `.env.allowlist` lines `NAME: description`; a missing file is an empty list.
std::vector<EnvVarDescriptor> load_env_allowlist(const std::filesystem::path& file);

struct RunnerConfig {
    /// `{file}` is replaced by the script path.
    std::vector<std::string> command{"npx", "jest", "--json", "{file}"};
    std::chrono::seconds timeout{120};
    std::vector<std::string> baseline_env{"PATH", "HOME", "USERPROFILE", "NPM_CONFIG_CACHE",
                                          "npm_config_cache", "XDG_CACHE_HOME"};
    /// Working directory; the script's directory when empty.
    std::filesystem::path cwd;
};

/// Child environment: baseline names plus allowlisted names, valued from
/// `source` (this process's environment when null). Absent names are skipped.
std::map<std::string, std::string> build_child_env(const std::vector<EnvVarDescriptor>& allowlist,
                                                   const RunnerConfig& cfg,
                                                   const std::map<std::string, std::string>* source = nullptr);

/// Runs the test file and normalises the outcome. Never throws for runner
/// failures: spawn errors and timeouts become Error reports.
ExecutionReport run_script(const std::filesystem::path& file,
                           const std::vector<EnvVarDescriptor>& allowlist,
                           const RunnerConfig& cfg = {},
                           const std::map<std::string, std::string>* env_source = nullptr);

/// Creates `<sandbox_dir>/runs/<run_id>/` and materialises the script there,
/// so concurrent runs never share a file.
std::filesystem::path materialize_isolated(std::string_view code, const std::filesystem::path& sandbox_dir,
                                           std::string_view run_id);

} // namespace testgenie
