// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/error.hpp"
#include "testgenie/exec_orchestrator.hpp"
#include "testgenie/json_text.hpp"
#include "testgenie/llm_gateway.hpp"
#include "testgenie/output_parser.hpp"
#include "testgenie/prompt_forge.hpp"

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace testgenie {

enum class ErrorKind { Syntax, Semantic, NoTest, Permission, Defect };
enum class SemanticSub { Hallucination, ApiOutdated, Other };

std::string_view to_string(ErrorKind k);
std::string_view to_string(SemanticSub s);
/// Case-insensitive; spaces, '-' and '_' are ignored ("No Test" == "notest").
ErrorKind error_kind_from_string(std::string_view s);
SemanticSub semantic_sub_from_string(std::string_view s);

/// Triage label. The subcategory is present exactly when kind is Semantic.
struct ErrorLabel {
    ErrorKind kind = ErrorKind::Syntax;
    std::optional<SemanticSub> semantic_sub;

    /// Throws PreconditionError when the subcategory rule is broken.
    static ErrorLabel make(ErrorKind kind, std::optional<SemanticSub> sub = std::nullopt);

    Json to_json() const;
    static ErrorLabel from_json(const Json& j);

    bool operator==(const ErrorLabel&) const = default;
};

enum class ApiMode { Full, Rag };

std::string_view to_string(ApiMode m);
ApiMode api_mode_from_string(std::string_view s);

/// One generation attempt with its execution result and triage.
struct RunRecord {
    std::string task_id;
    std::size_t attempt_no = 1;
    /// 0 for the main refactoring chain; 1.. for independent tree branches.
    std::size_t branch = 0;
    std::optional<PromptLevel> prompt_level;
    std::optional<Generation> generation;
    std::string raw_output;
    std::optional<ExecutionReport> report;
    std::optional<ErrorLabel> label;
    std::optional<ErrorLabel> suggested_label;
    Usage usage;
    std::string service;
    ApiMode mode = ApiMode::Full;
    std::string model;
    /// Gateway or parse failure recorded instead of a generation.
    std::string note;

    bool has_code() const;

    Json to_json() const;
    static RunRecord from_json(const Json& j);

    bool operator==(const RunRecord&) const = default;
};

struct EvalTask {
    std::string task_id;
    std::size_t n = 0;
    std::size_t c = 0;
    std::optional<PromptLevel> level;

    bool operator==(const EvalTask&) const = default;
};

/// A failing or erroring run has no label yet.
class NeedsLabelError : public PreconditionError {
public:
    using PreconditionError::PreconditionError;
};

/// Valid when the run passed (RUN, failed = 0, total >= 1) or is labelled
/// Defect. Other labels and empty RUN suites are invalid. Any other
/// unlabelled run throws NeedsLabelError.
bool validity_of(const RunRecord& r);

/// Heuristic pre-fill for triage; never authoritative.
std::optional<ErrorLabel> suggest_label(const RunRecord& r);

/// 1 - C(n-c, k) / C(n, k), or 1 when n - c < k. Exact rational arithmetic
/// for n <= 1000, a floating product beyond.
double pass_at_k(std::size_t n, std::size_t c, std::size_t k);

/// Reduced numerator and denominator of pass_at_k as decimal strings (n <= 1000).
std::pair<std::string, std::string> pass_at_k_ratio(std::size_t n, std::size_t c, std::size_t k);

struct LevelMetrics {
    std::size_t tasks = 0;
    std::map<std::size_t, std::optional<double>> valid_at_k;
};

struct MetricsSummary {
    std::vector<std::size_t> ks;
    /// k -> mean pass@k over tasks with n >= k; empty when no task qualifies.
    std::map<std::size_t, std::optional<double>> valid_at_k;
    std::map<PromptLevel, LevelMetrics> per_level;
    std::size_t tasks = 0;
    std::size_t runs = 0;
    std::size_t valid_runs = 0;
    std::size_t test_cases = 0;
    std::size_t passed_cases = 0;
    double mean_input_tokens = 0.0;
    double mean_output_tokens = 0.0;
    double mean_elapsed_seconds = 0.0;
    std::optional<double> mean_cost;
    std::size_t costed_runs = 0;

    Json to_json() const;
    std::string to_text() const;
};

/// Groups runs by task_id; n = runs per task, c = valid runs. A task's level
/// is the first declared prompt level among its runs.
std::vector<EvalTask> tasks_from_runs(const std::vector<RunRecord>& runs);

using ProfileLookup = std::function<std::optional<ModelProfile>(const std::string&)>;

/// Built-in model profiles by name.
ProfileLookup builtin_profile_lookup();

MetricsSummary aggregate_metrics(const std::vector<EvalTask>& tasks, const std::vector<RunRecord>& runs,
                                 const std::vector<std::size_t>& ks,
                                 const ProfileLookup& profiles = builtin_profile_lookup());

/// Writes `<dir>/<task_id>/<attempt_no>.json`.
std::filesystem::path save_run(const std::filesystem::path& dir, const RunRecord& r);

/// Every `<dir>/*/*.json`, ordered by task_id then attempt_no.
std::vector<RunRecord> load_runs(const std::filesystem::path& dir);

/// Parses "1,2,3" into ks; throws PreconditionError on bad input.
std::vector<std::size_t> parse_ks(std::string_view text);

} // namespace testgenie
