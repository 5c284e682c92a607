// SPDX-License-Identifier: Apache-2.0
#include "testgenie/evaluation.hpp"

#include <boost/multiprecision/cpp_int.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace testgenie {

namespace {

using boost::multiprecision::cpp_rational;

constexpr std::size_t kExactLimit = 1000;

std::string normalise_name(std::string_view s)
{
    std::string out;
    for (const char c : s) {
        if (c == ' ' || c == '-' || c == '_') {
            continue;
        }
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out;
}

void check_pass_args(std::size_t n, std::size_t c, std::size_t k)
{
    if (k < 1 || k > n) {
        throw PreconditionError("pass@k needs 1 <= k <= n (n=" + std::to_string(n) + ", k=" +
                                std::to_string(k) + ")");
    }
    if (c > n) {
        throw PreconditionError("pass@k needs c <= n (n=" + std::to_string(n) + ", c=" +
                                std::to_string(c) + ")");
    }
}

cpp_rational exact_pass(std::size_t n, std::size_t c, std::size_t k)
{
    if (n - c < k) {
        return cpp_rational{1};
    }
    // C(n-c, k) / C(n, k) = prod_{i<k} (n-c-i) / (n-i)
    cpp_rational miss{1};
    for (std::size_t i = 0; i < k; ++i) {
        miss *= cpp_rational{static_cast<long long>(n - c - i), static_cast<long long>(n - i)};
    }
    return cpp_rational{1} - miss;
}

Json generation_to_json(const Generation& g)
{
    Json j = Json::object();
    j["requirement_text"] = g.requirement_text;
    j["endpoints_text"] = g.endpoints_text;
    j["test_text"] = g.test_text;
    j["code"] = g.code ? Json(*g.code) : Json(nullptr);
    return j;
}

Generation generation_from_json(const Json& j)
{
    Generation g;
    g.requirement_text = j.value("requirement_text", "");
    g.endpoints_text = j.value("endpoints_text", "");
    g.test_text = j.value("test_text", "");
    if (const auto it = j.find("code"); it != j.end() && it->is_string()) {
        g.code = it->get<std::string>();
    }
    return g;
}

Json usage_to_json(const Usage& u)
{
    Json j = Json::object();
    j["input_tokens"] = u.input_tokens;
    j["output_tokens"] = u.output_tokens;
    j["elapsed_seconds"] = u.elapsed_seconds;
    j["provider_reported"] = u.provider_reported;
    return j;
}

Usage usage_from_json(const Json& j)
{
    Usage u;
    u.input_tokens = j.value("input_tokens", std::size_t{0});
    u.output_tokens = j.value("output_tokens", std::size_t{0});
    u.elapsed_seconds = j.value("elapsed_seconds", 0.0);
    u.provider_reported = j.value("provider_reported", false);
    return u;
}

template <typename T, typename F>
Json optional_json(const std::optional<T>& v, F&& f)
{
    return v ? f(*v) : Json(nullptr);
}

std::string fixed(double v, int digits)
{
    std::ostringstream s;
    s << std::fixed << std::setprecision(digits) << v;
    return s.str();
}

} // namespace

std::string_view to_string(ErrorKind k)
{
    switch (k) {
    case ErrorKind::Syntax: return "Syntax";
    case ErrorKind::Semantic: return "Semantic";
    case ErrorKind::NoTest: return "NoTest";
    case ErrorKind::Permission: return "Permission";
    case ErrorKind::Defect: return "Defect";
    }
    return "?";
}

std::string_view to_string(SemanticSub s)
{
    switch (s) {
    case SemanticSub::Hallucination: return "Hallucination";
    case SemanticSub::ApiOutdated: return "ApiOutdated";
    case SemanticSub::Other: return "Other";
    }
    return "?";
}

ErrorKind error_kind_from_string(std::string_view s)
{
    const auto n = normalise_name(s);
    for (const auto k : {ErrorKind::Syntax, ErrorKind::Semantic, ErrorKind::NoTest,
                         ErrorKind::Permission, ErrorKind::Defect}) {
        if (n == normalise_name(to_string(k))) {
            return k;
        }
    }
    throw PreconditionError("unknown error label: " + std::string{s});
}

SemanticSub semantic_sub_from_string(std::string_view s)
{
    const auto n = normalise_name(s);
    for (const auto k : {SemanticSub::Hallucination, SemanticSub::ApiOutdated, SemanticSub::Other}) {
        if (n == normalise_name(to_string(k))) {
            return k;
        }
    }
    throw PreconditionError("unknown semantic subcategory: " + std::string{s});
}

ErrorLabel ErrorLabel::make(ErrorKind kind, std::optional<SemanticSub> sub)
{
    if ((kind == ErrorKind::Semantic) != sub.has_value()) {
        throw PreconditionError(kind == ErrorKind::Semantic
                                    ? "a Semantic label needs a subcategory"
                                    : "only Semantic labels take a subcategory");
    }
    return ErrorLabel{kind, sub};
}

Json ErrorLabel::to_json() const
{
    Json j = Json::object();
    j["kind"] = to_string(kind);
    j["semantic_sub"] = semantic_sub ? Json(to_string(*semantic_sub)) : Json(nullptr);
    return j;
}

ErrorLabel ErrorLabel::from_json(const Json& j)
{
    std::optional<SemanticSub> sub;
    if (const auto it = j.find("semantic_sub"); it != j.end() && it->is_string()) {
        sub = semantic_sub_from_string(it->get<std::string>());
    }
    return make(error_kind_from_string(j.at("kind").get<std::string>()), sub);
}

std::string_view to_string(ApiMode m)
{
    return m == ApiMode::Full ? "Full" : "RAG";
}

ApiMode api_mode_from_string(std::string_view s)
{
    const auto n = normalise_name(s);
    if (n == "full") {
        return ApiMode::Full;
    }
    if (n == "rag") {
        return ApiMode::Rag;
    }
    throw PreconditionError("unknown mode: " + std::string{s});
}

bool RunRecord::has_code() const
{
    return generation && generation->code && !generation->code->empty();
}

Json RunRecord::to_json() const
{
    Json j = Json::object();
    j["task_id"] = task_id;
    j["attempt_no"] = attempt_no;
    j["branch"] = branch;
    j["prompt_level"] = prompt_level ? Json(to_string(*prompt_level)) : Json(nullptr);
    j["service"] = service;
    j["mode"] = to_string(mode);
    j["model"] = model;
    j["generation"] = optional_json(generation, generation_to_json);
    j["raw_output"] = raw_output;
    j["report"] = optional_json(report, [](const ExecutionReport& r) { return r.to_json(); });
    j["label"] = optional_json(label, [](const ErrorLabel& l) { return l.to_json(); });
    j["suggested_label"] = optional_json(suggested_label, [](const ErrorLabel& l) { return l.to_json(); });
    j["usage"] = usage_to_json(usage);
    j["note"] = note;
    return j;
}

RunRecord RunRecord::from_json(const Json& j)
{
    RunRecord r;
    try {
        r.task_id = j.at("task_id").get<std::string>();
        r.attempt_no = j.at("attempt_no").get<std::size_t>();
        r.branch = j.value("branch", std::size_t{0});
        if (const auto it = j.find("prompt_level"); it != j.end() && it->is_string()) {
            r.prompt_level = prompt_level_from_string(it->get<std::string>());
        }
        r.service = j.value("service", "");
        r.mode = api_mode_from_string(j.value("mode", "Full"));
        r.model = j.value("model", "");
        if (const auto it = j.find("generation"); it != j.end() && it->is_object()) {
            r.generation = generation_from_json(*it);
        }
        r.raw_output = j.value("raw_output", "");
        if (const auto it = j.find("report"); it != j.end() && it->is_object()) {
            r.report = ExecutionReport::from_json(*it);
        }
        if (const auto it = j.find("label"); it != j.end() && it->is_object()) {
            r.label = ErrorLabel::from_json(*it);
        }
        if (const auto it = j.find("suggested_label"); it != j.end() && it->is_object()) {
            r.suggested_label = ErrorLabel::from_json(*it);
        }
        if (const auto it = j.find("usage"); it != j.end() && it->is_object()) {
            r.usage = usage_from_json(*it);
        }
        r.note = j.value("note", "");
    } catch (const Json::exception& e) {
        throw DocumentParseError(std::string{"malformed run record: "} + e.what());
    }
    if (r.attempt_no == 0) {
        throw DocumentParseError("run record attempt_no must be 1-based");
    }
    return r;
}

bool validity_of(const RunRecord& r)
{
    if (r.report && r.report->outcome == Outcome::Run && r.report->failed == 0 && r.report->total >= 1) {
        return true;
    }
    if (r.label) {
        return r.label->kind == ErrorKind::Defect;
    }
    if (r.report && r.report->outcome == Outcome::Run && r.report->total == 0) {
        return false;
    }
    throw NeedsLabelError("run " + r.task_id + "#" + std::to_string(r.attempt_no) +
                          " did not pass and has no label");
}

std::optional<ErrorLabel> suggest_label(const RunRecord& r)
{
    const bool passing = r.report && r.report->outcome == Outcome::Run && r.report->failed == 0 &&
                         r.report->total >= 1;
    if (passing) {
        return std::nullopt;
    }
    if (!r.has_code()) {
        return ErrorLabel::make(ErrorKind::NoTest);
    }
    if (!r.report) {
        return std::nullopt;
    }
    if (r.report->outcome == Outcome::Error) {
        return ErrorLabel::make(ErrorKind::Syntax);
    }
    if (r.report->total == 0) {
        return ErrorLabel::make(ErrorKind::NoTest);
    }
    static const std::regex forbidden{R"(\b403\b)"};
    for (const auto& m : r.report->failure_messages) {
        if (std::regex_search(m, forbidden)) {
            return ErrorLabel::make(ErrorKind::Permission);
        }
    }
    return std::nullopt;
}

double pass_at_k(std::size_t n, std::size_t c, std::size_t k)
{
    check_pass_args(n, c, k);
    if (n - c < k) {
        return 1.0;
    }
    if (n <= kExactLimit) {
        return static_cast<double>(exact_pass(n, c, k));
    }
    double miss = 1.0;
    for (std::size_t i = 0; i < k; ++i) {
        miss *= static_cast<double>(n - c - i) / static_cast<double>(n - i);
    }
    return 1.0 - miss;
}

std::pair<std::string, std::string> pass_at_k_ratio(std::size_t n, std::size_t c, std::size_t k)
{
    check_pass_args(n, c, k);
    if (n > kExactLimit) {
        throw PreconditionError("exact pass@k is limited to n <= 1000");
    }
    const cpp_rational v = exact_pass(n, c, k);
    return {boost::multiprecision::numerator(v).str(), boost::multiprecision::denominator(v).str()};
}

Json MetricsSummary::to_json() const
{
    auto rates = [](const std::map<std::size_t, std::optional<double>>& m) {
        Json j = Json::object();
        for (const auto& [k, v] : m) {
            j[std::to_string(k)] = v ? Json(*v) : Json(nullptr);
        }
        return j;
    };
    Json j = Json::object();
    j["ks"] = ks;
    j["valid_at_k"] = rates(valid_at_k);
    Json levels = Json::object();
    for (const auto& [level, lm] : per_level) {
        Json lj = Json::object();
        lj["tasks"] = lm.tasks;
        lj["valid_at_k"] = rates(lm.valid_at_k);
        levels[std::string{to_string(level)}] = std::move(lj);
    }
    j["per_level"] = std::move(levels);
    j["tasks"] = tasks;
    j["runs"] = runs;
    j["valid_runs"] = valid_runs;
    j["test_cases"] = test_cases;
    j["passed_cases"] = passed_cases;
    j["mean_input_tokens"] = mean_input_tokens;
    j["mean_output_tokens"] = mean_output_tokens;
    j["mean_elapsed_seconds"] = mean_elapsed_seconds;
    j["mean_cost"] = mean_cost ? Json(*mean_cost) : Json(nullptr);
    j["costed_runs"] = costed_runs;
    return j;
}

std::string MetricsSummary::to_text() const
{
    auto cell = [](const std::optional<double>& v) { return v ? fixed(*v, 4) : std::string{"-"}; };
    std::ostringstream s;
    s << std::left << std::setw(10) << "scope" << std::setw(7) << "tasks";
    for (const auto k : ks) {
        s << std::setw(10) << ("valid@" + std::to_string(k));
    }
    s << '\n';
    s << std::setw(10) << "all" << std::setw(7) << tasks;
    for (const auto k : ks) {
        s << std::setw(10) << cell(valid_at_k.at(k));
    }
    s << '\n';
    for (const auto& [level, lm] : per_level) {
        s << std::setw(10) << to_string(level) << std::setw(7) << lm.tasks;
        for (const auto k : ks) {
            s << std::setw(10) << cell(lm.valid_at_k.at(k));
        }
        s << '\n';
    }
    s << "runs " << runs << ", valid " << valid_runs << ", test cases " << test_cases << " (passed "
      << passed_cases << ")\n";
    s << "mean tokens in " << fixed(mean_input_tokens, 1) << ", out " << fixed(mean_output_tokens, 1)
      << ", mean time " << fixed(mean_elapsed_seconds, 2) << " s";
    if (mean_cost) {
        s << ", mean cost " << fixed(*mean_cost, 4) << " EUR over " << costed_runs << " runs";
    }
    s << '\n';
    return s.str();
}

std::vector<EvalTask> tasks_from_runs(const std::vector<RunRecord>& runs)
{
    std::vector<EvalTask> tasks;
    std::map<std::string, std::size_t> index;
    for (const auto& r : runs) {
        auto [it, inserted] = index.emplace(r.task_id, tasks.size());
        if (inserted) {
            tasks.push_back(EvalTask{r.task_id, 0, 0, std::nullopt});
        }
        EvalTask& t = tasks[it->second];
        ++t.n;
        if (validity_of(r)) {
            ++t.c;
        }
        if (!t.level && r.prompt_level) {
            t.level = r.prompt_level;
        }
    }
    return tasks;
}

ProfileLookup builtin_profile_lookup()
{
    return [](const std::string& name) -> std::optional<ModelProfile> {
        for (const auto& p : builtin_model_profiles()) {
            if (p.name == name) {
                return p;
            }
        }
        return std::nullopt;
    };
}

MetricsSummary aggregate_metrics(const std::vector<EvalTask>& tasks, const std::vector<RunRecord>& runs,
                                 const std::vector<std::size_t>& ks, const ProfileLookup& profiles)
{
    if (ks.empty()) {
        throw PreconditionError("metrics need at least one k");
    }
    std::map<std::string, std::size_t> run_counts;
    for (const auto& r : runs) {
        ++run_counts[r.task_id];
    }
    std::set<std::string> task_ids;
    for (const auto& t : tasks) {
        if (t.c > t.n) {
            throw PreconditionError("task " + t.task_id + " has c > n");
        }
        if (!task_ids.insert(t.task_id).second) {
            throw PreconditionError("task " + t.task_id + " listed twice");
        }
        const auto it = run_counts.find(t.task_id);
        const std::size_t have = it == run_counts.end() ? 0 : it->second;
        if (have != t.n) {
            throw PreconditionError("task " + t.task_id + " has n=" + std::to_string(t.n) + " but " +
                                    std::to_string(have) + " runs");
        }
    }
    for (const auto& [id, count] : run_counts) {
        if (!task_ids.contains(id)) {
            throw PreconditionError("run for unknown task " + id);
        }
    }

    auto mean_at = [](const std::vector<const EvalTask*>& group, std::size_t k) -> std::optional<double> {
        double sum = 0.0;
        std::size_t used = 0;
        for (const auto* t : group) {
            if (t->n >= k) {
                sum += pass_at_k(t->n, t->c, k);
                ++used;
            }
        }
        if (used == 0) {
            return std::nullopt;
        }
        return sum / static_cast<double>(used);
    };

    MetricsSummary m;
    m.ks = ks;
    m.tasks = tasks.size();
    std::vector<const EvalTask*> all;
    std::map<PromptLevel, std::vector<const EvalTask*>> by_level;
    for (const auto& t : tasks) {
        all.push_back(&t);
        if (t.level) {
            by_level[*t.level].push_back(&t);
        }
        m.valid_runs += t.c;
    }
    for (const auto k : ks) {
        if (k == 0) {
            throw PreconditionError("k must be at least 1");
        }
        m.valid_at_k[k] = mean_at(all, k);
    }
    for (const auto& [level, group] : by_level) {
        LevelMetrics lm;
        lm.tasks = group.size();
        for (const auto k : ks) {
            lm.valid_at_k[k] = mean_at(group, k);
        }
        m.per_level[level] = std::move(lm);
    }

    m.runs = runs.size();
    double cost_sum = 0.0;
    for (const auto& r : runs) {
        if (r.report) {
            m.test_cases += r.report->total;
            m.passed_cases += r.report->passed;
        }
        m.mean_input_tokens += static_cast<double>(r.usage.input_tokens);
        m.mean_output_tokens += static_cast<double>(r.usage.output_tokens);
        m.mean_elapsed_seconds += r.usage.elapsed_seconds;
        if (const auto p = profiles ? profiles(r.model) : std::nullopt) {
            cost_sum += estimate_cost(r.usage, *p);
            ++m.costed_runs;
        }
    }
    if (!runs.empty()) {
        const auto n = static_cast<double>(runs.size());
        m.mean_input_tokens /= n;
        m.mean_output_tokens /= n;
        m.mean_elapsed_seconds /= n;
    }
    if (m.costed_runs > 0) {
        m.mean_cost = cost_sum / static_cast<double>(m.costed_runs);
    }
    return m;
}

std::filesystem::path save_run(const std::filesystem::path& dir, const RunRecord& r)
{
    if (r.task_id.empty() || r.task_id.find('/') != std::string::npos || r.task_id == "." ||
        r.task_id == "..") {
        throw PreconditionError("task_id is not usable as a directory name: '" + r.task_id + "'");
    }
    const auto task_dir = dir / r.task_id;
    std::filesystem::create_directories(task_dir);
    const auto file = task_dir / (std::to_string(r.attempt_no) + ".json");
    const auto tmp = task_dir / (std::to_string(r.attempt_no) + ".json.tmp");
    {
        std::ofstream out{tmp, std::ios::binary | std::ios::trunc};
        out << dump_pretty(r.to_json()) << '\n';
        if (!out) {
            throw Error("cannot write " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, file);
    return file;
}

std::vector<RunRecord> load_runs(const std::filesystem::path& dir)
{
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) {
        throw FetchError("run log directory does not exist: " + dir.string());
    }
    std::vector<RunRecord> runs;
    for (const auto& task : std::filesystem::directory_iterator{dir}) {
        if (!task.is_directory()) {
            continue;
        }
        for (const auto& entry : std::filesystem::directory_iterator{task.path()}) {
            if (entry.path().extension() != ".json") {
                continue;
            }
            std::ifstream in{entry.path(), std::ios::binary};
            std::ostringstream buf;
            buf << in.rdbuf();
            Json j;
            try {
                j = Json::parse(buf.str());
            } catch (const Json::parse_error& e) {
                throw DocumentParseError(entry.path().string() + ": " + e.what());
            }
            runs.push_back(RunRecord::from_json(j));
        }
    }
    std::sort(runs.begin(), runs.end(), [](const RunRecord& a, const RunRecord& b) {
        return std::tie(a.task_id, a.attempt_no) < std::tie(b.task_id, b.attempt_no);
    });
    return runs;
}

std::vector<std::size_t> parse_ks(std::string_view text)
{
    std::vector<std::size_t> ks;
    std::string item;
    std::istringstream in{std::string{text}};
    while (std::getline(in, item, ',')) {
        std::size_t used = 0;
        unsigned long v = 0;
        try {
            v = std::stoul(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size() || v == 0) {
            throw PreconditionError("bad k value '" + item + "' in '" + std::string{text} + "'");
        }
        if (std::find(ks.begin(), ks.end(), v) == ks.end()) {
            ks.push_back(v);
        }
    }
    if (ks.empty()) {
        throw PreconditionError("no k values given");
    }
    return ks;
}

} // namespace testgenie
