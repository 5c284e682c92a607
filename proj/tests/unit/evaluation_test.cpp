// SPDX-License-Identifier: Apache-2.0
#include "testgenie/evaluation.hpp"

#include "pass_at_k_oracle.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace testgenie;
namespace tt = testgenie::testing;

namespace {

ExecutionReport run_report(std::size_t total, std::size_t passed, std::size_t failed,
                           std::vector<std::string> messages = {}) {
    ExecutionReport r;
    r.outcome = Outcome::Run;
    r.total = total;
    r.passed = passed;
    r.failed = failed;
    r.failure_messages = std::move(messages);
    return r;
}

RunRecord record(std::optional<ExecutionReport> report, std::optional<ErrorLabel> label = std::nullopt,
                 bool code = true) {
    RunRecord r;
    r.task_id = "t";
    r.attempt_no = 1;
    if (code) {
        r.generation = Generation{"r", "e", "```\nx\n```", "x"};
    } else {
        r.generation = Generation{"r", "e", "none", std::nullopt};
    }
    r.report = std::move(report);
    r.label = label;
    return r;
}

} // namespace

TEST(Labels, Parsing) {
    EXPECT_EQ(error_kind_from_string("No Test"), ErrorKind::NoTest);
    EXPECT_EQ(error_kind_from_string("no_test"), ErrorKind::NoTest);
    EXPECT_EQ(error_kind_from_string("DEFECT"), ErrorKind::Defect);
    EXPECT_EQ(semantic_sub_from_string("api-outdated"), SemanticSub::ApiOutdated);
    EXPECT_THROW(error_kind_from_string("flaky"), PreconditionError);
    EXPECT_THROW(semantic_sub_from_string("typo"), PreconditionError);
}

TEST(Labels, SubcategoryRule) {
    EXPECT_NO_THROW(ErrorLabel::make(ErrorKind::Semantic, SemanticSub::Hallucination));
    EXPECT_THROW(ErrorLabel::make(ErrorKind::Semantic), PreconditionError);
    EXPECT_THROW(ErrorLabel::make(ErrorKind::Syntax, SemanticSub::Other), PreconditionError);
    const auto l = ErrorLabel::make(ErrorKind::Semantic, SemanticSub::ApiOutdated);
    EXPECT_EQ(ErrorLabel::from_json(l.to_json()), l);
    EXPECT_THROW(ErrorLabel::from_json(Json::parse(R"({"kind": "Semantic"})")), PreconditionError);
}

TEST(ApiMode, Strings) {
    EXPECT_EQ(to_string(ApiMode::Rag), "RAG");
    EXPECT_EQ(api_mode_from_string("rag"), ApiMode::Rag);
    EXPECT_EQ(api_mode_from_string("Full"), ApiMode::Full);
    EXPECT_THROW(api_mode_from_string("partial"), PreconditionError);
}

TEST(RunRecord, JsonRoundTrip) {
    RunRecord r = record(run_report(2, 1, 1, {"m"}), ErrorLabel::make(ErrorKind::Defect));
    r.task_id = "task-01";
    r.attempt_no = 3;
    r.branch = 2;
    r.prompt_level = PromptLevel::L2;
    r.raw_output = "REQUIREMENT:\n...";
    r.suggested_label = ErrorLabel::make(ErrorKind::Permission);
    r.usage = Usage{10, 20, 1.25, true};
    r.service = "catfact";
    r.mode = ApiMode::Rag;
    r.model = "gpt-4-turbo";
    r.note = "n";
    EXPECT_EQ(RunRecord::from_json(r.to_json()), r);
    EXPECT_TRUE(r.has_code());
    EXPECT_FALSE(record(std::nullopt, std::nullopt, false).has_code());
}

TEST(RunRecord, RejectsBadRecords) {
    Json j = record(std::nullopt).to_json();
    j["attempt_no"] = 0;
    EXPECT_THROW(RunRecord::from_json(j), DocumentParseError);
    EXPECT_THROW(RunRecord::from_json(Json::parse(R"({"attempt_no": 1})")), DocumentParseError);
}

TEST(Validity, Rules) {
    EXPECT_TRUE(validity_of(record(run_report(3, 3, 0))));
    EXPECT_TRUE(validity_of(record(run_report(2, 1, 1), ErrorLabel::make(ErrorKind::Defect))));
    EXPECT_FALSE(validity_of(record(run_report(2, 1, 1), ErrorLabel::make(ErrorKind::Permission))));
    EXPECT_FALSE(validity_of(record(ExecutionReport::error("x"), ErrorLabel::make(ErrorKind::Syntax))));
    EXPECT_FALSE(validity_of(record(run_report(0, 0, 0))));
    EXPECT_THROW(validity_of(record(run_report(2, 1, 1))), NeedsLabelError);
    EXPECT_THROW(validity_of(record(ExecutionReport::error("x"))), NeedsLabelError);
    EXPECT_THROW(validity_of(record(std::nullopt)), NeedsLabelError);
    // A passing run stays valid whatever label an operator attached.
    EXPECT_TRUE(validity_of(record(run_report(1, 1, 0), ErrorLabel::make(ErrorKind::Syntax))));
}

TEST(Suggest, Heuristics) {
    EXPECT_FALSE(suggest_label(record(run_report(2, 2, 0))));
    EXPECT_EQ(suggest_label(record(std::nullopt, std::nullopt, false))->kind, ErrorKind::NoTest);
    EXPECT_FALSE(suggest_label(record(std::nullopt)));
    EXPECT_EQ(suggest_label(record(ExecutionReport::error("TS1005")))->kind, ErrorKind::Syntax);
    EXPECT_EQ(suggest_label(record(run_report(0, 0, 0)))->kind, ErrorKind::NoTest);
    EXPECT_EQ(suggest_label(record(run_report(1, 0, 1, {"Request failed with status code 403"})))->kind,
              ErrorKind::Permission);
    EXPECT_FALSE(suggest_label(record(run_report(1, 0, 1, {"expected 4030 got 1"}))));
}

TEST(PassAtK, ArgumentChecks) {
    EXPECT_THROW(pass_at_k(3, 1, 0), PreconditionError);
    EXPECT_THROW(pass_at_k(3, 1, 4), PreconditionError);
    EXPECT_THROW(pass_at_k(3, 4, 1), PreconditionError);
}

TEST(PassAtK, MatchesEnumerationExactly) {
    for (unsigned n = 1; n <= 10; ++n) {
        for (unsigned c = 0; c <= n; ++c) {
            for (unsigned k = 1; k <= n; ++k) {
                const auto [num, den] = tt::brute_force_pass_at_k(n, c, k);
                const auto [rn, rd] = pass_at_k_ratio(n, c, k);
                EXPECT_EQ(rn, std::to_string(num)) << n << " " << c << " " << k;
                EXPECT_EQ(rd, std::to_string(den)) << n << " " << c << " " << k;
                EXPECT_DOUBLE_EQ(pass_at_k(n, c, k), static_cast<double>(num) / static_cast<double>(den));
            }
        }
    }
}

TEST(PassAtK, KnownValues) {
    EXPECT_EQ(pass_at_k(3, 0, 3), 0.0);
    EXPECT_EQ(pass_at_k(3, 1, 3), 1.0);
    EXPECT_EQ(pass_at_k_ratio(3, 2, 1), (std::pair<std::string, std::string>{"2", "3"}));
    EXPECT_EQ(pass_at_k_ratio(10, 3, 2), (std::pair<std::string, std::string>{"8", "15"}));
}

TEST(PassAtK, LargeN) {
    // 1 - C(1000, 5)/C(1200, 5)
    double miss = 1.0;
    for (int i = 0; i < 5; ++i) {
        miss *= (1000.0 - i) / (1200.0 - i);
    }
    EXPECT_NEAR(pass_at_k(1200, 200, 5), 1.0 - miss, 1e-12);
    EXPECT_NEAR(pass_at_k(1000, 200, 5), 1.0 - [] {
        double m = 1.0;
        for (int i = 0; i < 5; ++i) {
            m *= (800.0 - i) / (1000.0 - i);
        }
        return m;
    }(), 1e-12);
    EXPECT_THROW(pass_at_k_ratio(1001, 1, 1), PreconditionError);
}

TEST(ParseKs, Values) {
    EXPECT_EQ(parse_ks("1,3,1,2"), (std::vector<std::size_t>{1, 3, 2}));
    EXPECT_THROW(parse_ks(""), PreconditionError);
    EXPECT_THROW(parse_ks("0"), PreconditionError);
    EXPECT_THROW(parse_ks("1,x"), PreconditionError);
    EXPECT_THROW(parse_ks("2.5"), PreconditionError);
}

TEST(Tasks, FromRuns) {
    std::vector<RunRecord> runs;
    for (int i = 0; i < 3; ++i) {
        auto r = record(run_report(1, i == 0 ? 1 : 0, i == 0 ? 0 : 1), i == 0 ? std::nullopt : std::optional{ErrorLabel::make(ErrorKind::Syntax)});
        r.task_id = "a";
        r.attempt_no = static_cast<std::size_t>(i + 1);
        if (i == 1) {
            r.prompt_level = PromptLevel::L3;
        }
        runs.push_back(r);
    }
    const auto tasks = tasks_from_runs(runs);
    ASSERT_EQ(tasks.size(), 1U);
    EXPECT_EQ(tasks[0], (EvalTask{"a", 3, 1, PromptLevel::L3}));
}

TEST(Aggregate, Validation) {
    std::vector<RunRecord> runs{record(run_report(1, 1, 0))};
    EXPECT_THROW(aggregate_metrics({EvalTask{"t", 2, 1, {}}}, runs, {1}), PreconditionError);
    EXPECT_THROW(aggregate_metrics({EvalTask{"t", 1, 2, {}}}, runs, {1}), PreconditionError);
    EXPECT_THROW(aggregate_metrics({EvalTask{"t", 1, 1, {}}}, runs, {}), PreconditionError);
    EXPECT_THROW(aggregate_metrics({}, runs, {1}), PreconditionError);
}

TEST(Aggregate, KAboveNIsSkipped) {
    auto a = record(run_report(1, 1, 0));
    a.task_id = "a";
    auto b = record(run_report(1, 0, 1), ErrorLabel::make(ErrorKind::Syntax));
    b.task_id = "b";
    auto b2 = b;
    b2.attempt_no = 2;
    const std::vector<RunRecord> runs{a, b, b2};
    const auto m = aggregate_metrics(tasks_from_runs(runs), runs, {1, 2, 3});
    EXPECT_DOUBLE_EQ(*m.valid_at_k.at(1), 0.5);
    EXPECT_DOUBLE_EQ(*m.valid_at_k.at(2), 0.0);
    EXPECT_FALSE(m.valid_at_k.at(3));
    EXPECT_NE(m.to_text().find("valid@3"), std::string::npos);
    EXPECT_TRUE(m.to_json()["valid_at_k"]["3"].is_null());
}

TEST(Aggregate, CostOnlyForKnownModels) {
    auto a = record(run_report(1, 1, 0));
    a.model = "gpt-4-turbo";
    a.usage = Usage{1000, 1000, 2.0, true};
    auto b = a;
    b.attempt_no = 2;
    b.model = "local-model";
    const std::vector<RunRecord> runs{a, b};
    const auto m = aggregate_metrics(tasks_from_runs(runs), runs, {1});
    EXPECT_EQ(m.costed_runs, 1U);
    EXPECT_NEAR(*m.mean_cost, 0.038, 1e-12);
    EXPECT_DOUBLE_EQ(m.mean_input_tokens, 1000.0);
}

TEST(RunLog, FixtureMetrics) {
    const auto runs = load_runs(tt::fixtures() / "runs");
    ASSERT_EQ(runs.size(), 75U);
    EXPECT_EQ(runs.front().task_id, "task-01");
    EXPECT_EQ(runs.back().attempt_no, 3U);
    const auto tasks = tasks_from_runs(runs);
    ASSERT_EQ(tasks.size(), 25U);
    std::size_t sum_c = 0;
    std::size_t with_valid = 0;
    for (const auto& t : tasks) {
        sum_c += t.c;
        with_valid += t.c > 0 ? 1 : 0;
    }
    EXPECT_EQ(sum_c, 43U);
    EXPECT_EQ(with_valid, 20U);

    const auto m = aggregate_metrics(tasks, runs, {1, 2, 3});
    EXPECT_NEAR(*m.valid_at_k.at(1), 43.0 / 75.0, 1e-12);
    EXPECT_NEAR(*m.valid_at_k.at(2), 0.8, 1e-12);
    EXPECT_NEAR(*m.valid_at_k.at(3), 0.8, 1e-12);
    EXPECT_NEAR(*m.per_level.at(PromptLevel::L1).valid_at_k.at(1), 21.0 / 27.0, 1e-12);
    EXPECT_NEAR(*m.per_level.at(PromptLevel::L2).valid_at_k.at(1), 16.0 / 24.0, 1e-12);
    EXPECT_NEAR(*m.per_level.at(PromptLevel::L3).valid_at_k.at(1), 6.0 / 24.0, 1e-12);
    EXPECT_DOUBLE_EQ(m.mean_input_tokens, 35289.0);
    EXPECT_DOUBLE_EQ(m.mean_output_tokens, 698.0);
    EXPECT_EQ(std::lround(*m.mean_cost * 100), 37);
    EXPECT_EQ(m.valid_runs, 43U);
}

TEST(RunLog, SaveLoadRoundTrip) {
    tt::TempDir dir;
    auto r = record(run_report(2, 2, 0));
    r.task_id = "task-x";
    r.attempt_no = 2;
    const auto file = save_run(dir.path(), r);
    EXPECT_EQ(file, dir.path() / "task-x" / "2.json");
    const auto back = load_runs(dir.path());
    ASSERT_EQ(back.size(), 1U);
    EXPECT_EQ(back[0], r);
    r.task_id = "../escape";
    EXPECT_THROW(save_run(dir.path(), r), PreconditionError);
    EXPECT_THROW(load_runs(dir / "missing"), FetchError);
}
