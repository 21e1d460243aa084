#include <gtest/gtest.h>

#include "ehrq/errors.hpp"
#include "ehrq/pipeline.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

class PipelineTest : public ::testing::Test {
protected:
    SqlExecutor executor{testing::fixture_db()};
    OfflineTextBackend text;
    HashedTrigramEmbedder embedder;
    ExemplarIndex index{load_exemplars(default_exemplars_path()), embedder};

    PipelineDeps deps(LlmBackend& llm, int k_max = 3) {
        PipelineDeps d;
        d.executor = &executor;
        d.index = &index;
        d.embedder = &embedder;
        d.lexicon = &testing::lexicon();
        d.llm = &llm;
        d.text = &text;
        d.k_max = k_max;
        return d;
    }
};

TEST_F(PipelineTest, AlwaysFailingBackendExhausts) {
    ScriptedBackend llm({"```sql\nselect nope from patients\n```"});
    const auto r = run("How many patients are there?", deps(llm));
    EXPECT_EQ(r.trace.attempts.size(), 3u);
    EXPECT_EQ(r.trace.final_status, FinalStatus::exhausted);
    EXPECT_EQ(r.answer, kSentinel);
    EXPECT_FALSE(r.trace.attempts[0].repair_prompt);
    ASSERT_TRUE(r.trace.attempts[2].repair_prompt);
    EXPECT_EQ(prompt_section(*r.trace.attempts[2].repair_prompt, kMarkerFailedQuery), "select nope from patients");
    EXPECT_EQ(llm.calls(), 3u);
}

TEST_F(PipelineTest, FailOnceThenAnswer) {
    ScriptedBackend llm({"select nope from patients", "select count(*) from patients"});
    const auto r = run("How many patients are there?", deps(llm));
    EXPECT_EQ(r.trace.attempts.size(), 2u);
    EXPECT_EQ(r.trace.final_status, FinalStatus::answered);
    EXPECT_EQ(r.answer, std::to_string(testing::fixture_db().table("patients").rows.size()));
    EXPECT_EQ(r.trace.attempts[0].outcome.error->kind, ErrorKind::unknown_column);
}

TEST_F(PipelineTest, UnparseableOutputIsARepairableFailure) {
    ScriptedBackend llm({"I think you should count the patients.", "select count(*) from patients"});
    const auto r = run("How many patients are there?", deps(llm));
    ASSERT_EQ(r.trace.attempts.size(), 2u);
    EXPECT_EQ(r.trace.attempts[0].outcome.error->kind, ErrorKind::parse);
    EXPECT_EQ(r.trace.final_status, FinalStatus::answered);
}

TEST_F(PipelineTest, KMaxOneStopsAfterOneAttempt) {
    ScriptedBackend llm({"select nope from patients"});
    const auto r = run("q", deps(llm, 1));
    EXPECT_EQ(r.trace.attempts.size(), 1u);
    EXPECT_EQ(r.trace.final_status, FinalStatus::exhausted);
}

TEST_F(PipelineTest, BackendErrorStopsTheLoop) {
    ScriptedBackend llm({"select nope from patients", "!error"});
    const auto r = run("q", deps(llm));
    EXPECT_EQ(r.trace.final_status, FinalStatus::backend_error);
    EXPECT_EQ(r.trace.attempts.size(), 1u);
    EXPECT_EQ(r.answer, "");
    EXPECT_FALSE(r.trace.backend_error.empty());
}

TEST_F(PipelineTest, EmptyResultIsUnanswerable) {
    ScriptedBackend llm({"select gender from patients where subject_id = -1"});
    const auto r = run("What is the gender of patient -1?", deps(llm));
    EXPECT_EQ(r.answer, kSentinel);
    EXPECT_EQ(r.trace.final_status, FinalStatus::unanswerable);
    EXPECT_EQ(r.trace.attempts.size(), 1u);
}

TEST_F(PipelineTest, OfflineBackendAnswersFixtureQuestion) {
    TemplateGroundedBackend llm(testing::bank(), testing::lexicon());
    const auto id = testing::single_admission_patient();
    const auto r = run("Count the admission num of patient " + std::to_string(id) + ".", deps(llm));
    EXPECT_EQ(r.answer, "1");
    EXPECT_EQ(r.trace.attempts.size(), 1u);
    EXPECT_EQ(r.trace.final_status, FinalStatus::answered);
}

TEST_F(PipelineTest, OfflineBackendResolvesSynonyms) {
    TemplateGroundedBackend llm(testing::bank(), testing::lexicon());
    const auto& t = testing::bank().get("T01");
    const auto m = llm.match("How many hospital admissions does patient 42 have?");
    ASSERT_TRUE(m);
    EXPECT_EQ(m->tmpl, &t);
    EXPECT_EQ(m->bindings.at("subject_id"), "42");
}

TEST_F(PipelineTest, StagesArriveInOrder) {
    ScriptedBackend llm({"select nope from patients", "select 1"});
    std::vector<std::string> stages;
    run("q", deps(llm), [&](std::string_view s, const nlohmann::json&) { stages.emplace_back(s); });
    EXPECT_EQ(stages, (std::vector<std::string>{"annotations", "retrieval", "prompt", "attempt", "attempt", "answer"}));
}

TEST_F(PipelineTest, TraceJsonRoundTrip) {
    ScriptedBackend llm({"select nope from patients", "select count(*) from patients"});
    const auto r = run("How many rbc tests are there?", deps(llm));
    const auto j = to_json(r.trace);
    EXPECT_EQ(to_json(trace_from_json(j)), j);
}

TEST_F(PipelineTest, IncompleteDepsRejected) {
    PipelineDeps d;
    EXPECT_THROW(run("q", d), ConfigError);
}

TEST(ExtractCode, FencedAndBare) {
    EXPECT_EQ(extract_code("Here:\n```sql\nselect 1\n```\nthanks").sql_text, "select 1");
    EXPECT_EQ(extract_code("  select 2  ").sql_text, "select 2");
    EXPECT_THROW(extract_code("no query here"), SqlSyntaxError);
}

}  // namespace
}  // namespace ehrq
