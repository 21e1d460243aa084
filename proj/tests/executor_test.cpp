#include <gtest/gtest.h>

#include <atomic>
#include <thread>

#include "ehrq/errors.hpp"
#include "ehrq/executor.hpp"
#include "ehrq/util.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

class ThrowingBackend final : public TextBackend {
public:
    std::string answer(std::string_view, std::string_view) override { throw BackendError("offline"); }
    std::string identity() const override { return "throwing"; }
};

class ExecutorTest : public ::testing::Test {
protected:
    SqlExecutor executor{testing::fixture_db()};
    OfflineTextBackend text;

    ExecutionOutcome run(std::string_view sql, ExecutionLimits limits = {}) { return executor.execute(sql, text, limits); }
};

TEST_F(ExecutorTest, SelectsRows) {
    const auto out = run("select count(*) from patients");
    ASSERT_TRUE(out.ok);
    EXPECT_EQ(out.columns, std::vector<std::string>{"count(*)"});
    EXPECT_EQ(out.rows[0][0], Cell{static_cast<std::int64_t>(testing::fixture_db().table("patients").rows.size())});
}

TEST_F(ExecutorTest, ViewsAreQueryable) {
    EXPECT_TRUE(run("select label, valuenum from labevents_merged limit 3").ok);
}

TEST_F(ExecutorTest, RejectsWrites) {
    const auto before = executor.content_checksum();
    for (const char* q : {"delete from patients", "insert into patients values (1)", "drop table patients",
                          "update patients set gender = 'x'", "create table x (a)", "pragma writable_schema = 1",
                          "attach database ':memory:' as other", "select 1; delete from patients"}) {
        const auto out = run(q);
        EXPECT_FALSE(out.ok) << q;
        ASSERT_TRUE(out.error);
        EXPECT_EQ(out.error->kind, ErrorKind::parse) << q;
    }
    EXPECT_EQ(executor.content_checksum(), before);
}

TEST_F(ExecutorTest, ClassifiesErrors) {
    EXPECT_EQ(run("select a from no_such_table").error->kind, ErrorKind::unknown_table);
    EXPECT_EQ(run("select no_such_column from patients").error->kind, ErrorKind::unknown_column);
    EXPECT_EQ(run("select from where").error->kind, ErrorKind::parse);
    EXPECT_EQ(run("select text_func(1, 'what?')").error->kind, ErrorKind::type);
    EXPECT_EQ(run("select text_func('notes/nowhere.txt', 'what?')").error->kind, ErrorKind::path);
}

TEST_F(ExecutorTest, ParseErrorCarriesPosition) {
    const auto out = run("select * from");
    ASSERT_TRUE(out.error);
    EXPECT_EQ(out.error->position, std::optional<std::size_t>(13));
}

TEST_F(ExecutorTest, BackendFailureIsToolError) {
    ThrowingBackend broken;
    const auto out = executor.execute("select text_func(text, 'what allergies are documented?') from discharge limit 1", broken);
    ASSERT_FALSE(out.ok);
    EXPECT_EQ(out.error->kind, ErrorKind::tool);
}

TEST_F(ExecutorTest, TimesOut) {
    const auto out = run("select count(*) from labevents a, labevents b, labevents c",
                         ExecutionLimits{std::chrono::milliseconds(50), 10});
    ASSERT_FALSE(out.ok);
    EXPECT_EQ(out.error->kind, ErrorKind::timeout);
    EXPECT_TRUE(run("select count(*) from patients").ok);
}

TEST_F(ExecutorTest, TruncatesAtRowLimit) {
    const auto out = run("select * from labevents", ExecutionLimits{std::chrono::milliseconds(5000), 10});
    ASSERT_TRUE(out.ok);
    EXPECT_TRUE(out.truncated);
    EXPECT_EQ(out.rows.size(), 10u);
}

TEST_F(ExecutorTest, NullNoteArgumentYieldsNull) {
    const auto out = run("select text_func(null, 'what?')");
    ASSERT_TRUE(out.ok);
    EXPECT_TRUE(is_null(out.rows[0][0]));
}

// Oracle: scan the report texts directly with the same backend.
TEST_F(ExecutorTest, ToolCountMatchesReportScan) {
    const auto& db = testing::fixture_db();
    const std::string question = "does the chest x-ray report indicate pleural effusion?";
    std::int64_t expected = 0;
    const Table& reports = db.table("cxr_record_list");
    const std::size_t col = reports.require_column("path");
    for (const auto& r : reports.rows)
        if (text_func(resolve_note(db, std::get<std::string>(r[col])), question, text) == "yes") ++expected;
    const auto out = run("select count(*) from cxr_record_list where text_func(path, '" + question + "') = 'yes'");
    ASSERT_TRUE(out.ok) << out.error->message;
    EXPECT_EQ(out.rows[0][0], Cell{expected});
    EXPECT_GT(expected, 0);
}

TEST(Program, CollectsToolCalls) {
    const auto p = parse_program("select text_func(path, 'q?') from discharge where text_func(path, 'r?') = 'yes'");
    ASSERT_EQ(p.tool_calls.size(), 2u);
    EXPECT_EQ(p.tool_calls[0].question, "q?");
    EXPECT_EQ(p.tool_calls[1].argument, "path");
}

TEST(Program, RejectsMalformedToolCalls) {
    EXPECT_THROW(parse_program("select text_func(path) from discharge"), SqlSyntaxError);
    EXPECT_THROW(parse_program("select text_func(path, note_id) from discharge"), SqlSyntaxError);
}

TEST(ExecutorConcurrency, ParallelReadsAgree) {
    SqlExecutor executor(testing::fixture_db());
    OfflineTextBackend text;
    const auto expected = executor.execute("select count(*), sum(valuenum) from labevents", text).rows;
    std::vector<std::thread> threads;
    std::atomic<int> bad{0};
    for (int i = 0; i < 8; ++i)
        threads.emplace_back([&] {
            for (int j = 0; j < 20; ++j)
                if (executor.execute("select count(*), sum(valuenum) from labevents", text).rows != expected) ++bad;
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(bad.load(), 0);
}

}  // namespace
}  // namespace ehrq
