#include <gtest/gtest.h>

#include <set>

#include "ehrq/errors.hpp"
#include "ehrq/sql.hpp"
#include "ehrq/templates.hpp"
#include "support.hpp"

namespace ehrq::sql {
namespace {

bool same(std::string_view a, std::string_view b) { return canonicalize(a) == canonicalize(b); }

TEST(Canonicalize, FoldsCaseAndWhitespace) {
    EXPECT_TRUE(same("SELECT Gender\n FROM   patients WHERE subject_id=10", "select gender from patients where subject_id = 10"));
}

TEST(Canonicalize, InlinesAliases) {
    EXPECT_TRUE(same("select p.gender from patients as p where p.subject_id = 1",
                     "select gender from patients where subject_id = 1"));
    EXPECT_TRUE(same("select a.x from t a join u b on a.k = b.k", "select t.x from t join u on t.k = u.k"));
}

TEST(Canonicalize, SortsConjunctsAndEqualitySides) {
    EXPECT_TRUE(same("select a from t where x = 1 and y = 2", "select a from t where 2 = y and x = 1"));
    EXPECT_TRUE(same("select a from t where x = 1 or y = 2", "select a from t where y = 2 or x = 1"));
}

TEST(Canonicalize, NormalizesNumbers) {
    EXPECT_TRUE(same("select a from t where x = 1.50", "select a from t where x = 1.5"));
}

TEST(Canonicalize, SortsGroupByKeys) {
    EXPECT_TRUE(same("select count(*) from t group by b, a", "select count(*) from t group by a, b"));
}

TEST(Canonicalize, KeepsProjectionAndOrderByOrder) {
    EXPECT_FALSE(same("select a, b from t", "select b, a from t"));
    EXPECT_FALSE(same("select a from t order by a, b", "select a from t order by b, a"));
}

TEST(Canonicalize, DistinguishesStructurallyDifferentQueries) {
    EXPECT_FALSE(same("select max(x) from t", "select x from t order by x desc limit 1"));
    EXPECT_FALSE(same("select a from t where x in (1, 2)", "select a from t where x = 1 or x = 2"));
    EXPECT_FALSE(same("select count(*) from t", "select count(distinct k) from t"));
}

TEST(Canonicalize, HasSevenComponents) {
    const auto c = canonicalize("select a from t");
    EXPECT_EQ(c.components.size(), 7u);
    EXPECT_EQ(c.components.at("where"), "");
    EXPECT_EQ(c.components.at("from"), "t");
}

TEST(Canonicalize, RenderIsAFixedPointOnGoldQueries) {
    for (const auto& t : testing::bank().templates()) {
        Bindings b;
        for (const auto& s : t.slots)
            b[s.name] = s.source == "enum" ? s.values.front()
                                           : (s.type == SlotType::integer ? "1" : (s.type == SlotType::real ? "1.5" : "x"));
        const auto sql = render_gold_query(t, b).sql_text;
        const auto once = canonicalize(sql);
        EXPECT_EQ(canonicalize(once.render()), once) << t.template_id;
    }
}

TEST(Parse, ReportsPositionOfError) {
    try {
        parse("select * from");
        FAIL();
    } catch (const SqlSyntaxError& e) {
        EXPECT_EQ(e.position(), 13u);
    }
    EXPECT_THROW(parse("delete from patients"), SqlSyntaxError);
    EXPECT_THROW(parse("select a from t; drop table t"), SqlSyntaxError);
    EXPECT_THROW(parse("select 'unterminated"), SqlSyntaxError);
}

TEST(Parse, AcceptsSupportedSubset) {
    for (const char* q : {
             "select count(*) from t where x is not null",
             "select a, case when b > 1 then 'hi' else 'lo' end from t",
             "select cast(x as real) from t where y like '%a%'",
             "select a from t where exists (select 1 from u where u.k = t.k)",
             "select a from t left join u on t.k = u.k group by a having count(*) > 2",
             "select (select max(x) from u) from t limit 3 offset 1",
             "select a from t where x not in (select x from u);",
         })
        EXPECT_NO_THROW(parse(q)) << q;
}

TEST(Tables, CollectsSubqueryTables) {
    const auto tables = referenced_tables(parse("select a from t where k in (select k from u join v on u.x = v.x)"));
    EXPECT_EQ(std::set<std::string>(tables.begin(), tables.end()), (std::set<std::string>{"t", "u", "v"}));
}

TEST(Calls, FindsNestedFunctionCalls) {
    const auto s = parse("select count(*) from r where text_func(r.path, 'q1') = 'yes' and "
                         "k in (select k from u where TEXT_FUNC(u.path, 'q2') = 'no')");
    const auto calls = find_calls(s, "text_func");
    ASSERT_EQ(calls.size(), 2u);
    EXPECT_EQ(calls[0]->args[1].text, "q1");
    EXPECT_EQ(calls[1]->args[1].text, "q2");
}

}  // namespace
}  // namespace ehrq::sql
