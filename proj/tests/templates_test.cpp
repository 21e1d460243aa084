#include <gtest/gtest.h>

#include <set>

#include "ehrq/errors.hpp"
#include "ehrq/templates.hpp"
#include "ehrq/util.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

// One small template exercising every slot type.
const char* kBankJson = R"({
  "version": "tqgen-templates/1",
  "templates": [{
    "template_id": "X1",
    "modality": "table",
    "canonical_text": "What is the {agg} {label} of patient {subject_id} above {threshold} on route {route}?",
    "variants": ["What is the {agg} {label} of patient {subject_id} above {threshold} on route {route}?"],
    "slots": [
      {"name": "subject_id", "source": "sampler", "type": "int", "constraint": true},
      {"name": "label", "source": "sampler", "type": "text", "constraint": true},
      {"name": "threshold", "source": "sampler", "type": "real", "constraint": true},
      {"name": "route", "source": "enum", "type": "text", "constraint": true, "values": ["po", "iv"],
       "display": {"po": "orally", "iv": "intravenously"}},
      {"name": "agg", "source": "enum", "type": "keyword", "constraint": false, "values": ["max", "min"],
       "display": {"max": "highest", "min": "lowest"}}
    ],
    "gold_query_template": "select {agg}(valuenum) from labevents_merged where subject_id = {subject_id} and label = {label} and valuenum > {threshold} and comments like '%{label}%' and '{route}' = '{route}'",
    "answer_mode": "scalar",
    "sampler": "select subject_id, label, valuenum as threshold from labevents_merged"
  }]
})";

const Bindings kBindings = {
    {"subject_id", "7"}, {"label", "o'brien"}, {"threshold", "1.5"}, {"route", "iv"}, {"agg", "max"}};

TEST(Bank, LoadsBundledTemplates) {
    const auto& bank = testing::bank();
    EXPECT_GE(bank.size(), 60u);
    for (Modality m : {Modality::table, Modality::cxr_report, Modality::discharge}) {
        std::set<Level> levels;
        for (const auto* t : bank.by_modality(m)) {
            Bindings all;
            for (const auto& s : t->slots) all[s.name] = "";
            levels.insert(classify_level(all, t));
            EXPECT_GE(t->variants.size(), 5u) << t->template_id;
        }
        EXPECT_EQ(levels.size(), 2u) << to_string(m);
    }
}

TEST(Bank, LookupUnknownThrows) { EXPECT_THROW(testing::bank().get("nope"), LookupError); }

TEST(Bank, DuplicateIdRejected) {
    auto t = parse_templates(kBankJson).get("X1");
    EXPECT_THROW(TemplateBank({t, t}), ValidationError);
}

TEST(Bank, ValidationNamesTheTemplate) {
    auto t = parse_templates(kBankJson).get("X1");
    t.variants.push_back("What about {nothing}?");
    try {
        validate_template(t);
        FAIL();
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("X1"), std::string::npos);
    }
    t = parse_templates(kBankJson).get("X1");
    t.gold_query_template = "select {agg}(valuenum from";
    EXPECT_THROW(validate_template(t), ValidationError);
    EXPECT_THROW(parse_templates(R"({"version": "other", "templates": []})"), ValidationError);
}

TEST(Placeholders, KeepOrderAndDuplicates) {
    EXPECT_EQ(placeholders("{a} and {b} then {a}"), (std::vector<std::string>{"a", "b", "a"}));
}

TEST(Render, QuotesByTypeAndContext) {
    const auto t = parse_templates(kBankJson).get("X1");
    const auto sql = render_gold_query(t, kBindings).sql_text;
    EXPECT_EQ(sql,
              "select max(valuenum) from labevents_merged where subject_id = 7 and label = 'o''brien' and "
              "valuenum > 1.5 and comments like '%o''brien%' and 'iv' = 'iv'");
}

TEST(Render, RejectsMalformedValues) {
    const auto t = parse_templates(kBankJson).get("X1");
    auto b = kBindings;
    b["subject_id"] = "7 or 1=1";
    EXPECT_THROW(render_gold_query(t, b), RenderError);
    b = kBindings;
    b["agg"] = "sum";
    EXPECT_THROW(render_gold_query(t, b), RenderError);
    b = kBindings;
    b["threshold"] = "abc";
    EXPECT_THROW(render_gold_query(t, b), RenderError);
    b = kBindings;
    b.erase("label");
    EXPECT_THROW(render_gold_query(t, b), RenderError);
}

TEST(Render, QuestionUsesDisplayForms) {
    const auto t = parse_templates(kBankJson).get("X1");
    EXPECT_EQ(render_question(t, t.variants[0], kBindings),
              "What is the highest o'brien of patient 7 above 1.5 on route intravenously?");
}

TEST(Level, CountsOnlyConstraintSlots) {
    const auto t = parse_templates(kBankJson).get("X1");
    EXPECT_EQ(constraint_count(kBindings, &t), 4u);
    EXPECT_EQ(classify_level(kBindings, &t), Level::II);
    Bindings three = kBindings;
    three.erase("route");
    EXPECT_EQ(classify_level(three, &t), Level::I);
    EXPECT_EQ(classify_level({{"a", "1"}, {"b", "2"}, {"c", "3"}}), Level::I);
    EXPECT_EQ(classify_level({{"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}}), Level::II);
}

TEST(Answer, SentinelCases) {
    ExecutionOutcome empty;
    empty.ok = true;
    EXPECT_EQ(render_answer(empty), kSentinel);
    ExecutionOutcome nulls = empty;
    nulls.rows = {{Cell{}, Cell{}}};
    EXPECT_EQ(render_answer(nulls), kSentinel);
    ExecutionOutcome said = empty;
    said.rows = {{Cell{std::string("no corresponding information found")}}};
    EXPECT_EQ(render_answer(said), kSentinel);
    ExecutionOutcome rows = empty;
    rows.rows = {{Cell{std::int64_t{1}}, Cell{2.5}}, {Cell{std::string("a")}, Cell{}}};
    EXPECT_EQ(render_answer(rows), "1, 2.5\na, ");
    EXPECT_TRUE(is_sentinel("  no corresponding INFORMATION found "));
}

TEST(Instantiate, EveryTemplateExecutes) {
    SqlExecutor executor(testing::fixture_db());
    OfflineTextBackend text;
    for (const auto& t : testing::bank().templates()) {
        Rng rng(fnv1a(t.template_id));
        QuestionInstance q;
        ASSERT_NO_THROW(q = instantiate(t, executor, text, rng)) << t.template_id;
        EXPECT_TRUE(executor.execute(q.gold_query, text).ok) << q.gold_query.sql_text;
        EXPECT_EQ(q.question.find('{'), std::string::npos) << q.question;
        EXPECT_EQ(q.instance_id.rfind(t.template_id + "-", 0), 0u);
    }
}

TEST(Instantiate, DeterministicUnderSeed) {
    SqlExecutor executor(testing::fixture_db());
    OfflineTextBackend text;
    const auto& t = testing::bank().get("T01");
    Rng a(11), b(11);
    for (int i = 0; i < 5; ++i) {
        const auto x = instantiate(t, executor, text, a);
        const auto y = instantiate(t, executor, text, b);
        EXPECT_EQ(x.instance_id, y.instance_id);
        EXPECT_EQ(x.gold_answer, y.gold_answer);
    }
}

TEST(Instantiate, RespectsAllowedSubjects) {
    SqlExecutor executor(testing::fixture_db());
    OfflineTextBackend text;
    const std::set<std::int64_t> only = {testing::single_admission_patient()};
    InstantiateOptions options{&only};
    Rng rng(3);
    for (int i = 0; i < 5; ++i) {
        const auto q = instantiate(testing::bank().get("T01"), executor, text, rng, options);
        EXPECT_EQ(q.bindings.at("subject_id"), std::to_string(*only.begin()));
        EXPECT_EQ(q.gold_answer, "1");
    }
    const std::set<std::int64_t> none = {1};
    EXPECT_THROW(instantiate(testing::bank().get("T01"), executor, text, rng, InstantiateOptions{&none}),
                 InstantiationError);
}

}  // namespace
}  // namespace ehrq
