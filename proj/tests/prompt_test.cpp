#include <gtest/gtest.h>

#include "ehrq/errors.hpp"
#include "ehrq/prompt.hpp"
#include "ehrq/schema.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

std::size_t occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

const std::vector<RetrievedExemplar> kExemplars = {
    {"How many admissions does patient 1 have?", "select count(*) from admissions where subject_id = 1", 0.9},
    {"What is the gender of patient 2?", "select gender from patients where subject_id = 2", 0.8}};

TEST(Compose, EverySectionAppearsOnceInOrder) {
    const auto q = "What was the last rbc of patient 5?";
    const auto p = compose(q, ehr_schema(), annotate(q, testing::lexicon()), kExemplars).render();
    std::size_t last = 0;
    for (auto m : {kMarkerTables, kMarkerKnowledge, kMarkerInstructions, kMarkerExemplars, kMarkerTools,
                   kMarkerQuestion}) {
        EXPECT_EQ(occurrences(p, m), 1u) << m;
        const auto at = p.find(m);
        EXPECT_GE(at, last) << m;
        last = at;
    }
    EXPECT_EQ(prompt_section(p, kMarkerQuestion), q);
}

TEST(Compose, KnowledgeListsMappings) {
    const auto q = "What was the last rbc of patient 5?";
    const auto p = compose(q, ehr_schema(), annotate(q, testing::lexicon()), kExemplars).render();
    const auto m = prompt_section(p, kMarkerKnowledge);
    EXPECT_NE(m.find("red blood cell"), std::string::npos);
    EXPECT_NE(m.find("d_labitems.label"), std::string::npos);
    EXPECT_NE(m.find("patient_id = 5"), std::string::npos);
}

TEST(Compose, NoMappingsSaysSo) {
    const auto p = compose("How old is patient 5?", ehr_schema(), {}, kExemplars).render();
    EXPECT_NE(prompt_section(p, kMarkerKnowledge).find(kNoMappings), std::string::npos);
}

TEST(Compose, BudgetDropsUnreferencedTablesFromTheEnd) {
    const auto full = compose("q", ehr_schema(), {}, kExemplars);
    PromptConfig tight;
    tight.budget_chars = full.render().size() - 2000;
    const auto b = compose("q", ehr_schema(), {}, kExemplars, tight);
    EXPECT_LE(b.render().size(), tight.budget_chars);
    ASSERT_FALSE(b.dropped_tables.empty());
    EXPECT_EQ(b.dropped_tables.front(), ehr_schema().back().table_name);
    for (const auto& t : b.dropped_tables) {
        EXPECT_NE(t, "admissions");
        EXPECT_NE(t, "patients");
    }
}

TEST(Compose, ImpossibleBudgetThrows) {
    PromptConfig tiny;
    tiny.budget_chars = 500;
    EXPECT_THROW(compose("q", ehr_schema(), {}, kExemplars, tiny), CompositionError);
}

TEST(Compose, ExemplarTablesMustBeDescribed) {
    std::vector<TableDescription> only_patients = {table_description("patients")};
    EXPECT_THROW(compose("q", only_patients, {}, kExemplars), CompositionError);
}

TEST(Compose, DefaultPromptFitsBudget) {
    const auto b = compose("q", ehr_schema(), {}, kExemplars);
    EXPECT_TRUE(b.dropped_tables.empty());
    EXPECT_LE(b.render().size(), PromptConfig{}.budget_chars);
}

TEST(Repair, AppendsFailedQueryAndError) {
    const auto b = compose("q", ehr_schema(), {}, kExemplars);
    const auto p = repair_prompt(b, "select nope from patients", {ErrorKind::unknown_column, "unknown column: nope", 7});
    EXPECT_EQ(p.rfind(b.render(), 0), 0u);
    EXPECT_EQ(prompt_section(p, kMarkerFailedQuery), "select nope from patients");
    EXPECT_NE(prompt_section(p, kMarkerError).find("unknown_column: unknown column: nope (at offset 7)"),
              std::string::npos);
}

TEST(Entities, ExtractsIdsAndCondition) {
    const auto q = "Does the chest x-ray of Patient 10001 in admission 20002 show pleural effusion?";
    const auto e = extract_entities(q, annotate(q, testing::lexicon()));
    EXPECT_EQ(e.patient_id, std::optional<std::string>("10001"));
    EXPECT_EQ(e.admission_id, std::optional<std::string>("20002"));
    EXPECT_EQ(e.condition, std::optional<std::string>("effusion"));
}

TEST(ToolPrompt, LowercaseFrame) {
    EntityExtraction e;
    e.patient_id = "1";
    e.admission_id = "2";
    e.condition = "effusion";
    EXPECT_EQ(tool_prompt(e), "does the chest x-ray report of patient 1 in admission 2 indicate effusion?");
    e.admission_id.reset();
    EXPECT_EQ(tool_prompt(e), "does the chest x-ray report of patient 1 indicate effusion?");
    e.condition.reset();
    EXPECT_THROW(tool_prompt(e), CompositionError);
}

TEST(Section, MissingMarkerIsEmpty) { EXPECT_EQ(prompt_section("### A\nx\n", kMarkerQuestion), ""); }

}  // namespace
}  // namespace ehrq
