#include <gtest/gtest.h>

#include <set>

#include "ehrq/database.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/schema.hpp"
#include "ehrq/util.hpp"
#include "support.hpp"

namespace ehrq {
namespace {

SynthScale small_scale() { return SynthScale::parse("patients=12,admissions=1-2,labs=3-5,notes=1"); }

TEST(Synthetic, HasEighteenTables) {
    const Database db = generate_synthetic(3, small_scale());
    EXPECT_EQ(db.tables.size(), 18u);
    for (const auto& d : ehr_schema()) EXPECT_TRUE(db.tables.count(d.table_name)) << d.table_name;
}

TEST(Synthetic, SameSeedSameDatabase) {
    EXPECT_EQ(generate_synthetic(3, small_scale()), generate_synthetic(3, small_scale()));
    EXPECT_NE(checksum(generate_synthetic(3, small_scale())), checksum(generate_synthetic(4, small_scale())));
}

TEST(Synthetic, ForeignKeysResolve) {
    EXPECT_TRUE(check_referential_integrity(generate_synthetic(5, small_scale())).empty());
    EXPECT_TRUE(check_referential_integrity(testing::fixture_db()).empty());
}

TEST(Synthetic, DanglingAdmissionIsReported) {
    Database db = generate_synthetic(5, small_scale());
    auto& adm = db.tables.at("admissions");
    adm.rows[0][adm.require_column("subject_id")] = std::int64_t{99999999};
    EXPECT_FALSE(check_referential_integrity(db).empty());
}

TEST(Synthetic, EveryNotePathResolves) {
    const Database& db = testing::fixture_db();
    const Table& t = db.table("cxr_record_list");
    const std::size_t col = t.require_column("path");
    ASSERT_FALSE(t.rows.empty());
    for (const auto& r : t.rows) EXPECT_NO_THROW(resolve_note(db, std::get<std::string>(r[col])));
}

TEST(Scale, ParseRoundTrip) {
    const auto s = SynthScale::parse("patients=40,admissions=2-4,labs=1-9,notes=3,years=2100-2110");
    EXPECT_EQ(s.n_patients, 40);
    EXPECT_EQ(s.admissions_per_patient, (IntRange{2, 4}));
    EXPECT_EQ(SynthScale::parse(s.to_string()), s);
}

TEST(Scale, RejectsBadInput) {
    EXPECT_THROW(SynthScale::parse("patients"), ConfigError);
    EXPECT_THROW(SynthScale::parse("wards=3"), ConfigError);
    EXPECT_THROW(SynthScale::parse("patients=0").validate(), ConfigError);
    EXPECT_THROW(SynthScale::parse("admissions=3-1").validate(), ConfigError);
}

class TableFiles : public ::testing::TestWithParam<bool> {};

TEST_P(TableFiles, WriteLoadRoundTrip) {
    const Database db = generate_synthetic(9, small_scale());
    const auto dir = testing::scratch_dir(GetParam() ? "gz" : "csv");
    write_tables(db, dir, GetParam());
    const Database back = load_tables(dir);
    EXPECT_EQ(checksum(back), checksum(db));
    EXPECT_EQ(row_counts(back), row_counts(db));
}

INSTANTIATE_TEST_SUITE_P(Compression, TableFiles, ::testing::Bool());

TEST(TableFiles, MissingTableIsLoadError) {
    const auto dir = testing::scratch_dir("missing");
    write_tables(generate_synthetic(9, small_scale()), dir);
    std::filesystem::remove(dir / "icustays.csv");
    EXPECT_THROW(load_tables(dir), LoadError);
}

TEST(TableFiles, BadCellIsLoadError) {
    const auto dir = testing::scratch_dir("badcell");
    write_tables(generate_synthetic(9, small_scale()), dir);
    auto text = read_file((dir / "patients.csv").string());
    const auto line_end = text.find('\n');
    text.insert(line_end + 1, "notanumber,");
    write_file((dir / "patients.csv").string(), text);
    EXPECT_THROW(load_tables(dir), LoadError);
}

TEST(Preprocess, IsIdempotentAndBuildsViews) {
    const Database once = preprocess(generate_synthetic(2, small_scale()));
    EXPECT_TRUE(once.preprocessed);
    EXPECT_EQ(preprocess(once), once);
    for (const auto& v : merged_views()) EXPECT_TRUE(once.views.count(v.name)) << v.name;
}

TEST(Preprocess, LowercasesNotes) {
    const Database db = preprocess(generate_synthetic(2, small_scale()));
    for (const auto& [path, text] : db.notes) EXPECT_FALSE(has_upper(text)) << path;
}

TEST(Preprocess, MergedLabViewMatchesJoin) {
    const Database& db = testing::fixture_db();
    const Table& merged = db.table("labevents_merged");
    EXPECT_EQ(merged.rows.size(), db.table("labevents").rows.size());
    EXPECT_TRUE(merged.column_index("label").has_value());
}

TEST(Cells, TypedParsing) {
    std::string error;
    const ColumnDescription id{"subject_id", SemanticType::id, "", false};
    EXPECT_EQ(parse_typed_cell("42", id, &error), Cell{std::int64_t{42}});
    EXPECT_FALSE(parse_typed_cell("4x2", id, &error).has_value());
    const ColumnDescription when{"charttime", SemanticType::timestamp, "", true};
    EXPECT_EQ(parse_typed_cell("", when, &error), Cell{});
    EXPECT_FALSE(parse_typed_cell("2150-13-01 00:00:00", when, &error).has_value());
}

}  // namespace
}  // namespace ehrq
