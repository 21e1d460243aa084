#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/cell.hpp"
#include "ehrq/schema.hpp"

namespace ehrq {

struct Table {
    std::string name;
    std::vector<std::string> columns;
    std::vector<Row> rows;

    std::optional<std::size_t> column_index(std::string_view column) const;
    /// Throws LookupError when the column is missing.
    std::size_t require_column(std::string_view column) const;

    bool operator==(const Table&) const = default;
};

struct IntRange {
    std::int64_t lo = 0;
    std::int64_t hi = 0;
    bool operator==(const IntRange&) const = default;
};

struct SynthScale {
    std::int64_t n_patients = 100;
    IntRange admissions_per_patient{1, 3};
    IntRange labs_per_admission{6, 14};
    /// Upper bound of chest X-ray studies per admission; each admission also
    /// gets one discharge summary.
    std::int64_t notes_per_admission = 2;
    IntRange year_window{2150, 2159};

    bool operator==(const SynthScale&) const = default;

    /// Parses "patients=100,admissions=1-3,labs=6-14,notes=2,years=2150-2159";
    /// omitted keys keep their defaults.
    static SynthScale parse(std::string_view spec);
    std::string to_string() const;
    void validate() const;
};

/// The in-memory EHR: 18 tables, long-text attachments, and (after
/// preprocess) the merged convenience views.
struct Database {
    std::map<std::string, Table> tables;
    std::map<std::string, Table> views;
    std::map<std::string, std::string> notes;  // note path -> text
    std::uint64_t rng_seed = 0;
    std::optional<SynthScale> scale;
    bool preprocessed = false;

    const Table& table(std::string_view name) const;  // tables, then views
    bool operator==(const Database&) const = default;
};

Database generate_synthetic(std::uint64_t seed, const SynthScale& scale);

/// Writes `<root>/<table>.csv[.gz]`, `<root>/notes/...`, `<root>/manifest.json`.
void write_tables(const Database& db, const std::filesystem::path& root, bool gzip = false);
Database load_tables(const std::filesystem::path& root);

/// Lowercases free_text cells and note texts, materializes merged views.
/// Idempotent.
Database preprocess(Database db);

const std::string& resolve_note(const Database& db, std::string_view path);

/// Validates one raw CSV field against a column's semantic type.
/// Returns std::nullopt with `error` filled on failure.
std::optional<Cell> parse_typed_cell(std::string_view raw, const ColumnDescription& column, std::string* error);
bool is_valid_timestamp(std::string_view text);

/// Violations of the Appendix foreign keys, one message per dangling value.
std::vector<std::string> check_referential_integrity(const Database& db);

/// FNV-1a over every table cell, view cell, and note.
std::uint64_t checksum(const Database& db);

/// Row counts for the 18 tables.
std::map<std::string, std::size_t> row_counts(const Database& db);

}  // namespace ehrq
