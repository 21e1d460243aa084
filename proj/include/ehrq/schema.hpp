#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ehrq {

enum class SemanticType { id, timestamp, numeric, categorical, free_text, note_path };

std::string_view to_string(SemanticType t);

struct ColumnDescription {
    std::string name;
    SemanticType semantic_type;
    std::string description;
    bool nullable = false;
};

struct TableDescription {
    std::string table_name;
    std::string file_path;  // relative to the db root
    std::string summary;
    std::vector<ColumnDescription> columns;

    std::optional<std::size_t> column_index(std::string_view name) const;
};

/// A child column that must resolve to a row in `parent_table`.
struct ForeignKey {
    std::string table;
    std::vector<std::string> columns;
    std::string parent_table;
    std::vector<std::string> parent_columns;
};

/// The 18 EHR tables in canonical order.
const std::vector<TableDescription>& ehr_schema();
const TableDescription& table_description(std::string_view table_name);
bool is_ehr_table(std::string_view table_name);

const std::vector<ForeignKey>& foreign_keys();

/// Materialized join views produced by preprocess().
struct MergedView {
    std::string name;
    std::string child;
    std::string parent;
    std::vector<std::string> keys;
    std::vector<std::string> parent_columns;  // appended to the child's columns
};
const std::vector<MergedView>& merged_views();

struct LabReference {
    std::int64_t itemid;
    std::string label;         // display form, e.g. "Red Blood Cell"
    std::string abbreviation;  // discharge-note form, e.g. "RBC"
    double ref_range_lower;
    double ref_range_upper;
    std::string valueuom;
    std::string fluid;
    std::string category;
};
const std::vector<LabReference>& lab_references();

/// Closed vocabulary of CXR findings.
const std::vector<std::string>& findings_vocabulary();

}  // namespace ehrq
