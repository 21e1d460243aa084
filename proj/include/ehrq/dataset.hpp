#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ehrq/database.hpp"
#include "ehrq/executor.hpp"
#include "ehrq/retrieval.hpp"
#include "ehrq/templates.hpp"
#include "ehrq/text_backend.hpp"

namespace ehrq {

inline constexpr std::array<const char*, 3> kSplits = {"train", "valid", "test"};
inline constexpr std::string_view kRecordFormat = "tqgen-record/1";

/// Counts keyed split -> modality -> level ("I" / "II").
using CountMatrix = std::map<std::string, std::map<std::string, std::map<std::string, std::size_t>>>;

struct DatasetConfig {
    std::uint64_t seed = 7;
    CountMatrix counts;
    double max_sentinel_fraction = 0.10;  // per (split, modality, level) cell
    std::vector<std::string> templates;   // empty: the whole bank
    std::size_t attempts_per_item = 40;

    /// Per-split level totals spread over modalities at table:cxr:discharge.
    static DatasetConfig with_level_totals(std::uint64_t seed,
                                           const std::map<std::string, std::pair<std::size_t, std::size_t>>& totals,
                                           std::array<std::size_t, 3> modality_ratio = {2, 1, 1});
    /// train 400/400, valid 100/100, test 100/100.
    static DatasetConfig desk();

    nlohmann::json to_json() const;
    static DatasetConfig from_json(const nlohmann::json& j);
    static DatasetConfig load(const std::filesystem::path& path);
    void validate() const;
    std::size_t total() const;
};

struct DatasetRecord {
    QuestionInstance instance;
    std::string question_template;
    std::optional<std::int64_t> subject_id, hadm_id;
    std::string split;
};

struct DatasetSplits {
    std::map<std::string, std::vector<DatasetRecord>> splits;  // keyed by split name
    std::vector<const DatasetRecord*> all() const;
};

DatasetSplits build(const Database& db, const TemplateBank& bank, const DatasetConfig& config);
/// Same, over a caller-owned executor and text backend.
DatasetSplits build(SqlExecutor& executor, const Database& db, const TemplateBank& bank, const DatasetConfig& config,
                    TextBackend& text_backend);

nlohmann::ordered_json record_to_json(const DatasetRecord& r);
/// Throws ValidationError on a malformed record.
DatasetRecord record_from_json(const nlohmann::json& j);

/// Writes `<out>/{train,valid,test}.jsonl` and `<out>/stats.json`.
void write_dataset(const DatasetSplits& ds, const std::filesystem::path& out);
std::string to_jsonl(const std::vector<DatasetRecord>& records);
/// Reads a directory of split files or a single .jsonl file.
DatasetSplits load_dataset(const std::filesystem::path& path);
std::vector<QuestionInstance> instances(const DatasetSplits& ds, std::optional<std::string> split = std::nullopt);

CountMatrix stats(const DatasetSplits& ds);
nlohmann::json stats_json(const CountMatrix& m);
/// Modality rows, split x level columns, plus a Total row.
std::string render_stats(const CountMatrix& m);

struct VerificationFlag {
    std::string instance_id;
    std::string kind;  // "mismatch", "execution_error", "level", "parse"
    std::string detail;
};

struct VerificationReport {
    std::size_t total = 0;
    std::size_t audited = 0;
    std::vector<VerificationFlag> flags;
    nlohmann::json to_json() const;
};

/// Re-executes every query_code (or a seeded sample of `sample_size`); level
/// checks need the bank.
VerificationReport verify(const DatasetSplits& ds, SqlExecutor& executor, TextBackend& text_backend,
                          const TemplateBank* bank = nullptr, std::optional<std::size_t> sample_size = std::nullopt,
                          std::uint64_t sample_seed = 7);

/// `per_template` instantiations of every template, questions paired with
/// their gold queries, for the retrieval index.
std::vector<Exemplar> exemplars_from_bank(const TemplateBank& bank, SqlExecutor& executor, TextBackend& text_backend,
                                          std::uint64_t seed, std::size_t per_template = 2);

}  // namespace ehrq
