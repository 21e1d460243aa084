#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ehrq/executor.hpp"
#include "ehrq/llm.hpp"
#include "ehrq/pipeline.hpp"
#include "ehrq/templates.hpp"

namespace ehrq {

/// 1 iff every clause component of the canonical forms agrees; an
/// unparseable prediction scores 0. Throws EvaluatorError when gold does not
/// parse.
int exact_match(std::string_view pred_sql, std::string_view gold_sql);

/// Rows with cells normalized for comparison: strings lowercased and trimmed,
/// integers widened to reals. An empty result and a single all-NULL row are
/// both the empty multiset.
struct NormalizedResult {
    std::vector<std::vector<Cell>> rows;
};
NormalizedResult normalize_result(const std::vector<Row>& rows);
bool cells_equal(const Cell& a, const Cell& b);  // 1e-6 relative or 1e-9 absolute on numbers
bool results_equal(const std::vector<Row>& a, const std::vector<Row>& b);  // multiset equality

/// Executes both programs. A failing prediction scores 0; a failing gold
/// throws EvaluatorError.
int execution_accuracy(std::string_view pred_sql, std::string_view gold_sql, SqlExecutor& executor,
                       TextBackend& text_backend);

/// Judge reply parsed as the first integer, clamped to [1, 10]. Throws
/// EvaluatorError on an empty reference or an unparseable reply.
int judge_score(std::string_view pred_answer, std::string_view ref_answer, std::string_view question,
                LlmBackend& judge);

/// What a system under evaluation returns for one item.
struct SystemOutput {
    std::optional<std::string> sql;  // absent: the system answered without a query
    std::string answer;
};
using System = std::function<SystemOutput(const QuestionInstance&)>;

System echo_gold_system();
System sentinel_system();
System pipeline_system(const PipelineDeps& deps);

struct ItemScore {
    std::string instance_id;
    std::string template_id;
    Level level = Level::I;
    Modality modality = Modality::table;
    AnswerMode answer_mode = AnswerMode::scalar;
    std::optional<int> em, ex, judge;
    std::string pred_sql, pred_answer, gold_answer;
    std::vector<std::string> flags;
};

struct Aggregate {
    std::size_t items = 0;
    std::size_t em_items = 0;  // items scored by EM/EX
    std::size_t judge_items = 0;
    std::optional<double> em, ex, judge;
};

struct EvalReport {
    std::vector<ItemScore> items;
    Aggregate overall;
    std::map<std::string, Aggregate> by_level;           // "I", "II"
    std::map<std::string, Aggregate> by_modality;        // "table", ...
    std::map<std::string, Aggregate> by_level_modality;  // "I/table", ...

    nlohmann::json to_json() const;
    /// Fixed-width table: one row per level plus overall, EM / EX / judge
    /// columns, then the modality breakdown.
    std::string summary_table() const;
};

Aggregate aggregate(const std::vector<const ItemScore*>& items);

struct EvalOptions {
    LlmBackend* judge = nullptr;  // defaults to the offline judge
};

EvalReport evaluate(const std::vector<QuestionInstance>& dataset, const System& system, SqlExecutor& executor,
                    TextBackend& text_backend, const EvalOptions& options = {});

}  // namespace ehrq
