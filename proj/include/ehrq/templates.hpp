#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/cell.hpp"
#include "ehrq/executor.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

enum class Modality { table, cxr_report, discharge };
enum class AnswerMode { scalar, list, text };
enum class Level { I, II };

std::string_view to_string(Modality m);
std::string_view to_string(AnswerMode m);
std::string_view to_string(Level l);
Modality parse_modality(std::string_view s);
AnswerMode parse_answer_mode(std::string_view s);
Level parse_level(std::string_view s);

enum class SlotType { integer, real, text, keyword };

/// One placeholder of a template.
///
/// `source` is either "sampler" (the value is the same-named column of a row
/// drawn from the template's sampler query) or "enum" (drawn from `values`).
/// `display` maps a raw value to the phrase used in question text, e.g.
/// "F" -> "female" or "0" -> "first". Keyword slots are spliced into the
/// query unquoted and must come from `values`.
struct SlotSpec {
    std::string name;
    std::string source = "sampler";
    SlotType type = SlotType::text;
    bool constraint = true;
    std::vector<std::string> values;
    std::map<std::string, std::string> display;

    std::string display_of(const std::string& raw) const;
};

struct QuestionTemplate {
    std::string template_id;
    Modality modality = Modality::table;
    std::string canonical_text;
    std::vector<std::string> variants;
    std::vector<SlotSpec> slots;
    std::string gold_query_template;
    AnswerMode answer_mode = AnswerMode::scalar;
    std::string sampler;  // SQL producing candidate rows for sampler slots

    const SlotSpec* slot(std::string_view name) const;
    /// True when no row of the sampler identifies one patient (no
    /// subject_id slot).
    bool population_level() const;
};

/// Slot name -> raw value, already in query form (no quotes).
using Bindings = std::map<std::string, std::string>;

struct QuestionInstance {
    std::string instance_id;
    std::string template_id;
    std::string question;
    Bindings bindings;
    QueryProgram gold_query;
    std::string gold_answer;
    Level level = Level::I;
    Modality modality = Modality::table;
    AnswerMode answer_mode = AnswerMode::scalar;
};

class TemplateBank {
public:
    TemplateBank() = default;
    explicit TemplateBank(std::vector<QuestionTemplate> templates);  // validates

    const std::vector<QuestionTemplate>& templates() const { return templates_; }
    const QuestionTemplate& get(std::string_view template_id) const;  // LookupError
    std::vector<const QuestionTemplate*> by_modality(Modality m) const;
    std::size_t size() const { return templates_.size(); }

private:
    std::vector<QuestionTemplate> templates_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

/// Placeholder names in order of appearance, duplicates kept.
std::vector<std::string> placeholders(std::string_view text);

/// Throws ValidationError naming the template.
void validate_template(const QuestionTemplate& t);

TemplateBank load_templates(const std::filesystem::path& file);
TemplateBank parse_templates(std::string_view json_text);
std::filesystem::path default_templates_path();

/// Number of bindings whose slot counts as a constraint. Bindings without a
/// slot spec count as constraints.
std::size_t constraint_count(const Bindings& bindings, const QuestionTemplate* t = nullptr);
Level classify_level(const Bindings& bindings, const QuestionTemplate* t = nullptr);

/// Substitutes bindings into the gold query. Inside a quoted literal the raw
/// value is inserted with quotes doubled; outside, integers and reals go bare,
/// keywords go bare after an enum check, and text becomes a quoted literal.
/// Throws RenderError on a missing binding or a malformed value.
QueryProgram render_gold_query(const QuestionTemplate& t, const Bindings& bindings);

/// Fills a variant's placeholders with display forms.
std::string render_question(const QuestionTemplate& t, std::string_view variant, const Bindings& bindings);

/// How gold answers are rendered from an execution: empty result, or a
/// single all-NULL row, or a single cell equal to the sentinel, gives the
/// sentinel; rows are newline-joined and cells within a row ", "-joined.
std::string render_answer(const ExecutionOutcome& outcome);
bool is_sentinel(std::string_view answer);

struct InstantiateOptions {
    /// When set, sampler rows whose subject_id is outside the set are skipped.
    const std::set<std::int64_t>* allowed_subjects = nullptr;
    /// Sampler results keyed by template id, reused across calls.
    std::map<std::string, ExecutionOutcome>* sampler_cache = nullptr;
};

/// Picks a variant uniformly, draws slot values from real rows of the
/// database, renders the gold query, executes it to label the answer.
/// Throws InstantiationError when the sampler yields no usable rows or the
/// gold query fails.
QuestionInstance instantiate(const QuestionTemplate& t, SqlExecutor& executor, TextBackend& text_backend, Rng& rng,
                             const InstantiateOptions& options = {});

}  // namespace ehrq
