#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/executor.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/retrieval.hpp"
#include "ehrq/schema.hpp"

namespace ehrq {

// Section markers; each occurs exactly once in a rendered prompt.
inline constexpr std::string_view kMarkerTables = "### C: TABLE DESCRIPTIONS";
inline constexpr std::string_view kMarkerKnowledge = "### M: MEDICAL KNOWLEDGE";
inline constexpr std::string_view kMarkerInstructions = "### P: INSTRUCTIONS";
inline constexpr std::string_view kMarkerExemplars = "### EXEMPLARS";
inline constexpr std::string_view kMarkerTools = "### TOOLS";
inline constexpr std::string_view kMarkerQuestion = "### QUESTION";
inline constexpr std::string_view kMarkerFailedQuery = "### FAILED QUERY";
inline constexpr std::string_view kMarkerError = "### ERROR";

inline constexpr std::string_view kNoMappings = "no medical-term mappings found";

struct PromptConfig {
    std::size_t budget_chars = 16000;
    std::string dialect = "sqlite";
};

struct EntityExtraction {
    std::optional<std::string> patient_id;
    std::optional<std::string> admission_id;
    std::optional<std::string> condition;
    std::optional<std::string> study;  // study id or ordinal phrase

    bool operator==(const EntityExtraction&) const = default;
};

struct RetrievedExemplar {
    std::string question;
    std::string query;
    double similarity = 0.0;
};

struct PromptBundle {
    std::string table_descriptions;  // C
    std::string knowledge;           // M
    std::string instructions;        // P
    std::vector<RetrievedExemplar> exemplars;
    std::string question;
    std::string toolset_doc;
    std::vector<std::string> dropped_tables;  // descriptions cut for budget

    std::string render() const;
    bool operator==(const PromptBundle&) const = default;
};

std::string render_table_description(const TableDescription& t);

/// Throws CompositionError listing section sizes when the budget cannot be
/// met even after dropping descriptions of tables no exemplar references.
PromptBundle compose(std::string_view question, const std::vector<TableDescription>& descriptions,
                     const std::vector<Annotation>& annotations, const std::vector<RetrievedExemplar>& exemplars,
                     const PromptConfig& config = {});

/// Original bundle plus the failed program and its error.
std::string repair_prompt(const PromptBundle& bundle, std::string_view failed_sql, const ErrorInfo& error);

EntityExtraction extract_entities(std::string_view question, const std::vector<Annotation>& annotations);

/// "does the chest x-ray report of patient {p} in admission {a} indicate {c}?"
/// with absent segments omitted. Throws CompositionError without a condition.
std::string tool_prompt(const EntityExtraction& extraction);

/// Body of a marked section of a rendered prompt (up to the next "### "
/// marker line), trimmed; empty when the marker is absent.
std::string prompt_section(std::string_view prompt, std::string_view marker);

}  // namespace ehrq
