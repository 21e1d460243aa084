#pragma once

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "ehrq/executor.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/llm.hpp"
#include "ehrq/prompt.hpp"
#include "ehrq/retrieval.hpp"
#include "ehrq/text_backend.hpp"

namespace ehrq {

enum class FinalStatus { answered, unanswerable, exhausted, backend_error };
std::string_view to_string(FinalStatus s);
FinalStatus parse_final_status(std::string_view s);

struct Attempt {
    std::string llm_output;
    QueryProgram program;
    ExecutionOutcome outcome;
    std::optional<std::string> repair_prompt;  // the prompt that produced this attempt, after the first
};

struct RepairTrace {
    std::vector<Annotation> annotations;
    std::vector<RetrievedExemplar> retrieved;
    std::size_t prompt_chars = 0;
    std::vector<Attempt> attempts;
    int k_max = 3;
    FinalStatus final_status = FinalStatus::exhausted;
    std::string backend_error;
};

struct RunResult {
    std::string answer;
    RepairTrace trace;
};

struct PipelineDeps {
    SqlExecutor* executor = nullptr;
    const ExemplarIndex* index = nullptr;
    Embedder* embedder = nullptr;
    const Lexicon* lexicon = nullptr;
    LlmBackend* llm = nullptr;
    TextBackend* text = nullptr;
    int k_max = 3;
    std::size_t top_k = 3;
    PromptConfig prompt;
    ExecutionLimits limits;
    std::vector<TableDescription> descriptions = ehr_schema();
};

/// Called once per stage: "annotations", "retrieval", "prompt", "attempt"
/// (once per attempt) and "answer".
using StageObserver = std::function<void(std::string_view stage, const nlohmann::json& payload)>;

/// First fenced block, else the whole trimmed output, parsed under the
/// supported grammar. Throws SqlSyntaxError.
QueryProgram extract_code(std::string_view llm_output);

/// annotate -> retrieve -> compose -> (generate -> extract -> execute)
/// repeated while attempts < k_max and the last attempt failed.
RunResult run(std::string_view question, const PipelineDeps& deps, const StageObserver& observer = {});

nlohmann::json to_json(const Annotation& a);
nlohmann::json to_json(const ExecutionOutcome& o);
nlohmann::json to_json(const RepairTrace& t);
RepairTrace trace_from_json(const nlohmann::json& j);

}  // namespace ehrq
