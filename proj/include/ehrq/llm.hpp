#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <mutex>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/lexicon.hpp"
#include "ehrq/templates.hpp"

namespace ehrq {

/// Prompt in, completion out. Implementations behave as temperature 0.
class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string generate(const std::string& prompt) = 0;
    virtual std::string identity() const = 0;
};

/// Replays a fixed reply sequence; the last reply repeats once the list runs
/// out. An entry "!error" throws BackendError instead of replying.
class ScriptedBackend final : public LlmBackend {
public:
    explicit ScriptedBackend(std::vector<std::string> replies);
    /// {"replies": [...]} or a bare JSON array.
    static std::unique_ptr<ScriptedBackend> from_file(const std::filesystem::path& file);

    std::string generate(const std::string& prompt) override;
    std::string identity() const override { return "scripted/" + std::to_string(replies_.size()); }
    std::size_t calls() const;
    const std::vector<std::string>& prompts() const { return prompts_; }

private:
    std::vector<std::string> replies_;
    std::vector<std::string> prompts_;
    std::size_t next_ = 0;
    mutable std::mutex mutex_;
};

/// POST {prompt, max_tokens, temperature: 0[, model]} -> {text}.
class HttpLlmBackend final : public LlmBackend {
public:
    HttpLlmBackend(std::string url, std::string api_key, std::string model = {}, int max_tokens = 1024,
                   int max_retries = 2);
    std::string generate(const std::string& prompt) override;
    std::string identity() const override { return "http-llm:" + url_ + (model_.empty() ? "" : "#" + model_); }

private:
    std::string url_, api_key_, model_;
    int max_tokens_, max_retries_;
};

/// Offline stand-in for a code model. Reads the question out of the prompt,
/// matches it against every template variant (slots become capture groups),
/// maps captured phrases back to raw values (display maps, then the lexicon)
/// and renders that template's query. The most specific match wins. With no
/// match it returns the top retrieved exemplar's query with the question's
/// patient and admission ids swapped in.
class TemplateGroundedBackend final : public LlmBackend {
public:
    TemplateGroundedBackend(const TemplateBank& bank, const Lexicon& lexicon);
    std::string generate(const std::string& prompt) override;
    std::string identity() const override { return "offline-template-grounded/1"; }

    struct Match {
        const QuestionTemplate* tmpl = nullptr;
        Bindings bindings;
        QueryProgram program;
        std::size_t literal_chars = 0;
    };
    std::optional<Match> match(std::string_view question) const;

private:
    struct Pattern {
        const QuestionTemplate* tmpl;
        std::regex re;
        std::vector<std::string> groups;  // slot name per capture group
        std::size_t literal_chars;
    };
    const Lexicon& lexicon_;
    std::vector<Pattern> patterns_;
};

/// Judge prompt with the rubric and the three texts in marked sections.
std::string judge_prompt(std::string_view question, std::string_view reference, std::string_view prediction);

/// Offline judge: 10 when the normalized answers are equal; 1 when the
/// prediction is empty or exactly one side is the sentinel; otherwise
/// 2 + round(7 * F1) over lowercase alphanumeric tokens.
class OfflineJudgeBackend final : public LlmBackend {
public:
    std::string generate(const std::string& prompt) override;
    std::string identity() const override { return "offline-judge/1"; }
    static int score(std::string_view reference, std::string_view prediction);
};

/// Extracts "```sql ... ```" contents (the first fenced block, any info
/// string), or the whole trimmed output when there is no fence.
std::string extract_fenced(std::string_view llm_output);

}  // namespace ehrq
