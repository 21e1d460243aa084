#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace ehrq {

/// Fixed reply for questions the data cannot answer.
inline constexpr std::string_view kSentinel = "No corresponding information found";

/// Answers a question about one long text (a report or a summary).
class TextBackend {
public:
    virtual ~TextBackend() = default;
    virtual std::string answer(std::string_view text, std::string_view question) = 0;
    virtual std::string identity() const = 0;
};

/// Deterministic offline reader.
///
/// Section questions ("what was the discharge diagnosis?") return the body of
/// the matching section, lines joined with "; ". Finding-list questions
/// return the findings vocabulary terms present in the text. Yes/no questions
/// answer "yes" iff the condition term occurs as a whole word. Anything else
/// returns the best keyword-matching sentence or the sentinel.
class OfflineTextBackend final : public TextBackend {
public:
    std::string answer(std::string_view text, std::string_view question) override;
    std::string identity() const override { return "offline-keyword-section/1"; }

    /// The term a yes/no question asks about, e.g. "effusion" for
    /// "...indicate effusion?"; empty when none is found.
    static std::string condition_term(std::string_view question);
    /// Section name a question routes to, empty when none matches.
    static std::string section_for(std::string_view question);
};

/// POST {text, question} -> {text}.
class HttpTextBackend final : public TextBackend {
public:
    HttpTextBackend(std::string url, std::string api_key, int max_retries = 2);
    std::string answer(std::string_view text, std::string_view question) override;
    std::string identity() const override { return "http-text:" + url_; }

private:
    std::string url_;
    std::string api_key_;
    int max_retries_;
};

/// Splits a note into lowercase section name -> body lines. A section header
/// is a line consisting of a name followed by ':' and nothing else.
std::vector<std::pair<std::string, std::vector<std::string>>> split_sections(std::string_view note);

/// The tool: backend answer lowercased and trimmed. Empty text or a backend
/// failure throws BackendError.
std::string text_func(std::string_view text, std::string_view question, TextBackend& backend);

}  // namespace ehrq
