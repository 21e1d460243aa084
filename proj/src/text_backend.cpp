#include "ehrq/text_backend.hpp"

#include <algorithm>
#include <array>

#include "ehrq/errors.hpp"
#include "ehrq/schema.hpp"
#include "ehrq/util.hpp"
#include "http_client.hpp"

namespace ehrq {

std::vector<std::pair<std::string, std::vector<std::string>>> split_sections(std::string_view note) {
    std::vector<std::pair<std::string, std::vector<std::string>>> sections;
    for (const auto& raw_line : split(note, '\n')) {
        const std::string line = trim(raw_line);
        if (line.size() > 1 && line.back() == ':') {
            const std::string name = line.substr(0, line.size() - 1);
            const bool header = std::all_of(name.begin(), name.end(), [](char c) {
                return std::isalpha(static_cast<unsigned char>(c)) || c == ' ' || c == '/';
            });
            if (header) {
                sections.emplace_back(to_lower(trim(name)), std::vector<std::string>{});
                continue;
            }
        }
        if (!line.empty() && !sections.empty()) sections.back().second.push_back(line);
    }
    return sections;
}

std::string OfflineTextBackend::section_for(std::string_view question) {
    const std::string q = to_lower(question);
    auto has = [&](std::string_view s) { return q.find(s) != std::string::npos; };
    if (has("allerg")) return "allergies";
    if (has("reason for admission") || has("chief complaint")) return "chief complaint";
    if (has("discharge diagnosis")) return "discharge diagnosis";
    if (has("medication on admission") || has("medications on admission")) return "medications on admission";
    if (has("medication")) return "discharge medications";
    if (has("family history")) return "family history";
    if (has("hospital course")) return "brief hospital course";
    if (has("history of present illness")) return "history of present illness";
    if (has("disposition")) return "discharge disposition";
    if (has("condition") || has("improving")) return "discharge condition";
    if (has("blood test items") || has("admission labs")) return "admission labs";
    return {};
}

std::string OfflineTextBackend::condition_term(std::string_view question) {
    std::string q = to_lower(trim(question));
    while (!q.empty() && (q.back() == '?' || q.back() == '.' || q.back() == ' ')) q.pop_back();
    static const std::array<std::string_view, 5> markers = {"indicate ", "labtest ", "diagnosed with ", "mention ",
                                                            "show "};
    std::size_t best = std::string::npos;
    std::size_t best_len = 0;
    for (auto m : markers) {
        auto pos = q.rfind(m);
        if (pos != std::string::npos && (best == std::string::npos || pos > best)) {
            best = pos;
            best_len = m.size();
        }
    }
    if (best != std::string::npos) return trim(q.substr(best + best_len));
    for (const auto& f : findings_vocabulary())
        if (contains_word(q, f)) return f;
    return {};
}

namespace {

bool is_yes_no(std::string_view q) {
    static const std::array<std::string_view, 10> starts = {"does ", "did ", "is ", "was ", "has ",
                                                            "have ", "do ",  "are ", "were ", "can "};
    return std::any_of(starts.begin(), starts.end(), [&](auto s) { return starts_with_ci(q, s); });
}

bool is_findings_question(std::string_view q) {
    return q.find("findings") != std::string_view::npos &&
           (q.find("what") != std::string_view::npos || q.find("list") != std::string_view::npos);
}

const std::array<std::string_view, 24> kStopwords = {"what", "which", "when", "where", "does", "did", "the",
                                                     "was", "were", "this", "that", "with", "from", "patient",
                                                     "report", "summary", "according", "text", "have", "has",
                                                     "about", "there", "their", "given"};

}  // namespace

std::string OfflineTextBackend::answer(std::string_view text, std::string_view question) {
    const std::string q = to_lower(trim(question));
    const std::string body = to_lower(text);

    if (is_findings_question(q)) {
        std::vector<std::string> found;
        for (const auto& f : findings_vocabulary())
            if (contains_word(body, f)) found.push_back(f);
        return found.empty() ? std::string(kSentinel) : join(found, ", ");
    }
    if (const auto name = section_for(q); !name.empty()) {
        for (const auto& [section, lines] : split_sections(body))
            if (section == name) return lines.empty() ? std::string(kSentinel) : join(lines, "; ");
        return std::string(kSentinel);
    }
    if (is_yes_no(q)) {
        const auto term = condition_term(q);
        return !term.empty() && contains_word(body, term) ? "yes" : "no";
    }

    std::vector<std::string> words;
    for (auto& w : split(q, ' ')) {
        std::string clean;
        for (char c : w)
            if (std::isalnum(static_cast<unsigned char>(c))) clean += c;
        if (clean.size() >= 4 && std::find(kStopwords.begin(), kStopwords.end(), clean) == kStopwords.end())
            words.push_back(clean);
    }
    std::string best;
    std::size_t best_score = 0;
    std::string sentence;
    auto consider = [&] {
        const std::string s = trim(sentence);
        sentence.clear();
        if (s.empty()) return;
        std::size_t score = 0;
        for (const auto& w : words) score += contains_word(s, w) ? 1 : 0;
        if (score > best_score) {
            best_score = score;
            best = s;
        }
    };
    for (char c : body) {
        if (c == '.' || c == '\n') consider();
        else sentence += c;
    }
    consider();
    return best_score > 0 ? best : std::string(kSentinel);
}

HttpTextBackend::HttpTextBackend(std::string url, std::string api_key, int max_retries)
    : url_(std::move(url)), api_key_(std::move(api_key)), max_retries_(max_retries) {}

std::string HttpTextBackend::answer(std::string_view text, std::string_view question) {
    auto reply = detail::post_json(url_, {{"text", std::string(text)}, {"question", std::string(question)}}, api_key_,
                                   max_retries_);
    if (!reply.contains("text") || !reply["text"].is_string())
        throw BackendError("text backend reply lacks a 'text' string");
    return reply["text"].get<std::string>();
}

std::string text_func(std::string_view text, std::string_view question, TextBackend& backend) {
    if (trim(text).empty()) throw BackendError("text_func called with empty text");
    return to_lower(trim(backend.answer(text, question)));
}

}  // namespace ehrq
