#include "ehrq/llm.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ehrq/errors.hpp"
#include "ehrq/prompt.hpp"
#include "ehrq/text_backend.hpp"
#include "ehrq/util.hpp"
#include "http_client.hpp"

namespace ehrq {

ScriptedBackend::ScriptedBackend(std::vector<std::string> replies) : replies_(std::move(replies)) {
    if (replies_.empty()) throw ConfigError("scripted backend needs at least one reply");
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::filesystem::path& file) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(file.string()));
    } catch (const std::exception& e) {
        throw LoadError("cannot read scripted replies " + file.string() + ": " + e.what());
    }
    if (j.is_object()) j = j.value("replies", nlohmann::json::array());
    if (!j.is_array()) throw LoadError("scripted replies must be an array");
    return std::make_unique<ScriptedBackend>(j.get<std::vector<std::string>>());
}

std::string ScriptedBackend::generate(const std::string& prompt) {
    std::lock_guard lock(mutex_);
    prompts_.push_back(prompt);
    const auto& reply = replies_[std::min(next_, replies_.size() - 1)];
    ++next_;
    if (reply == "!error") throw BackendError("scripted backend failure", 1);
    return reply;
}

std::size_t ScriptedBackend::calls() const {
    std::lock_guard lock(mutex_);
    return next_;
}

HttpLlmBackend::HttpLlmBackend(std::string url, std::string api_key, std::string model, int max_tokens, int max_retries)
    : url_(std::move(url)), api_key_(std::move(api_key)), model_(std::move(model)), max_tokens_(max_tokens),
      max_retries_(max_retries) {}

std::string HttpLlmBackend::generate(const std::string& prompt) {
    nlohmann::json body{{"prompt", prompt}, {"max_tokens", max_tokens_}, {"temperature", 0}};
    if (!model_.empty()) body["model"] = model_;
    auto reply = detail::post_json(url_, body, api_key_, max_retries_);
    if (!reply.contains("text") || !reply["text"].is_string()) throw BackendError("llm reply lacks a 'text' string");
    return reply["text"].get<std::string>();
}

namespace {

std::string regex_escape(std::string_view s) {
    static const std::string special = R"(\^$.|?*+()[]{}/)";
    std::string out;
    bool in_space = false;
    for (char c : s) {
        if (c == ' ') {
            if (!in_space) out += R"(\s+)";
            in_space = true;
            continue;
        }
        in_space = false;
        if (special.find(c) != std::string::npos) out += '\\';
        out += c;
    }
    return out;
}

std::string strip_end(std::string_view s) {
    std::string t = trim(s);
    while (!t.empty() && (t.back() == '?' || t.back() == '.' || t.back() == '!' || t.back() == ' ')) t.pop_back();
    return t;
}

std::string slot_pattern(const SlotSpec& s) {
    std::vector<std::string> alts;
    for (const auto& [raw, shown] : s.display) alts.push_back(shown);
    for (const auto& v : s.values) alts.push_back(s.display_of(v));
    if (!alts.empty() && (s.source == "enum" || !s.display.empty())) {
        // Longest alternatives first so "second" is not cut to "sec...".
        std::sort(alts.begin(), alts.end(), [](const auto& a, const auto& b) { return a.size() > b.size(); });
        alts.erase(std::unique(alts.begin(), alts.end()), alts.end());
        std::string p = "(";
        for (std::size_t i = 0; i < alts.size(); ++i) p += (i ? "|" : "") + regex_escape(alts[i]);
        return p + ")";
    }
    switch (s.type) {
        case SlotType::integer: return R"((-?\d+))";
        case SlotType::real: return R"((-?\d+(?:\.\d+)?))";
        default: return "(.+?)";
    }
}

}  // namespace

TemplateGroundedBackend::TemplateGroundedBackend(const TemplateBank& bank, const Lexicon& lexicon) : lexicon_(lexicon) {
    for (const auto& t : bank.templates()) {
        for (const auto& variant : t.variants) {
            const std::string v = strip_end(variant);
            std::string re = "^";
            std::vector<std::string> groups;
            std::size_t literal = 0;
            std::size_t i = 0;
            while (i < v.size()) {
                const auto open = v.find('{', i);
                const auto close = open == std::string::npos ? std::string::npos : v.find('}', open);
                const SlotSpec* s = close == std::string::npos ? nullptr : t.slot(v.substr(open + 1, close - open - 1));
                if (!s) {
                    const auto stop = open == std::string::npos ? v.size() : open + 1;
                    re += regex_escape(v.substr(i, stop - i));
                    literal += stop - i;
                    i = stop;
                    continue;
                }
                re += regex_escape(v.substr(i, open - i));
                literal += open - i;
                re += slot_pattern(*s);
                groups.push_back(s->name);
                i = close + 1;
            }
            re += "$";
            patterns_.push_back({&t, std::regex(re, std::regex::icase | std::regex::ECMAScript), groups, literal});
        }
    }
}

std::optional<TemplateGroundedBackend::Match> TemplateGroundedBackend::match(std::string_view question) const {
    const std::string q = collapse_whitespace(strip_end(question));
    std::optional<Match> best;
    for (const auto& p : patterns_) {
        if (best && p.literal_chars <= best->literal_chars) continue;
        std::smatch m;
        if (!std::regex_match(q, m, p.re)) continue;
        Bindings b;
        bool ok = true;
        for (std::size_t g = 0; g < p.groups.size() && ok; ++g) {
            const SlotSpec& s = *p.tmpl->slot(p.groups[g]);
            const std::string captured = trim(m[static_cast<int>(g + 1)].str());
            std::string raw;
            bool found = false;
            for (const auto& [r, shown] : s.display)
                if (to_lower(shown) == to_lower(captured)) {
                    raw = r;
                    found = true;
                }
            for (const auto& v : s.values)
                if (!found && to_lower(v) == to_lower(captured)) {
                    raw = v;
                    found = true;
                }
            if (!found) {
                if (s.source == "enum" && s.type == SlotType::keyword) ok = false;
                raw = s.type == SlotType::text ? normalize(captured, lexicon_) : captured;
                if (s.source == "enum" && std::find(s.values.begin(), s.values.end(), raw) == s.values.end()) ok = false;
            }
            if (auto it = b.find(s.name); it != b.end() && it->second != raw) ok = false;
            b[s.name] = raw;
        }
        if (!ok) continue;
        try {
            Match candidate{p.tmpl, b, render_gold_query(*p.tmpl, b), p.literal_chars};
            best = std::move(candidate);
        } catch (const RenderError&) {
        }
    }
    return best;
}

std::string TemplateGroundedBackend::generate(const std::string& prompt) {
    const std::string question = prompt_section(prompt, kMarkerQuestion);
    if (auto m = match(question)) return "```sql\n" + m->program.sql_text + "\n```";
    // No template phrasing fits: adapt the nearest exemplar by swapping its
    // patient / admission ids for the question's.
    const auto wanted = extract_entities(question, {});
    const std::string ex = prompt_section(prompt, kMarkerExemplars);
    std::string ex_question;
    for (const auto& line : split(ex, '\n')) {
        if (starts_with_ci(line, "Q: ")) ex_question = line.substr(3);
        if (!starts_with_ci(line, "SQL: ")) continue;
        std::string sql = trim(line.substr(5));
        const auto had = extract_entities(ex_question, {});
        auto swap = [&](const std::optional<std::string>& from, const std::optional<std::string>& to) {
            if (!from || !to || *from == *to) return;
            const std::regex id("\\b" + *from + "\\b");
            sql = std::regex_replace(sql, id, *to);
        };
        swap(had.patient_id, wanted.patient_id);
        swap(had.admission_id, wanted.admission_id);
        return "```sql\n" + sql + "\n```";
    }
    return "```sql\nselect null where 0\n```";
}

std::string judge_prompt(std::string_view question, std::string_view reference, std::string_view prediction) {
    std::string p;
    p += "### RUBRIC\n";
    p += "Rate how well the prediction answers the question compared with the reference answer, on an integer "
         "scale from 1 to 10. 10: same meaning as the reference. 5: partially correct or incomplete. 1: wrong, "
         "empty, or claims no information when the reference has an answer (or the reverse). Reply with the "
         "number only.\n";
    p += "### QUESTION\n" + std::string(question) + "\n";
    p += "### REFERENCE\n" + std::string(reference) + "\n";
    p += "### PREDICTION\n" + std::string(prediction) + "\n";
    return p;
}

namespace {

std::vector<std::string> tokens(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

}  // namespace

int OfflineJudgeBackend::score(std::string_view reference, std::string_view prediction) {
    const std::string ref = collapse_whitespace(to_lower(trim(reference)));
    const std::string pred = collapse_whitespace(to_lower(trim(prediction)));
    if (ref == pred) return 10;
    if (pred.empty() || is_sentinel(ref) != is_sentinel(pred)) return 1;
    const auto rt = tokens(ref), pt = tokens(pred);
    const std::set<std::string> rs(rt.begin(), rt.end()), ps(pt.begin(), pt.end());
    std::size_t common = 0;
    for (const auto& t : ps) common += rs.count(t);
    double f1 = 0.0;
    if (common > 0) {
        const double precision = static_cast<double>(common) / static_cast<double>(ps.size());
        const double recall = static_cast<double>(common) / static_cast<double>(rs.size());
        f1 = 2 * precision * recall / (precision + recall);
    }
    return 2 + static_cast<int>(std::lround(7.0 * f1));
}

std::string OfflineJudgeBackend::generate(const std::string& prompt) {
    return std::to_string(score(prompt_section(prompt, "### REFERENCE"), prompt_section(prompt, "### PREDICTION")));
}

std::string extract_fenced(std::string_view out) {
    const auto open = out.find("```");
    if (open == std::string_view::npos) return trim(out);
    auto body = out.find('\n', open);
    if (body == std::string_view::npos) return trim(out.substr(open + 3));
    ++body;
    const auto close = out.find("```", body);
    return trim(out.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

}  // namespace ehrq
