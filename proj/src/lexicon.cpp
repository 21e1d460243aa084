#include "ehrq/lexicon.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

std::string_view to_string(TermDomain d) {
    switch (d) {
        case TermDomain::labtest: return "labtest";
        case TermDomain::drug: return "drug";
        case TermDomain::diagnosis: return "diagnosis";
        case TermDomain::finding: return "finding";
        case TermDomain::microbiology: return "microbiology";
    }
    return "labtest";
}

TermDomain parse_term_domain(std::string_view s) {
    for (auto d : {TermDomain::labtest, TermDomain::drug, TermDomain::diagnosis, TermDomain::finding,
                   TermDomain::microbiology})
        if (to_string(d) == s) return d;
    throw ValidationError("unknown term domain: " + std::string(s));
}

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; }

std::string surface_key(std::string_view s) { return collapse_whitespace(to_lower(trim(s))); }

}  // namespace

Lexicon::Lexicon(std::vector<TermEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        if (e.canonical.empty() || has_upper(e.canonical) || surface_key(e.canonical) != e.canonical)
            throw ValidationError("lexicon: canonical term must be lowercase and trimmed: '" + e.canonical + "'");
        std::vector<std::string> forms{e.canonical};
        for (const auto& s : e.synonyms) forms.push_back(surface_key(s));
        for (const auto& f : forms) {
            if (f.empty()) throw ValidationError("lexicon: empty synonym under '" + e.canonical + "'");
            auto [it, inserted] = by_surface_.emplace(f, i);
            if (!inserted && it->second != i)
                throw ValidationError("lexicon: surface '" + f + "' belongs to both '" + entries_[it->second].canonical +
                                      "' and '" + e.canonical + "'");
        }
    }
    for (const auto& [s, i] : by_surface_) surfaces_.push_back(s);
    std::stable_sort(surfaces_.begin(), surfaces_.end(),
                     [](const std::string& a, const std::string& b) { return a.size() > b.size(); });
}

const TermEntry* Lexicon::find(std::string_view surface) const {
    auto it = by_surface_.find(surface);
    return it == by_surface_.end() ? nullptr : &entries_[it->second];
}

Lexicon parse_lexicon(std::string_view json_text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(json_text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("lexicon file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("version", "") != "tqgen-lexicon/1")
        throw ValidationError("lexicon file must be an object with version \"tqgen-lexicon/1\"");
    std::vector<TermEntry> entries;
    try {
        for (const auto& j : doc.at("entries")) {
            TermEntry e;
            e.canonical = j.at("canonical").get<std::string>();
            e.domain = parse_term_domain(j.at("domain").get<std::string>());
            e.synonyms = j.value("synonyms", std::vector<std::string>{});
            entries.push_back(std::move(e));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("lexicon entry malformed: ") + e.what());
    }
    return Lexicon(std::move(entries));
}

Lexicon load_lexicon(const std::filesystem::path& file) {
    std::string text;
    try {
        text = read_file(file.string());
    } catch (const std::exception& e) {
        throw LoadError("cannot read lexicon " + file.string() + ": " + e.what());
    }
    return parse_lexicon(text);
}

std::filesystem::path default_lexicon_path() { return std::filesystem::path(EHRQ_DATA_DIR) / "lexicon.json"; }

std::string normalize(std::string_view term, const Lexicon& lexicon) {
    if (const auto* e = lexicon.find(surface_key(term))) return e->canonical;
    return to_lower(term);
}

std::vector<Annotation> annotate(std::string_view question, const Lexicon& lexicon) {
    const std::string lower = to_lower(question);
    std::vector<Annotation> out;
    std::size_t i = 0;
    while (i < lower.size()) {
        const bool at_start = is_word_char(lower[i]) && (i == 0 || !is_word_char(lower[i - 1]));
        if (!at_start) {
            ++i;
            continue;
        }
        const std::string* hit = nullptr;
        for (const auto& s : lexicon.surfaces()) {
            const std::size_t end = i + s.size();
            if (end > lower.size() || lower.compare(i, s.size(), s) != 0) continue;
            if (end < lower.size() && is_word_char(lower[end]) && is_word_char(s.back())) continue;
            hit = &s;
            break;  // surfaces are longest first
        }
        if (!hit) {
            ++i;
            continue;
        }
        const auto* e = lexicon.find(*hit);
        out.push_back({i, i + hit->size(), std::string(question.substr(i, hit->size())), e->canonical, e->domain});
        i += hit->size();
    }
    return out;
}

ValueRef domain_column(TermDomain domain) {
    switch (domain) {
        case TermDomain::labtest: return {"d_labitems", "label", ""};
        case TermDomain::drug: return {"prescriptions", "drug", ""};
        case TermDomain::diagnosis: return {"d_icd_diagnoses", "long_title", ""};
        case TermDomain::microbiology: return {"microbiology", "test_name", ""};
        case TermDomain::finding: return {"findings_vocabulary", "term", ""};
    }
    return {};
}

std::vector<ValueRef> map_to_value(std::string_view canonical, TermDomain domain, const Database& db) {
    const ValueRef where = domain_column(domain);
    const std::string needle = to_lower(trim(canonical));
    std::vector<std::string> values;
    if (domain == TermDomain::finding) {
        values = findings_vocabulary();
    } else {
        auto it = db.tables.find(where.table);
        if (it == db.tables.end()) return {};
        const auto col = it->second.require_column(where.column);
        std::set<std::string> seen;
        for (const auto& row : it->second.rows) {
            const auto* s = std::get_if<std::string>(&row[col]);
            if (s && seen.insert(*s).second) values.push_back(*s);
        }
    }
    std::vector<ValueRef> exact, partial;
    if (needle.empty()) return {};
    for (const auto& v : values) {
        const std::string folded = to_lower(v);
        if (folded == needle) exact.push_back({where.table, where.column, v});
        else if (folded.find(needle) != std::string::npos) partial.push_back({where.table, where.column, v});
    }
    exact.insert(exact.end(), partial.begin(), partial.end());
    return exact;
}

}  // namespace ehrq
