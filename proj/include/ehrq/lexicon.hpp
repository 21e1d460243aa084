#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/database.hpp"

namespace ehrq {

enum class TermDomain { labtest, drug, diagnosis, finding, microbiology };
std::string_view to_string(TermDomain d);
TermDomain parse_term_domain(std::string_view s);

struct TermEntry {
    std::string canonical;
    std::vector<std::string> synonyms;
    TermDomain domain = TermDomain::labtest;
};

/// Curated synonym table. Canonicals are lowercase; no surface form belongs
/// to two entries.
class Lexicon {
public:
    Lexicon() = default;
    explicit Lexicon(std::vector<TermEntry> entries);  // ValidationError

    const std::vector<TermEntry>& entries() const { return entries_; }
    /// Entry for a lowercase surface form, or nullptr.
    const TermEntry* find(std::string_view surface) const;
    /// Surface forms, longest first.
    const std::vector<std::string>& surfaces() const { return surfaces_; }

private:
    std::vector<TermEntry> entries_;
    std::map<std::string, std::size_t, std::less<>> by_surface_;
    std::vector<std::string> surfaces_;
};

Lexicon parse_lexicon(std::string_view json_text);
Lexicon load_lexicon(const std::filesystem::path& file);
std::filesystem::path default_lexicon_path();

/// Canonical form of a term; unknown terms come back lowercased.
std::string normalize(std::string_view term, const Lexicon& lexicon);

struct Annotation {
    std::size_t start = 0;  // byte offsets into the question, [start, end)
    std::size_t end = 0;
    std::string surface;
    std::string canonical;
    TermDomain domain = TermDomain::labtest;

    bool operator==(const Annotation&) const = default;
};

/// Greedy left-to-right scan taking the longest surface form that starts and
/// ends on a word boundary.
std::vector<Annotation> annotate(std::string_view question, const Lexicon& lexicon);

struct ValueRef {
    std::string table;
    std::string column;
    std::string value;

    bool operator==(const ValueRef&) const = default;
};

/// Where a domain's canonical values live, e.g. labtest -> d_labitems.label.
/// Findings live in the report vocabulary: {"findings_vocabulary", "term"}.
ValueRef domain_column(TermDomain domain);

/// Exact matches first, then values containing the canonical term
/// (case-folded). Distinct, in first-seen order.
std::vector<ValueRef> map_to_value(std::string_view canonical, TermDomain domain, const Database& db);

}  // namespace ehrq
