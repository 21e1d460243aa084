#include "ehrq/prompt.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include "ehrq/errors.hpp"
#include "ehrq/sql.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

namespace {

constexpr std::string_view kToolDoc =
    "text_func(text, question) -> text\n"
    "Reads one long text and answers a question about it. The first argument is either a report path "
    "(cxr_record_list.path, values starting with \"notes/\") or a free-text column (discharge.text). The second "
    "argument must be a quoted string literal. The answer is lowercase: \"yes\"/\"no\" for yes/no questions, the "
    "section body for section questions, a comma-separated list for findings questions, or \"no corresponding "
    "information found\" when the text has no answer.";

std::string instructions_text(const PromptConfig& config) {
    std::string p;
    p += "You write one read-only " + config.dialect + " SELECT statement that answers the question.\n";
    p += "- Only generate code for the question; do not explain it.\n";
    p += "- Wrap the statement in a fenced block: ```sql ... ```.\n";
    p += "- Answer lab test, medication, diagnosis and other structured questions from the tables.\n";
    p += "- Answer chest x-ray report and discharge summary questions with text_func over the report path or the "
         "discharge text.\n";
    p += "- Use the canonical terms from the medical knowledge section as literal values; string values are "
         "lowercase except gender ('F'/'M').\n";
    p += "- labevents_merged, diagnoses_merged and procedures_merged already join the dictionary tables.\n";
    p += "- If the data holds no answer, the query should return no rows; the system then replies \"No "
         "corresponding information found\".\n";
    return p;
}

std::string render_exemplars(const std::vector<RetrievedExemplar>& ex) {
    if (ex.empty()) return "none retrieved\n";
    std::string out;
    for (std::size_t i = 0; i < ex.size(); ++i) {
        char sim[32];
        std::snprintf(sim, sizeof sim, "%.4f", ex[i].similarity);
        out += "Q: " + ex[i].question + "\nSQL: " + ex[i].query + "\n(similarity " + sim + ")\n";
        if (i + 1 < ex.size()) out += "\n";
    }
    return out;
}

std::string render_knowledge(std::string_view question, const std::vector<Annotation>& annotations) {
    std::string m;
    if (annotations.empty()) {
        m += std::string(kNoMappings) + "\n";
    } else {
        for (const auto& a : annotations) {
            const auto where = domain_column(a.domain);
            m += "- \"" + a.surface + "\" means \"" + a.canonical + "\" (" + std::string(to_string(a.domain)) + "; " +
                 where.table + "." + where.column + " = '" + a.canonical + "')\n";
        }
    }
    const auto e = extract_entities(question, annotations);
    std::vector<std::string> parts;
    if (e.patient_id) parts.push_back("patient_id = " + *e.patient_id);
    if (e.admission_id) parts.push_back("admission_id = " + *e.admission_id);
    if (e.condition) parts.push_back("condition = " + *e.condition);
    if (e.study) parts.push_back("study = " + *e.study);
    if (!parts.empty()) m += "entities: " + join(parts, ", ") + "\n";
    return m;
}

std::set<std::string> exemplar_tables(const std::vector<RetrievedExemplar>& ex) {
    std::set<std::string> out;
    for (const auto& e : ex) {
        try {
            for (auto& t : sql::referenced_tables(sql::parse(e.query))) out.insert(t);
        } catch (const SqlSyntaxError&) {
        }
    }
    // Merged views depend on their base tables.
    for (const auto& v : merged_views())
        if (out.count(v.name)) {
            out.insert(v.child);
            out.insert(v.parent);
        }
    return out;
}

std::string render_views() {
    std::string out = "Merged views:\n";
    for (const auto& v : merged_views())
        out += "- " + v.name + ": " + v.child + " joined with " + v.parent + " on " + join(v.keys, ", ") + "; adds " +
               join(v.parent_columns, ", ") + "\n";
    return out;
}

}  // namespace

std::string render_table_description(const TableDescription& t) {
    std::string out = "Table " + t.table_name + " (" + t.file_path + "): " + t.summary + "\n";
    for (const auto& c : t.columns)
        out += "- " + c.name + " [" + std::string(to_string(c.semantic_type)) + (c.nullable ? ", nullable" : "") +
               "]: " + c.description + "\n";
    return out;
}

std::string PromptBundle::render() const {
    std::string out;
    out += std::string(kMarkerTables) + "\n" + table_descriptions + "\n";
    out += std::string(kMarkerKnowledge) + "\n" + knowledge + "\n";
    out += std::string(kMarkerInstructions) + "\n" + instructions + "\n";
    out += std::string(kMarkerExemplars) + "\n" + render_exemplars(exemplars) + "\n";
    out += std::string(kMarkerTools) + "\n" + toolset_doc + "\n\n";
    out += std::string(kMarkerQuestion) + "\n" + question + "\n";
    return out;
}

PromptBundle compose(std::string_view question, const std::vector<TableDescription>& descriptions,
                     const std::vector<Annotation>& annotations, const std::vector<RetrievedExemplar>& exemplars,
                     const PromptConfig& config) {
    PromptBundle b;
    b.knowledge = render_knowledge(question, annotations);
    b.instructions = instructions_text(config);
    b.exemplars = exemplars;
    b.question = std::string(question);
    b.toolset_doc = std::string(kToolDoc);

    const auto needed = exemplar_tables(exemplars);
    for (const auto& t : needed)
        if (is_ehr_table(t) && std::none_of(descriptions.begin(), descriptions.end(),
                                            [&](const TableDescription& d) { return d.table_name == t; }))
            throw CompositionError("table descriptions do not cover exemplar table " + t);

    std::vector<const TableDescription*> kept;
    for (const auto& d : descriptions) kept.push_back(&d);
    auto render_c = [&] {
        std::string c;
        for (const auto* d : kept) c += render_table_description(*d);
        return c + render_views();
    };
    b.table_descriptions = render_c();
    // Drop unreferenced tables from the end until the prompt fits.
    for (auto i = kept.size(); i-- > 0 && b.render().size() > config.budget_chars;) {
        if (needed.count(kept[i]->table_name)) continue;
        b.dropped_tables.push_back(kept[i]->table_name);
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(i));
        b.table_descriptions = render_c();
    }
    const auto total = b.render().size();
    if (total > config.budget_chars)
        throw CompositionError("prompt of " + std::to_string(total) + " chars exceeds budget " +
                               std::to_string(config.budget_chars) + " (C=" + std::to_string(b.table_descriptions.size()) +
                               ", M=" + std::to_string(b.knowledge.size()) + ", P=" +
                               std::to_string(b.instructions.size()) +
                               ", exemplars=" + std::to_string(render_exemplars(b.exemplars).size()) +
                               ", question=" + std::to_string(b.question.size()) +
                               ", tools=" + std::to_string(b.toolset_doc.size()) + ")");
    return b;
}

std::string repair_prompt(const PromptBundle& bundle, std::string_view failed_sql, const ErrorInfo& error) {
    std::string out = bundle.render();
    out += "\n" + std::string(kMarkerFailedQuery) + "\n" + std::string(failed_sql) + "\n\n";
    out += std::string(kMarkerError) + "\n" + std::string(to_string(error.kind)) + ": " + error.message;
    if (error.position) out += " (at offset " + std::to_string(*error.position) + ")";
    out += "\nFix the query so it runs, and return it in a fenced block.\n";
    return out;
}

EntityExtraction extract_entities(std::string_view question, const std::vector<Annotation>& annotations) {
    EntityExtraction e;
    const std::string q(question);
    static const std::regex patient(R"(\bpatient\s+(\d+))", std::regex::icase);
    static const std::regex admission(R"(\badmission\s+(\d+))", std::regex::icase);
    static const std::regex study(R"(\bstudy\s+(\d+))", std::regex::icase);
    std::smatch m;
    if (std::regex_search(q, m, patient)) e.patient_id = m[1].str();
    if (std::regex_search(q, m, admission)) e.admission_id = m[1].str();
    if (std::regex_search(q, m, study)) e.study = m[1].str();
    for (const auto& a : annotations)
        if (a.domain == TermDomain::finding) {
            e.condition = a.canonical;
            break;
        }
    return e;
}

std::string tool_prompt(const EntityExtraction& extraction) {
    if (!extraction.condition || extraction.condition->empty())
        throw CompositionError("tool prompt needs a condition");
    std::string out = "does the chest x-ray report";
    if (extraction.patient_id) out += " of patient " + *extraction.patient_id;
    if (extraction.admission_id) out += " in admission " + *extraction.admission_id;
    out += " indicate " + *extraction.condition + "?";
    return to_lower(out);
}

std::string prompt_section(std::string_view prompt, std::string_view marker) {
    std::size_t pos = 0;
    while (true) {
        pos = prompt.find(marker, pos);
        if (pos == std::string_view::npos) return {};
        if (pos == 0 || prompt[pos - 1] == '\n') break;
        pos += marker.size();
    }
    auto start = prompt.find('\n', pos);
    if (start == std::string_view::npos) return {};
    ++start;
    std::size_t end = start;
    while (end < prompt.size()) {
        if (prompt.compare(end, 4, "### ") == 0) break;
        const auto nl = prompt.find('\n', end);
        if (nl == std::string_view::npos) {
            end = prompt.size();
            break;
        }
        end = nl + 1;
    }
    return trim(prompt.substr(start, end - start));
}

}  // namespace ehrq
