#include "ehrq/templates.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>

#include "json.hpp"

#include "ehrq/errors.hpp"
#include "ehrq/text_backend.hpp"

namespace ehrq {

using nlohmann::json;

std::string_view to_string(Modality m) {
    switch (m) {
        case Modality::table: return "table";
        case Modality::cxr_report: return "cxr_report";
        case Modality::discharge: return "discharge";
    }
    return "table";
}

std::string_view to_string(AnswerMode m) {
    switch (m) {
        case AnswerMode::scalar: return "scalar";
        case AnswerMode::list: return "list";
        case AnswerMode::text: return "text";
    }
    return "scalar";
}

std::string_view to_string(Level l) { return l == Level::I ? "I" : "II"; }

Modality parse_modality(std::string_view s) {
    if (s == "table") return Modality::table;
    if (s == "cxr_report" || s == "cxr") return Modality::cxr_report;
    if (s == "discharge") return Modality::discharge;
    throw ValidationError("unknown modality: " + std::string(s));
}

AnswerMode parse_answer_mode(std::string_view s) {
    if (s == "scalar") return AnswerMode::scalar;
    if (s == "list") return AnswerMode::list;
    if (s == "text") return AnswerMode::text;
    throw ValidationError("unknown answer_mode: " + std::string(s));
}

Level parse_level(std::string_view s) {
    if (s == "I" || s == "1") return Level::I;
    if (s == "II" || s == "2") return Level::II;
    throw ValidationError("unknown level: " + std::string(s));
}

std::string SlotSpec::display_of(const std::string& raw) const {
    auto it = display.find(raw);
    return it == display.end() ? raw : it->second;
}

const SlotSpec* QuestionTemplate::slot(std::string_view name) const {
    for (const auto& s : slots)
        if (s.name == name) return &s;
    return nullptr;
}

bool QuestionTemplate::population_level() const { return slot("subject_id") == nullptr; }

std::vector<std::string> placeholders(std::string_view text) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{') continue;
        const auto end = text.find('}', i);
        if (end == std::string_view::npos) break;
        const auto name = text.substr(i + 1, end - i - 1);
        const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
            return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        });
        if (ident) {
            out.emplace_back(name);
            i = end;
        }
    }
    return out;
}

namespace {

std::string slot_list(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    return "{" + join(v, ", ") + "}";
}

bool is_integer(std::string_view s) {
    if (s.empty()) return false;
    std::size_t i = s[0] == '-' ? 1 : 0;
    if (i == s.size()) return false;
    return std::all_of(s.begin() + static_cast<std::ptrdiff_t>(i), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_real(std::string_view s) {
    double v;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && p == s.data() + s.size();
}

std::string sample_value(const SlotSpec& s) {
    if (!s.values.empty()) return s.values.front();
    switch (s.type) {
        case SlotType::integer: return "1";
        case SlotType::real: return "1.5";
        default: return "x";
    }
}

SlotType parse_slot_type(std::string_view s, const std::string& where) {
    if (s == "int" || s == "integer") return SlotType::integer;
    if (s == "real") return SlotType::real;
    if (s == "text") return SlotType::text;
    if (s == "keyword") return SlotType::keyword;
    throw ValidationError(where + ": unknown slot type " + std::string(s));
}

// Substitutes placeholders; `value` yields the text to splice for a name and
// whether the position is inside a quoted literal.
template <class F>
std::string substitute(std::string_view text, F&& value) {
    std::string out;
    bool in_literal = false;
    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (c == '\'') {
            in_literal = !in_literal;  // '' toggles twice, which is right
            out += c;
            continue;
        }
        if (c == '{') {
            const auto end = text.find('}', i);
            if (end != std::string_view::npos) {
                const auto name = text.substr(i + 1, end - i - 1);
                if (!name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
                        return (ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '_';
                    })) {
                    out += value(std::string(name), in_literal);
                    i = end;
                    continue;
                }
            }
        }
        out += c;
    }
    return out;
}

std::string escape_literal(std::string_view raw) {
    std::string out;
    for (char c : raw) {
        out += c;
        if (c == '\'') out += '\'';
    }
    return out;
}

}  // namespace

void validate_template(const QuestionTemplate& t) {
    const std::string where = "template " + (t.template_id.empty() ? std::string("<unnamed>") : t.template_id);
    if (t.template_id.empty()) throw ValidationError(where + ": empty template_id");
    if (t.variants.empty()) throw ValidationError(where + ": no variants");
    std::set<std::string> slot_names;
    for (const auto& s : t.slots) {
        if (!slot_names.insert(s.name).second) throw ValidationError(where + ": duplicate slot " + s.name);
        if (s.source != "sampler" && s.source != "enum")
            throw ValidationError(where + ": slot " + s.name + " has unknown source " + s.source);
        if (s.source == "enum" && s.values.empty())
            throw ValidationError(where + ": enum slot " + s.name + " has no values");
        if (s.type == SlotType::keyword && s.values.empty())
            throw ValidationError(where + ": keyword slot " + s.name + " must list its values");
        if (s.source == "sampler" && t.sampler.empty())
            throw ValidationError(where + ": slot " + s.name + " needs a sampler query");
    }
    auto canonical = placeholders(t.canonical_text);
    std::sort(canonical.begin(), canonical.end());
    const std::set<std::string> canonical_set(canonical.begin(), canonical.end());
    if (canonical_set != slot_names)
        throw ValidationError(where + ": canonical_text slots " + slot_list(canonical) + " differ from declared slots " +
                              slot_list({slot_names.begin(), slot_names.end()}));
    for (std::size_t i = 0; i < t.variants.size(); ++i) {
        auto v = placeholders(t.variants[i]);
        std::sort(v.begin(), v.end());
        if (v != canonical)
            throw ValidationError(where + ": variant " + std::to_string(i) + " has slots " + slot_list(v) +
                                  ", expected " + slot_list(canonical));
    }
    for (const auto& p : placeholders(t.gold_query_template))
        if (!slot_names.count(p)) throw ValidationError(where + ": gold query placeholder {" + p + "} is not a slot");
    Bindings sample;
    for (const auto& s : t.slots) sample[s.name] = sample_value(s);
    try {
        parse_program(render_gold_query(t, sample).sql_text);
        if (!t.sampler.empty()) parse_program(t.sampler);
    } catch (const SqlSyntaxError& e) {
        throw ValidationError(where + ": query does not parse: " + e.what());
    } catch (const RenderError& e) {
        throw ValidationError(where + ": " + e.what());
    }
}

TemplateBank::TemplateBank(std::vector<QuestionTemplate> templates) : templates_(std::move(templates)) {
    for (std::size_t i = 0; i < templates_.size(); ++i) {
        validate_template(templates_[i]);
        if (!index_.emplace(templates_[i].template_id, i).second)
            throw ValidationError("template " + templates_[i].template_id + ": duplicate template_id");
    }
}

const QuestionTemplate& TemplateBank::get(std::string_view template_id) const {
    auto it = index_.find(template_id);
    if (it == index_.end()) throw LookupError("unknown template: " + std::string(template_id));
    return templates_[it->second];
}

std::vector<const QuestionTemplate*> TemplateBank::by_modality(Modality m) const {
    std::vector<const QuestionTemplate*> out;
    for (const auto& t : templates_)
        if (t.modality == m) out.push_back(&t);
    return out;
}

TemplateBank parse_templates(std::string_view json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("template file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || doc.value("version", "") != "tqgen-templates/1")
        throw ValidationError("template file must be an object with version \"tqgen-templates/1\"");
    std::vector<QuestionTemplate> out;
    for (const auto& j : doc.at("templates")) {
        QuestionTemplate t;
        try {
            t.template_id = j.at("template_id").get<std::string>();
            const std::string where = "template " + t.template_id;
            t.modality = parse_modality(j.at("modality").get<std::string>());
            t.canonical_text = j.at("canonical_text").get<std::string>();
            t.variants = j.at("variants").get<std::vector<std::string>>();
            t.gold_query_template = j.at("gold_query_template").get<std::string>();
            t.answer_mode = parse_answer_mode(j.at("answer_mode").get<std::string>());
            t.sampler = j.value("sampler", "");
            for (const auto& s : j.value("slots", json::array())) {
                SlotSpec spec;
                spec.name = s.at("name").get<std::string>();
                spec.source = s.value("source", "sampler");
                spec.type = parse_slot_type(s.value("type", "text"), where);
                spec.constraint = s.value("constraint", true);
                spec.values = s.value("values", std::vector<std::string>{});
                spec.display = s.value("display", std::map<std::string, std::string>{});
                t.slots.push_back(std::move(spec));
            }
        } catch (const json::exception& e) {
            throw ValidationError("template " + (t.template_id.empty() ? std::string("<unnamed>") : t.template_id) +
                                  ": " + e.what());
        }
        out.push_back(std::move(t));
    }
    return TemplateBank(std::move(out));
}

TemplateBank load_templates(const std::filesystem::path& file) {
    std::string text;
    try {
        text = read_file(file.string());
    } catch (const std::exception& e) {
        throw LoadError("cannot read template file " + file.string() + ": " + e.what());
    }
    return parse_templates(text);
}

std::filesystem::path default_templates_path() { return std::filesystem::path(EHRQ_DATA_DIR) / "templates.json"; }

std::size_t constraint_count(const Bindings& bindings, const QuestionTemplate* t) {
    std::size_t n = 0;
    for (const auto& [name, value] : bindings) {
        const SlotSpec* s = t ? t->slot(name) : nullptr;
        if (!s || s->constraint) ++n;
    }
    return n;
}

Level classify_level(const Bindings& bindings, const QuestionTemplate* t) {
    return constraint_count(bindings, t) <= 3 ? Level::I : Level::II;
}

QueryProgram render_gold_query(const QuestionTemplate& t, const Bindings& bindings) {
    const std::string sql = substitute(t.gold_query_template, [&](const std::string& name, bool in_literal) {
        auto it = bindings.find(name);
        if (it == bindings.end())
            throw RenderError("template " + t.template_id + ": missing binding {" + name + "}");
        const std::string& v = it->second;
        if (in_literal) return escape_literal(v);
        const SlotSpec* s = t.slot(name);
        const SlotType type = s ? s->type : SlotType::text;
        switch (type) {
            case SlotType::integer:
                if (!is_integer(v)) throw RenderError("slot " + name + ": not an integer: " + v);
                return v;
            case SlotType::real:
                if (!is_real(v)) throw RenderError("slot " + name + ": not a number: " + v);
                return v;
            case SlotType::keyword:
                if (std::find(s->values.begin(), s->values.end(), v) == s->values.end())
                    throw RenderError("slot " + name + ": keyword not allowed: " + v);
                return v;
            case SlotType::text: break;
        }
        return "'" + escape_literal(v) + "'";
    });
    QueryProgram p;
    p.sql_text = sql;
    try {
        p = parse_program(sql);
    } catch (const SqlSyntaxError& e) {
        throw RenderError("template " + t.template_id + ": rendered query does not parse: " + e.what());
    }
    return p;
}

std::string render_question(const QuestionTemplate& t, std::string_view variant, const Bindings& bindings) {
    std::string out;
    for (std::size_t i = 0; i < variant.size(); ++i) {
        if (variant[i] == '{') {
            const auto end = variant.find('}', i);
            if (end != std::string_view::npos) {
                const std::string name(variant.substr(i + 1, end - i - 1));
                if (const SlotSpec* s = t.slot(name)) {
                    auto it = bindings.find(name);
                    if (it == bindings.end()) throw RenderError("template " + t.template_id + ": missing binding {" + name + "}");
                    out += s->display_of(it->second);
                    i = end;
                    continue;
                }
            }
        }
        out += variant[i];
    }
    return out;
}

bool is_sentinel(std::string_view answer) { return to_lower(trim(answer)) == to_lower(kSentinel); }

std::string render_answer(const ExecutionOutcome& outcome) {
    if (!outcome.ok) throw EvaluatorError("cannot render an answer from a failed execution");
    const auto& rows = outcome.rows;
    if (rows.empty()) return std::string(kSentinel);
    if (rows.size() == 1 && std::all_of(rows[0].begin(), rows[0].end(), [](const Cell& c) { return is_null(c); }))
        return std::string(kSentinel);
    std::vector<std::string> lines;
    for (const auto& row : rows) {
        std::vector<std::string> cells;
        for (const auto& c : row) cells.push_back(cell_to_answer(c));
        lines.push_back(join(cells, ", "));
    }
    std::string out = join(lines, "\n");
    if (rows.size() == 1 && rows[0].size() == 1 && is_sentinel(out)) return std::string(kSentinel);
    return out;
}

namespace {

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

QuestionInstance instantiate(const QuestionTemplate& t, SqlExecutor& executor, TextBackend& text_backend, Rng& rng,
                             const InstantiateOptions& options) {
    const std::string& variant = t.variants[rng.index(t.variants.size())];
    Bindings bindings;

    std::vector<const SlotSpec*> sampled;
    for (const auto& s : t.slots)
        if (s.source == "sampler") sampled.push_back(&s);
    if (!sampled.empty()) {
        ExecutionOutcome fresh;
        const ExecutionOutcome* cached = nullptr;
        if (options.sampler_cache) {
            auto it = options.sampler_cache->find(t.template_id);
            if (it == options.sampler_cache->end())
                it = options.sampler_cache
                         ->emplace(t.template_id, executor.execute(t.sampler, text_backend, ExecutionLimits{std::chrono::milliseconds(20000), 1000000}))
                         .first;
            cached = &it->second;
        } else {
            fresh = executor.execute(t.sampler, text_backend, ExecutionLimits{std::chrono::milliseconds(20000), 1000000});
            cached = &fresh;
        }
        const ExecutionOutcome& rows = *cached;
        if (!rows.ok)
            throw InstantiationError("template " + t.template_id + ": sampler failed: " + rows.error->message);
        std::vector<std::size_t> col_of;
        for (const auto* s : sampled) {
            auto it = std::find(rows.columns.begin(), rows.columns.end(), s->name);
            if (it == rows.columns.end())
                throw InstantiationError("template " + t.template_id + ": sampler lacks column " + s->name);
            col_of.push_back(static_cast<std::size_t>(it - rows.columns.begin()));
        }
        std::optional<std::size_t> subject_col;
        if (auto it = std::find(rows.columns.begin(), rows.columns.end(), "subject_id"); it != rows.columns.end())
            subject_col = static_cast<std::size_t>(it - rows.columns.begin());
        std::vector<const Row*> usable;
        for (const auto& row : rows.rows) {
            if (std::any_of(col_of.begin(), col_of.end(), [&](std::size_t c) { return is_null(row[c]); })) continue;
            if (options.allowed_subjects && subject_col) {
                const auto* id = std::get_if<std::int64_t>(&row[*subject_col]);
                if (!id || !options.allowed_subjects->count(*id)) continue;
            }
            usable.push_back(&row);
        }
        if (usable.empty())
            throw InstantiationError("template " + t.template_id + ": no database rows satisfy the sampler");
        const Row& row = *usable[rng.index(usable.size())];
        for (std::size_t i = 0; i < sampled.size(); ++i) bindings[sampled[i]->name] = format_binding(row[col_of[i]]);
    }
    for (const auto& s : t.slots)
        if (s.source == "enum") bindings[s.name] = rng.pick(s.values);

    QuestionInstance inst;
    inst.template_id = t.template_id;
    inst.modality = t.modality;
    inst.answer_mode = t.answer_mode;
    inst.question = render_question(t, variant, bindings);
    inst.bindings = bindings;
    try {
        inst.gold_query = render_gold_query(t, bindings);
    } catch (const RenderError& e) {
        throw InstantiationError(e.what());
    }
    inst.level = classify_level(bindings, &t);
    const auto outcome = executor.execute(inst.gold_query, text_backend);
    if (!outcome.ok)
        throw InstantiationError("template " + t.template_id + ": gold query failed (" +
                                 std::string(to_string(outcome.error->kind)) + "): " + outcome.error->message);
    inst.gold_answer = render_answer(outcome);
    inst.instance_id = t.template_id + "-" + hex64(fnv1a(inst.gold_query.sql_text, fnv1a(inst.question))).substr(0, 12);
    return inst;
}

}  // namespace ehrq
