#include "ehrq/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "ehrq/errors.hpp"
#include "ehrq/sql.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

int exact_match(std::string_view pred_sql, std::string_view gold_sql) {
    sql::ComponentSet gold;
    try {
        gold = sql::canonicalize(gold_sql);
    } catch (const SqlSyntaxError& e) {
        throw EvaluatorError(std::string("gold query does not parse: ") + e.what());
    }
    try {
        return sql::canonicalize(pred_sql) == gold ? 1 : 0;
    } catch (const SqlSyntaxError&) {
        return 0;
    }
}

namespace {

Cell normalize_cell(const Cell& c) {
    if (auto p = std::get_if<std::string>(&c)) return Cell{to_lower(trim(*p))};
    if (auto p = std::get_if<std::int64_t>(&c)) return Cell{static_cast<double>(*p)};
    return c;
}

// Total order used to line up both multisets before the tolerant comparison.
bool cell_less(const Cell& a, const Cell& b) {
    if (a.index() != b.index()) return a.index() < b.index();
    if (auto p = std::get_if<double>(&a)) return *p < std::get<double>(b);
    if (auto p = std::get_if<std::string>(&a)) return *p < std::get<std::string>(b);
    return false;
}

bool row_less(const std::vector<Cell>& a, const std::vector<Cell>& b) {
    return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end(), cell_less);
}

}  // namespace

NormalizedResult normalize_result(const std::vector<Row>& rows) {
    NormalizedResult out;
    if (rows.size() == 1 && std::all_of(rows[0].begin(), rows[0].end(), [](const Cell& c) { return is_null(c); }))
        return out;
    for (const auto& r : rows) {
        std::vector<Cell> n;
        for (const auto& c : r) n.push_back(normalize_cell(c));
        out.rows.push_back(std::move(n));
    }
    if (out.rows.size() == 1 && out.rows[0].size() == 1)
        if (auto p = std::get_if<std::string>(&out.rows[0][0]); p && is_sentinel(*p)) out.rows.clear();
    return out;
}

bool cells_equal(const Cell& a0, const Cell& b0) {
    const Cell a = normalize_cell(a0), b = normalize_cell(b0);
    const auto* x = std::get_if<double>(&a);
    const auto* y = std::get_if<double>(&b);
    if (x && y) {
        const double diff = std::fabs(*x - *y);
        return diff <= 1e-9 || diff <= 1e-6 * std::max(std::fabs(*x), std::fabs(*y));
    }
    return a == b;
}

bool results_equal(const std::vector<Row>& a, const std::vector<Row>& b) {
    auto na = normalize_result(a).rows, nb = normalize_result(b).rows;
    if (na.size() != nb.size()) return false;
    std::sort(na.begin(), na.end(), row_less);
    std::sort(nb.begin(), nb.end(), row_less);
    for (std::size_t i = 0; i < na.size(); ++i) {
        if (na[i].size() != nb[i].size()) return false;
        for (std::size_t j = 0; j < na[i].size(); ++j)
            if (!cells_equal(na[i][j], nb[i][j])) return false;
    }
    return true;
}

int execution_accuracy(std::string_view pred_sql, std::string_view gold_sql, SqlExecutor& executor,
                       TextBackend& text_backend) {
    const auto gold = executor.execute(gold_sql, text_backend);
    if (!gold.ok) throw EvaluatorError("gold query failed: " + gold.error->message);
    const auto pred = executor.execute(pred_sql, text_backend);
    if (!pred.ok) return 0;
    return results_equal(pred.rows, gold.rows) ? 1 : 0;
}

int judge_score(std::string_view pred_answer, std::string_view ref_answer, std::string_view question,
                LlmBackend& judge) {
    if (trim(ref_answer).empty()) throw EvaluatorError("judge needs a nonempty reference answer");
    const std::string reply = judge.generate(judge_prompt(question, ref_answer, pred_answer));
    for (std::size_t i = 0; i < reply.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(reply[i]))) continue;
        std::size_t j = i;
        while (j < reply.size() && std::isdigit(static_cast<unsigned char>(reply[j]))) ++j;
        const long v = std::strtol(reply.substr(i, std::min<std::size_t>(j - i, 6)).c_str(), nullptr, 10);
        return static_cast<int>(std::clamp<long>(v, 1, 10));
    }
    throw EvaluatorError("judge reply has no score: " + reply.substr(0, 80));
}

System echo_gold_system() {
    return [](const QuestionInstance& q) { return SystemOutput{q.gold_query.sql_text, q.gold_answer}; };
}

System sentinel_system() {
    return [](const QuestionInstance&) { return SystemOutput{std::nullopt, std::string(kSentinel)}; };
}

System pipeline_system(const PipelineDeps& deps) {
    return [deps](const QuestionInstance& q) {
        auto r = run(q.question, deps);
        SystemOutput out;
        out.answer = r.answer;
        if (!r.trace.attempts.empty()) out.sql = r.trace.attempts.back().program.sql_text;
        return out;
    };
}

Aggregate aggregate(const std::vector<const ItemScore*>& items) {
    Aggregate a;
    a.items = items.size();
    double em = 0, ex = 0, judge = 0;
    for (const auto* i : items) {
        if (i->em) {
            ++a.em_items;
            em += *i->em;
            ex += i->ex.value_or(0);
        }
        if (i->judge) {
            ++a.judge_items;
            judge += *i->judge;
        }
    }
    if (a.em_items) {
        a.em = em / static_cast<double>(a.em_items);
        a.ex = ex / static_cast<double>(a.em_items);
    }
    if (a.judge_items) a.judge = judge / static_cast<double>(a.judge_items);
    return a;
}

namespace {

nlohmann::json agg_json(const Aggregate& a) {
    nlohmann::json j{{"items", a.items}, {"em_items", a.em_items}, {"judge_items", a.judge_items}};
    j["em"] = a.em ? nlohmann::json(*a.em) : nlohmann::json(nullptr);
    j["ex"] = a.ex ? nlohmann::json(*a.ex) : nlohmann::json(nullptr);
    j["judge"] = a.judge ? nlohmann::json(*a.judge) : nlohmann::json(nullptr);
    return j;
}

std::string fmt(const std::optional<double>& v, int decimals) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
    return buf;
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["overall"] = agg_json(overall);
    for (const auto& [k, v] : by_level) j["by_level"][k] = agg_json(v);
    for (const auto& [k, v] : by_modality) j["by_modality"][k] = agg_json(v);
    for (const auto& [k, v] : by_level_modality) j["by_level_modality"][k] = agg_json(v);
    j["items"] = nlohmann::json::array();
    for (const auto& i : items) {
        nlohmann::json r{{"instance_id", i.instance_id},
                         {"template_id", i.template_id},
                         {"level", std::string(to_string(i.level))},
                         {"modality", std::string(to_string(i.modality))},
                         {"answer_mode", std::string(to_string(i.answer_mode))},
                         {"pred_sql", i.pred_sql},
                         {"pred_answer", i.pred_answer},
                         {"gold_answer", i.gold_answer}};
        r["em"] = i.em ? nlohmann::json(*i.em) : nlohmann::json(nullptr);
        r["ex"] = i.ex ? nlohmann::json(*i.ex) : nlohmann::json(nullptr);
        r["judge"] = i.judge ? nlohmann::json(*i.judge) : nlohmann::json(nullptr);
        if (!i.flags.empty()) r["flags"] = i.flags;
        j["items"].push_back(r);
    }
    return j;
}

std::string EvalReport::summary_table() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%-18s %6s %6s %6s %6s\n", "", "items", "EM", "EX", "Score");
    out += line;
    auto row = [&](const std::string& name, const Aggregate& a) {
        std::snprintf(line, sizeof line, "%-18s %6zu %6s %6s %6s\n", name.c_str(), a.items, fmt(a.em, 2).c_str(),
                      fmt(a.ex, 2).c_str(), fmt(a.judge, 2).c_str());
        out += line;
    };
    for (const char* lvl : {"I", "II"})
        row(std::string("Level ") + lvl, by_level.count(lvl) ? by_level.at(lvl) : Aggregate{});
    row("Overall", overall);
    out += "\n";
    for (const char* m : {"table", "cxr_report", "discharge"})
        for (const char* lvl : {"I", "II"}) {
            const std::string key = std::string(lvl) + "/" + m;
            row(std::string(m) + " " + lvl, by_level_modality.count(key) ? by_level_modality.at(key) : Aggregate{});
        }
    return out;
}

EvalReport evaluate(const std::vector<QuestionInstance>& dataset, const System& system, SqlExecutor& executor,
                    TextBackend& text_backend, const EvalOptions& options) {
    OfflineJudgeBackend offline_judge;
    LlmBackend& judge = options.judge ? *options.judge : offline_judge;
    EvalReport report;
    for (const auto& q : dataset) {
        ItemScore s;
        s.instance_id = q.instance_id;
        s.template_id = q.template_id;
        s.level = q.level;
        s.modality = q.modality;
        s.answer_mode = q.answer_mode;
        s.gold_answer = q.gold_answer;
        SystemOutput out;
        try {
            out = system(q);
        } catch (const std::exception& e) {
            s.flags.push_back(std::string("system error: ") + e.what());
        }
        s.pred_sql = out.sql.value_or("");
        s.pred_answer = out.answer;
        if (q.answer_mode == AnswerMode::text) {
            try {
                s.judge = judge_score(out.answer, q.gold_answer, q.question, judge);
            } catch (const std::exception& e) {
                s.flags.push_back(std::string("judge: ") + e.what());
            }
        } else {
            const auto gold = executor.execute(q.gold_query, text_backend);
            if (!gold.ok) {
                s.flags.push_back("gold query failed: " + gold.error->message);
            } else if (out.sql) {
                s.em = exact_match(*out.sql, q.gold_query.sql_text);
                const auto pred = executor.execute(*out.sql, text_backend);
                s.ex = pred.ok && results_equal(pred.rows, gold.rows) ? 1 : 0;
                if (!pred.ok) s.flags.push_back("prediction failed: " + pred.error->message);
                else if (*s.em == 0) {
                    try {
                        sql::parse(*out.sql);
                    } catch (const SqlSyntaxError&) {
                        s.flags.push_back("prediction unparseable");
                    }
                }
            } else {
                // No query: the answer alone stands for the result set.
                s.em = 0;
                s.ex = is_sentinel(out.answer) ? (normalize_result(gold.rows).rows.empty() ? 1 : 0)
                                               : (trim(out.answer) == trim(render_answer(gold)) ? 1 : 0);
            }
        }
        report.items.push_back(std::move(s));
    }
    std::vector<const ItemScore*> all;
    std::map<std::string, std::vector<const ItemScore*>> lv, md, lm;
    for (const auto& i : report.items) {
        all.push_back(&i);
        lv[std::string(to_string(i.level))].push_back(&i);
        md[std::string(to_string(i.modality))].push_back(&i);
        lm[std::string(to_string(i.level)) + "/" + std::string(to_string(i.modality))].push_back(&i);
    }
    report.overall = aggregate(all);
    for (const auto& [k, v] : lv) report.by_level[k] = aggregate(v);
    for (const auto& [k, v] : md) report.by_modality[k] = aggregate(v);
    for (const auto& [k, v] : lm) report.by_level_modality[k] = aggregate(v);
    return report;
}

}  // namespace ehrq
