#include "ehrq/pipeline.hpp"

#include "ehrq/errors.hpp"
#include "ehrq/templates.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

using nlohmann::json;

std::string_view to_string(FinalStatus s) {
    switch (s) {
        case FinalStatus::answered: return "answered";
        case FinalStatus::unanswerable: return "unanswerable";
        case FinalStatus::exhausted: return "exhausted";
        case FinalStatus::backend_error: return "backend_error";
    }
    return "exhausted";
}

FinalStatus parse_final_status(std::string_view s) {
    for (auto f : {FinalStatus::answered, FinalStatus::unanswerable, FinalStatus::exhausted, FinalStatus::backend_error})
        if (to_string(f) == s) return f;
    throw ValidationError("unknown final_status: " + std::string(s));
}

QueryProgram extract_code(std::string_view llm_output) { return parse_program(extract_fenced(llm_output)); }

namespace {

json cell_json(const Cell& c) {
    if (auto p = std::get_if<std::int64_t>(&c)) return *p;
    if (auto p = std::get_if<double>(&c)) return *p;
    if (auto p = std::get_if<std::string>(&c)) return *p;
    return nullptr;
}

Cell cell_from_json(const json& j) {
    if (j.is_number_integer()) return Cell{j.get<std::int64_t>()};
    if (j.is_number()) return Cell{j.get<double>()};
    if (j.is_string()) return Cell{j.get<std::string>()};
    return Cell{};
}

ErrorKind parse_error_kind(std::string_view s) {
    for (auto k : {ErrorKind::parse, ErrorKind::unknown_table, ErrorKind::unknown_column, ErrorKind::path,
                   ErrorKind::type, ErrorKind::tool, ErrorKind::timeout})
        if (to_string(k) == s) return k;
    return ErrorKind::parse;
}

}  // namespace

json to_json(const Annotation& a) {
    return {{"start", a.start}, {"end", a.end}, {"surface", a.surface}, {"canonical", a.canonical},
            {"domain", std::string(to_string(a.domain))}};
}

json to_json(const ExecutionOutcome& o) {
    json j;
    j["status"] = o.ok ? "ok" : "error";
    if (o.ok) {
        j["columns"] = o.columns;
        json rows = json::array();
        for (const auto& r : o.rows) {
            json row = json::array();
            for (const auto& c : r) row.push_back(cell_json(c));
            rows.push_back(row);
        }
        j["rows"] = rows;
        j["truncated"] = o.truncated;
    } else {
        j["error_info"] = {{"kind", std::string(to_string(o.error->kind))}, {"message", o.error->message}};
        if (o.error->position) j["error_info"]["position"] = *o.error->position;
    }
    return j;
}

json to_json(const RepairTrace& t) {
    json j;
    j["annotations"] = json::array();
    for (const auto& a : t.annotations) j["annotations"].push_back(to_json(a));
    j["retrieved"] = json::array();
    for (const auto& r : t.retrieved)
        j["retrieved"].push_back({{"question", r.question}, {"query", r.query}, {"similarity", r.similarity}});
    j["prompt_chars"] = t.prompt_chars;
    j["attempts"] = json::array();
    for (const auto& a : t.attempts) {
        json aj{{"llm_output", a.llm_output},
                {"program", {{"sql_text", a.program.sql_text}, {"tool_calls", json::array()}}},
                {"outcome", to_json(a.outcome)}};
        for (const auto& c : a.program.tool_calls)
            aj["program"]["tool_calls"].push_back({{"argument", c.argument}, {"question", c.question}});
        if (a.repair_prompt) aj["repair_prompt"] = *a.repair_prompt;
        j["attempts"].push_back(aj);
    }
    j["k_max"] = t.k_max;
    j["final_status"] = std::string(to_string(t.final_status));
    if (!t.backend_error.empty()) j["backend_error"] = t.backend_error;
    return j;
}

RepairTrace trace_from_json(const json& j) {
    RepairTrace t;
    for (const auto& a : j.value("annotations", json::array()))
        t.annotations.push_back({a.at("start").get<std::size_t>(), a.at("end").get<std::size_t>(),
                                 a.at("surface").get<std::string>(), a.at("canonical").get<std::string>(),
                                 parse_term_domain(a.at("domain").get<std::string>())});
    for (const auto& r : j.value("retrieved", json::array()))
        t.retrieved.push_back({r.at("question").get<std::string>(), r.at("query").get<std::string>(),
                               r.at("similarity").get<double>()});
    t.prompt_chars = j.value("prompt_chars", std::size_t{0});
    for (const auto& aj : j.value("attempts", json::array())) {
        Attempt a;
        a.llm_output = aj.value("llm_output", "");
        a.program.sql_text = aj.at("program").value("sql_text", "");
        for (const auto& c : aj.at("program").value("tool_calls", json::array()))
            a.program.tool_calls.push_back({c.value("argument", ""), c.value("question", "")});
        const auto& o = aj.at("outcome");
        a.outcome.ok = o.value("status", "") == "ok";
        if (a.outcome.ok) {
            a.outcome.columns = o.value("columns", std::vector<std::string>{});
            for (const auto& r : o.value("rows", json::array())) {
                Row row;
                for (const auto& c : r) row.push_back(cell_from_json(c));
                a.outcome.rows.push_back(std::move(row));
            }
            a.outcome.truncated = o.value("truncated", false);
        } else {
            const auto& e = o.at("error_info");
            ErrorInfo info{parse_error_kind(e.value("kind", "parse")), e.value("message", ""), std::nullopt};
            if (e.contains("position")) info.position = e["position"].get<std::size_t>();
            a.outcome.error = info;
        }
        if (aj.contains("repair_prompt")) a.repair_prompt = aj["repair_prompt"].get<std::string>();
        t.attempts.push_back(std::move(a));
    }
    t.k_max = j.value("k_max", 3);
    t.final_status = parse_final_status(j.value("final_status", "exhausted"));
    t.backend_error = j.value("backend_error", "");
    return t;
}

RunResult run(std::string_view question, const PipelineDeps& deps, const StageObserver& observer) {
    if (!deps.executor || !deps.lexicon || !deps.llm || !deps.text)
        throw ConfigError("pipeline dependencies are incomplete");
    if (deps.k_max < 1) throw ConfigError("k_max must be at least 1");
    auto emit = [&](std::string_view stage, const json& payload) {
        if (observer) observer(stage, payload);
    };

    RunResult result;
    RepairTrace& trace = result.trace;
    trace.k_max = deps.k_max;

    trace.annotations = annotate(question, *deps.lexicon);
    {
        json a = json::array();
        for (const auto& x : trace.annotations) a.push_back(to_json(x));
        emit("annotations", a);
    }

    if (deps.index && deps.embedder && deps.index->size() > 0 && !trim(question).empty()) {
        try {
            for (const auto& s : deps.index->top_k(question, *deps.embedder, deps.top_k))
                trace.retrieved.push_back({s.exemplar->question, s.exemplar->query, s.similarity});
        } catch (const BackendError& e) {
            trace.final_status = FinalStatus::backend_error;
            trace.backend_error = std::string("embedding: ") + e.what();
            emit("answer", {{"answer", ""}, {"final_status", "backend_error"}});
            return result;
        }
    }
    {
        json r = json::array();
        for (const auto& x : trace.retrieved)
            r.push_back({{"question", x.question}, {"query", x.query}, {"similarity", x.similarity}});
        emit("retrieval", r);
    }

    const PromptBundle bundle = compose(question, deps.descriptions, trace.annotations, trace.retrieved, deps.prompt);
    const std::string prompt = bundle.render();
    trace.prompt_chars = prompt.size();
    emit("prompt", {{"chars", prompt.size()}, {"dropped_tables", bundle.dropped_tables}});

    std::string next_prompt = prompt;
    for (int k = 1; k <= deps.k_max; ++k) {
        Attempt attempt;
        if (k > 1) attempt.repair_prompt = next_prompt;
        try {
            attempt.llm_output = deps.llm->generate(next_prompt);
        } catch (const BackendError& e) {
            trace.final_status = FinalStatus::backend_error;
            trace.backend_error = e.what();
            emit("answer", {{"answer", ""}, {"final_status", "backend_error"}, {"error", e.what()}});
            return result;
        }
        const std::string code = extract_fenced(attempt.llm_output);
        attempt.program.sql_text = code;
        try {
            attempt.program = parse_program(code);
            attempt.outcome = deps.executor->execute(attempt.program, *deps.text, deps.limits);
        } catch (const SqlSyntaxError& e) {
            attempt.outcome = ExecutionOutcome::failure(ErrorKind::parse, e.what(), e.position());
        }
        trace.attempts.push_back(attempt);
        const auto& a = trace.attempts.back();
        emit("attempt", {{"k", k},
                         {"sql", a.program.sql_text},
                         {"outcome", to_json(a.outcome)},
                         {"repair", a.repair_prompt.has_value()}});
        if (a.outcome.ok) {
            result.answer = render_answer(a.outcome);
            trace.final_status = is_sentinel(result.answer) ? FinalStatus::unanswerable : FinalStatus::answered;
            emit("answer", {{"answer", result.answer}, {"final_status", std::string(to_string(trace.final_status))}});
            return result;
        }
        next_prompt = repair_prompt(bundle, a.program.sql_text, *a.outcome.error);
    }
    trace.final_status = FinalStatus::exhausted;
    result.answer = std::string(kSentinel);
    emit("answer", {{"answer", result.answer}, {"final_status", "exhausted"}});
    return result;
}

}  // namespace ehrq
