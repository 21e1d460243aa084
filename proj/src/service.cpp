#include "ehrq/service.hpp"

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <iostream>

#include "httplib.h"

#include "ehrq/dataset.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

namespace {

std::string env_or_empty(const char* name) {
    const char* v = std::getenv(name);
    return v ? std::string(v) : std::string();
}

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
    return buf;
}

bool valid_run_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
    return p.empty() || p.is_absolute() ? p : base / p;
}

}  // namespace

BackendEnv BackendEnv::from_env() {
    return {env_or_empty("EHRQ_LLM_URL"), env_or_empty("EHRQ_LLM_KEY"), env_or_empty("EHRQ_EMBED_URL"),
            env_or_empty("EHRQ_TEXT_URL")};
}

Backends make_backends(const BackendEnv& env, const TemplateBank& bank, const Lexicon& lexicon) {
    Backends b;
    if (env.llm_url.empty()) b.llm = std::make_unique<TemplateGroundedBackend>(bank, lexicon);
    else b.llm = std::make_unique<HttpLlmBackend>(env.llm_url, env.llm_key);
    if (env.embed_url.empty()) b.embedder = std::make_unique<HashedTrigramEmbedder>();
    else b.embedder = std::make_unique<HttpEmbedder>(env.embed_url, env.llm_key);
    if (env.text_url.empty()) b.text = std::make_unique<OfflineTextBackend>();
    else b.text = std::make_unique<HttpTextBackend>(env.text_url, env.llm_key);
    return b;
}

ServiceConfig ServiceConfig::parse(std::string_view text) {
    ServiceConfig c;
    std::size_t line_no = 0;
    for (const auto& raw : split(text, '\n')) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || line[0] == '[') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string k = trim(line.substr(0, eq));
        std::string v = trim(line.substr(eq + 1));
        if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
        auto as_int = [&](long lo, long hi) {
            char* end = nullptr;
            const long n = std::strtol(v.c_str(), &end, 10);
            if (v.empty() || *end != '\0' || n < lo || n > hi)
                throw ConfigError("config key " + k + ": expected an integer in [" + std::to_string(lo) + ", " +
                                  std::to_string(hi) + "]");
            return n;
        };
        if (k == "db") c.db = v;
        else if (k == "templates") c.templates = v;
        else if (k == "lexicon") c.lexicon = v;
        else if (k == "exemplars") c.exemplars = v;
        else if (k == "runs") c.runs = v;
        else if (k == "static") c.static_dir = v;
        else if (k == "host") c.host = v;
        else if (k == "port") c.port = static_cast<int>(as_int(0, 65535));
        else if (k == "k_max") c.k_max = static_cast<int>(as_int(1, 100));
        else if (k == "top_k") c.top_k = static_cast<std::size_t>(as_int(1, 100));
        else if (k == "cors_origin") c.cors_origin = v;
        else if (k.find("key") != std::string::npos || k.find("secret") != std::string::npos)
            throw ConfigError("config key " + k + ": secrets belong in environment variables");
        else throw ConfigError("config line " + std::to_string(line_no) + ": unknown key " + k);
    }
    return c;
}

ServiceConfig ServiceConfig::load(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
    ServiceConfig c = parse(read_file(path.string()));
    // Relative paths are relative to the config file.
    const auto base = path.parent_path();
    c.db = resolve(c.db, base);
    c.runs = resolve(c.runs, base);
    c.static_dir = resolve(c.static_dir, base);
    for (auto* p : {&c.templates, &c.lexicon, &c.exemplars})
        if (p->is_relative()) *p = base / *p;
    return c;
}

void ServiceConfig::validate() const {
    if (db.empty()) throw ConfigError("config: db is required");
    for (const auto& [name, p] : {std::pair{"db", db}, {"templates", templates}, {"lexicon", lexicon},
                                  {"exemplars", exemplars}})
        if (!std::filesystem::exists(p)) throw ConfigError(std::string("config: ") + name + " not found: " + p.string());
    if (!static_dir.empty() && !std::filesystem::is_directory(static_dir))
        throw ConfigError("config: static directory not found: " + static_dir.string());
}

nlohmann::json ServiceConfig::to_json() const {
    return {{"db", db.string()},
            {"templates", templates.string()},
            {"lexicon", lexicon.string()},
            {"exemplars", exemplars.string()},
            {"runs", runs.string()},
            {"static", static_dir.string()},
            {"host", host},
            {"port", port},
            {"k_max", k_max},
            {"top_k", top_k},
            {"cors_origin", cors_origin}};
}

nlohmann::json RunRecord::to_json() const {
    return {{"run_id", run_id}, {"timestamp", timestamp}, {"question", question},
            {"answer", answer}, {"trace", ehrq::to_json(trace)}, {"config", config}};
}

RunRecord RunRecord::from_json(const nlohmann::json& j) {
    RunRecord r;
    r.run_id = j.at("run_id").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.question = j.at("question").get<std::string>();
    r.answer = j.at("answer").get<std::string>();
    r.trace = trace_from_json(j.at("trace"));
    r.config = j.value("config", nlohmann::json::object());
    return r;
}

RunStore::RunStore(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir_, ec)) return;
    for (const auto& e : std::filesystem::directory_iterator(dir_, ec)) {
        const std::string name = e.path().stem().string();
        if (name.rfind("run-", 0) != 0) continue;
        const std::uint64_t n = std::strtoull(name.c_str() + 4, nullptr, 10);
        next_ = std::max(next_, n);
    }
}

std::string RunStore::persist(RunRecord record) {
    std::lock_guard lock(mutex_);
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw PersistenceError("cannot create run directory " + dir_.string() + ": " + ec.message());
    const bool assign = record.run_id.empty();
    for (int tries = 0; tries < 1000; ++tries) {
        if (assign) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "run-%08llu", static_cast<unsigned long long>(++next_));
            record.run_id = buf;
        } else if (!valid_run_id(record.run_id)) {
            throw PersistenceError("invalid run id " + record.run_id);
        }
        const auto path = dir_ / (record.run_id + ".json");
        std::FILE* f = std::fopen(path.c_str(), "wx");
        if (!f) {
            if (assign && errno == EEXIST) continue;
            throw PersistenceError("cannot write " + path.string() + ": " + std::strerror(errno));
        }
        const std::string text = record.to_json().dump() + "\n";
        const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
        if (std::fclose(f) != 0 || !ok) throw PersistenceError("short write to " + path.string());
        return record.run_id;
    }
    throw PersistenceError("could not allocate a run id in " + dir_.string());
}

std::optional<RunRecord> RunStore::get(const std::string& run_id) const {
    if (!valid_run_id(run_id)) return std::nullopt;
    const auto path = dir_ / (run_id + ".json");
    std::lock_guard lock(mutex_);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        return RunRecord::from_json(nlohmann::json::parse(read_file(path.string())));
    } catch (const std::exception& e) {
        throw PersistenceError("corrupt run record " + path.string() + ": " + e.what());
    }
}

std::vector<RunRecord> RunStore::list(std::size_t offset, std::size_t limit, std::optional<std::string> status,
                                      std::size_t* total) const {
    std::vector<std::string> ids;
    {
        std::lock_guard lock(mutex_);
        std::error_code ec;
        if (std::filesystem::is_directory(dir_, ec))
            for (const auto& e : std::filesystem::directory_iterator(dir_, ec))
                if (e.path().extension() == ".json") ids.push_back(e.path().stem().string());
    }
    std::sort(ids.rbegin(), ids.rend());
    std::vector<RunRecord> matched;
    for (const auto& id : ids) {
        auto r = get(id);
        if (!r) continue;
        if (status && to_string(r->trace.final_status) != *status) continue;
        matched.push_back(std::move(*r));
    }
    if (total) *total = matched.size();
    std::vector<RunRecord> page;
    for (std::size_t i = offset; i < matched.size() && page.size() < limit; ++i) page.push_back(std::move(matched[i]));
    return page;
}

nlohmann::json AskResult::to_json() const {
    nlohmann::json j{{"run_id", record.run_id},
                     {"answer", record.answer},
                     {"final_status", std::string(ehrq::to_string(record.trace.final_status))},
                     {"trace", ehrq::to_json(record.trace)}};
    if (!warnings.empty()) j["warnings"] = warnings;
    return j;
}

Service::Service(const ServiceConfig& config, Database db, const BackendEnv& env)
    : config_(config),
      db_(db.preprocessed ? std::move(db) : preprocess(std::move(db))),
      executor_(std::make_unique<SqlExecutor>(db_)),
      bank_(load_templates(config.templates)),
      lexicon_(load_lexicon(config.lexicon)),
      store_(config.runs) {
    backends_ = make_backends(env, bank_, lexicon_);
    index_ = ExemplarIndex(load_exemplars(config.exemplars), *backends_.embedder);
}

std::unique_ptr<Service> Service::open(const ServiceConfig& config, const BackendEnv& env) {
    config.validate();
    return std::make_unique<Service>(config, preprocess(load_tables(config.db)), env);
}

void Service::set_llm(std::unique_ptr<LlmBackend> llm) { backends_.llm = std::move(llm); }

PipelineDeps Service::deps() {
    PipelineDeps d;
    d.executor = executor_.get();
    d.index = &index_;
    d.embedder = backends_.embedder.get();
    d.lexicon = &lexicon_;
    d.llm = backends_.llm.get();
    d.text = backends_.text.get();
    d.k_max = config_.k_max;
    d.top_k = config_.top_k;
    return d;
}

RunResult Service::run_pipeline(const std::string& question, const StageObserver& observer) {
    return run(question, deps(), observer);
}

AskResult Service::ask(const std::string& question, const StageObserver& observer) {
    AskResult out;
    auto result = run_pipeline(question, observer);
    out.record.timestamp = utc_now();
    out.record.question = question;
    out.record.answer = result.answer;
    out.record.trace = std::move(result.trace);
    out.record.config = {{"llm", backends_.llm->identity()},
                         {"embedder", backends_.embedder->identity()},
                         {"text", backends_.text->identity()},
                         {"k_max", config_.k_max},
                         {"top_k", config_.top_k},
                         {"db_seed", db_.rng_seed}};
    try {
        out.record.run_id = store_.persist(out.record);
    } catch (const PersistenceError& e) {
        out.warnings.push_back(std::string("run not persisted: ") + e.what());
    }
    return out;
}

nlohmann::json Service::health() const {
    nlohmann::json tables = nlohmann::json::object();
    for (const auto& [name, n] : row_counts(db_)) tables[name] = n;
    return {{"status", "ok"},
            {"tables", tables},
            {"table_count", tables.size()},
            {"templates", bank_.size()},
            {"exemplars", index_.size()},
            {"backends",
             {{"llm", backends_.llm->identity()},
              {"embedder", backends_.embedder->identity()},
              {"text", backends_.text->identity()}}}};
}

nlohmann::json Service::templates_json() const {
    nlohmann::json list = nlohmann::json::array();
    for (const auto& t : bank_.templates()) {
        nlohmann::json slots = nlohmann::json::array();
        for (const auto& s : t.slots) slots.push_back(s.name);
        Bindings all;
        for (const auto& s : t.slots) all[s.name] = "";
        list.push_back({{"template_id", t.template_id},
                        {"modality", std::string(to_string(t.modality))},
                        {"level", std::string(to_string(classify_level(all, &t)))},
                        {"answer_mode", std::string(to_string(t.answer_mode))},
                        {"canonical_text", t.canonical_text},
                        {"variants", t.variants.size()},
                        {"slots", slots}});
    }
    return {{"count", list.size()}, {"templates", list}};
}

EvalReport Service::eval(const std::filesystem::path& dataset, const std::string& system,
                         std::optional<std::string> split) {
    const auto ds = load_dataset(dataset);
    System sys;
    if (system == "echo-gold") sys = echo_gold_system();
    else if (system == "sentinel") sys = sentinel_system();
    else if (system == "pipeline") sys = pipeline_system(deps());
    else throw ConfigError("unknown system '" + system + "' (echo-gold, pipeline, sentinel)");
    return evaluate(instances(ds, split), sys, *executor_, *backends_.text);
}

namespace {

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void field_error(httplib::Response& res, const std::string& field, const std::string& message) {
    send_json(res, 400, {{"error", "invalid request"}, {"fields", {{field, message}}}});
}

// Parses the body as a JSON object; sends 400 and returns nullopt otherwise.
std::optional<nlohmann::json> json_body(const httplib::Request& req, httplib::Response& res) {
    try {
        auto j = nlohmann::json::parse(req.body);
        if (j.is_object()) return j;
    } catch (const nlohmann::json::parse_error&) {
    }
    send_json(res, 400, {{"error", "body must be a JSON object"}});
    return std::nullopt;
}

std::optional<std::string> question_of(const nlohmann::json& body, httplib::Response& res) {
    if (!body.contains("question") || !body["question"].is_string() || trim(body["question"].get<std::string>()).empty()) {
        field_error(res, "question", "required nonempty string");
        return std::nullopt;
    }
    return body["question"].get<std::string>();
}

std::size_t query_size(const httplib::Request& req, const char* name, std::size_t fallback, std::size_t max) {
    if (!req.has_param(name)) return fallback;
    const std::string v = req.get_param_value(name);
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (v.empty() || *end != '\0') throw ConfigError(std::string(name) + " must be a nonnegative integer");
    return std::min<std::size_t>(n, max);
}

void answer_ask(Service& service, const std::string& question, httplib::Response& res) {
    const auto result = service.ask(question);
    const bool failed = result.record.trace.final_status == FinalStatus::backend_error;
    auto body = result.to_json();
    if (failed) body["error"] = result.record.trace.backend_error;
    send_json(res, failed ? 502 : 200, body);
}

std::string sse_event(std::string_view event, const nlohmann::json& data) {
    return "event: " + std::string(event) + "\ndata: " + data.dump() + "\n\n";
}

void stream_ask(Service& service, const std::string& question, httplib::Response& res) {
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [&service, question](std::size_t, httplib::DataSink& sink) {
        const auto observer = [&sink](std::string_view stage, const nlohmann::json& payload) {
            const auto ev = sse_event(stage, payload);
            sink.write(ev.data(), ev.size());
        };
        const auto result = service.ask(question, observer);
        auto done = result.to_json();
        done.erase("trace");
        if (result.record.trace.final_status == FinalStatus::backend_error)
            done["error"] = result.record.trace.backend_error;
        const auto ev = sse_event("done", done);
        sink.write(ev.data(), ev.size());
        sink.done();
        return true;
    });
}

}  // namespace

void install_routes(httplib::Server& server, Service& service) {
    const std::string origin = service.config().cors_origin;
    server.set_default_headers({{"Access-Control-Allow-Origin", origin},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const ConfigError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const ValidationError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const LoadError& e) {
            send_json(res, 400, {{"error", e.what()}});
        } catch (const BackendError& e) {
            send_json(res, 502, {{"error", e.what()}, {"final_status", "backend_error"}});
        } catch (const std::exception& e) {
            send_json(res, 500, {{"error", e.what()}});
        }
    });

    server.Post("/api/ask", [&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto q = question_of(*body, res);
        if (!q) return;
        answer_ask(service, *q, res);
    });
    server.Get("/api/ask/stream", [&service](const httplib::Request& req, httplib::Response& res) {
        const std::string q = req.get_param_value("question");
        if (trim(q).empty()) return field_error(res, "question", "required nonempty query parameter");
        stream_ask(service, q, res);
    });
    server.Post("/api/ask/stream", [&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        auto q = question_of(*body, res);
        if (!q) return;
        stream_ask(service, *q, res);
    });
    server.Get("/api/runs", [&service](const httplib::Request& req, httplib::Response& res) {
        const std::size_t offset = query_size(req, "offset", 0, SIZE_MAX);
        const std::size_t limit = query_size(req, "limit", 20, 200);
        std::optional<std::string> status;
        if (req.has_param("status")) status = req.get_param_value("status");
        std::size_t total = 0;
        nlohmann::json runs = nlohmann::json::array();
        for (const auto& r : service.store().list(offset, limit, status, &total)) runs.push_back(r.to_json());
        send_json(res, 200, {{"total", total}, {"offset", offset}, {"limit", limit}, {"runs", runs}});
    });
    server.Get(R"(/api/runs/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        const auto r = service.store().get(req.matches[1]);
        if (!r) return send_json(res, 404, {{"error", "unknown run"}, {"run_id", std::string(req.matches[1])}});
        send_json(res, 200, r->to_json());
    });
    server.Get("/api/templates", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.templates_json());
    });
    server.Post("/api/eval", [&service](const httplib::Request& req, httplib::Response& res) {
        auto body = json_body(req, res);
        if (!body) return;
        if (!body->contains("dataset_path") || !(*body)["dataset_path"].is_string())
            return field_error(res, "dataset_path", "required string");
        const std::filesystem::path path = (*body)["dataset_path"].get<std::string>();
        if (!std::filesystem::exists(path)) return field_error(res, "dataset_path", "not found");
        const std::string system = body->value("system", std::string("pipeline"));
        std::optional<std::string> split;
        if (body->contains("split") && (*body)["split"].is_string()) split = (*body)["split"].get<std::string>();
        const auto report = service.eval(path, system, split);
        auto j = report.to_json();
        j["summary"] = report.summary_table();
        send_json(res, 200, j);
    });
    server.Get("/api/health", [&service](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, service.health());
    });
    if (!service.config().static_dir.empty()) server.set_mount_point("/", service.config().static_dir.string());
}

int serve(Service& service) {
    httplib::Server server;
    install_routes(server, service);
    const auto& c = service.config();
    std::cerr << "listening on http://" << c.host << ":" << c.port << "\n";
    if (!server.listen(c.host, c.port)) {
        std::cerr << "cannot listen on " << c.host << ":" << c.port << "\n";
        return 1;
    }
    return 0;
}

}  // namespace ehrq
