#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ehrq/database.hpp"
#include "ehrq/evaluator.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/llm.hpp"
#include "ehrq/pipeline.hpp"
#include "ehrq/retrieval.hpp"
#include "ehrq/templates.hpp"

namespace httplib {
class Server;
}

namespace ehrq {

/// Endpoints and keys, read only from EHRQ_LLM_URL, EHRQ_LLM_KEY,
/// EHRQ_EMBED_URL and EHRQ_TEXT_URL. Unset URLs select offline backends.
struct BackendEnv {
    std::string llm_url, llm_key, embed_url, text_url;
    static BackendEnv from_env();
};

struct Backends {
    std::unique_ptr<LlmBackend> llm;
    std::unique_ptr<Embedder> embedder;
    std::unique_ptr<TextBackend> text;
};
Backends make_backends(const BackendEnv& env, const TemplateBank& bank, const Lexicon& lexicon);

/// Non-secret settings. File format: `key = value` lines, `#` comments,
/// optional double quotes around values.
struct ServiceConfig {
    std::filesystem::path db;  // directory written by gen-db
    std::filesystem::path templates = default_templates_path();
    std::filesystem::path lexicon = default_lexicon_path();
    std::filesystem::path exemplars = default_exemplars_path();
    std::filesystem::path runs = "runs";
    std::filesystem::path static_dir;  // optional console build
    std::string host = "127.0.0.1";
    int port = 8080;
    int k_max = 3;
    std::size_t top_k = 3;
    std::string cors_origin = "*";

    static ServiceConfig parse(std::string_view text);
    static ServiceConfig load(const std::filesystem::path& path);
    /// Throws ConfigError when a required path is missing.
    void validate() const;
    nlohmann::json to_json() const;
};

struct RunRecord {
    std::string run_id;
    std::string timestamp;  // UTC, ISO 8601
    std::string question;
    std::string answer;
    RepairTrace trace;
    nlohmann::json config;  // backend identities, k_max, top_k, db seed

    nlohmann::json to_json() const;
    static RunRecord from_json(const nlohmann::json& j);
};

/// One JSON document per run under a directory; never rewritten.
class RunStore {
public:
    explicit RunStore(std::filesystem::path dir);
    /// Assigns run_id when empty. Throws PersistenceError.
    std::string persist(RunRecord record);
    std::optional<RunRecord> get(const std::string& run_id) const;
    /// Newest first; `status` filters on trace.final_status.
    std::vector<RunRecord> list(std::size_t offset, std::size_t limit, std::optional<std::string> status = {},
                                std::size_t* total = nullptr) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::uint64_t next_ = 0;
    mutable std::mutex mutex_;
};

struct AskResult {
    RunRecord record;
    std::vector<std::string> warnings;
    nlohmann::json to_json() const;
};

/// Shared state behind the CLI and the HTTP API.
class Service {
public:
    Service(const ServiceConfig& config, Database db, const BackendEnv& env = BackendEnv::from_env());
    /// Loads and preprocesses config.db.
    static std::unique_ptr<Service> open(const ServiceConfig& config, const BackendEnv& env = BackendEnv::from_env());

    AskResult ask(const std::string& question, const StageObserver& observer = {});
    RunResult run_pipeline(const std::string& question, const StageObserver& observer = {});
    nlohmann::json health() const;
    nlohmann::json templates_json() const;
    EvalReport eval(const std::filesystem::path& dataset, const std::string& system = "pipeline",
                    std::optional<std::string> split = std::nullopt);

    /// Swaps the generation backend (tests inject scripted replies).
    void set_llm(std::unique_ptr<LlmBackend> llm);
    PipelineDeps deps();
    RunStore& store() { return store_; }
    const Database& db() const { return db_; }
    const ServiceConfig& config() const { return config_; }

private:
    ServiceConfig config_;
    Database db_;
    std::unique_ptr<SqlExecutor> executor_;
    TemplateBank bank_;
    Lexicon lexicon_;
    Backends backends_;
    ExemplarIndex index_;
    RunStore store_;
};

/// Registers every /api route, CORS headers and the optional static mount.
void install_routes(httplib::Server& server, Service& service);
/// Blocks until the server stops.
int serve(Service& service);

}  // namespace ehrq
