#include "ehrq/cli.hpp"

#include <chrono>
#include <memory>

#include "CLI11.hpp"

#include "ehrq/database.hpp"
#include "ehrq/dataset.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/evaluator.hpp"
#include "ehrq/service.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Database open_db(const std::string& root) {
    if (!std::filesystem::is_directory(root)) throw LoadError("database directory not found: " + root);
    return preprocess(load_tables(root));
}

void print_trace(const RunResult& r, std::ostream& out) {
    const auto& t = r.trace;
    out << "final_status: " << to_string(t.final_status) << "  attempts: " << t.attempts.size() << "/" << t.k_max
        << "\n";
    for (const auto& a : t.annotations) out << "term: " << a.surface << " -> " << a.canonical << "\n";
    for (const auto& e : t.retrieved) {
        char sim[16];
        std::snprintf(sim, sizeof sim, "%.3f", e.similarity);
        out << "exemplar " << sim << ": " << e.question << "\n";
    }
    for (std::size_t i = 0; i < t.attempts.size(); ++i) {
        const auto& a = t.attempts[i];
        out << "attempt " << i + 1 << ": " << (a.outcome.ok ? "ok" : "error") << "\n";
        out << "  sql: " << (a.program.sql_text.empty() ? trim(a.llm_output) : a.program.sql_text) << "\n";
        if (a.outcome.error)
            out << "  error: " << to_string(a.outcome.error->kind) << ": " << a.outcome.error->message << "\n";
    }
    if (!t.backend_error.empty()) out << "backend error: " << t.backend_error << "\n";
}

struct PipelineOptions {
    std::string templates = default_templates_path().string();
    std::string lexicon = default_lexicon_path().string();
    std::string exemplars = default_exemplars_path().string();
    int k_max = 3;
    std::size_t top_k = 3;

    void add_to(CLI::App* app) {
        app->add_option("--templates", templates, "Template bank JSON")->check(CLI::ExistingFile);
        app->add_option("--lexicon", lexicon, "Lexicon JSON")->check(CLI::ExistingFile);
        app->add_option("--exemplars", exemplars, "Exemplar JSONL")->check(CLI::ExistingFile);
        app->add_option("--k-max", k_max, "Generation attempts")->check(CLI::Range(1, 100));
        app->add_option("--top-k", top_k, "Retrieved exemplars")->check(CLI::Range(1, 100));
    }
    ServiceConfig config(const std::string& db) const {
        ServiceConfig c;
        c.db = db;
        c.templates = templates;
        c.lexicon = lexicon;
        c.exemplars = exemplars;
        c.k_max = k_max;
        c.top_k = top_k;
        return c;
    }
};

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"EHR question answering toolkit: synthetic data, dataset building, text-to-SQL, evaluation"};
    app.require_subcommand(1);

    // gen-db
    std::uint64_t seed = 7;
    std::string scale_spec, out_dir;
    bool gzip = false;
    auto* gen = app.add_subcommand("gen-db", "Generate a synthetic EHR database");
    gen->add_option("--seed", seed, "RNG seed");
    gen->add_option("--scale", scale_spec, "e.g. patients=100,admissions=1-3,labs=6-14,notes=2,years=2150-2159");
    gen->add_option("--out", out_dir, "Output directory")->required();
    gen->add_flag("--gzip", gzip, "Write .csv.gz tables");

    // build-dataset
    std::string db, config_path, templates_path = default_templates_path().string();
    std::optional<std::uint64_t> seed_override;
    auto* bd = app.add_subcommand("build-dataset", "Build train/valid/test splits by executing gold queries");
    bd->add_option("--db", db, "Database directory")->required();
    bd->add_option("--templates", templates_path, "Template bank JSON")->check(CLI::ExistingFile);
    bd->add_option("--config", config_path, "Dataset config JSON (default: 0.1x desk matrix)")
        ->check(CLI::ExistingFile);
    bd->add_option("--out", out_dir, "Output directory")->required();
    bd->add_option("--seed", seed_override, "Override the config seed");

    // ask
    std::string question, llm_script;
    bool as_json = false;
    PipelineOptions popts;
    auto* ask = app.add_subcommand("ask", "Answer one question and print the repair trace");
    ask->add_option("--db", db, "Database directory")->required();
    ask->add_option("question", question, "Question text")->required();
    ask->add_option("--llm-script", llm_script, "Scripted model replies (JSON)")->check(CLI::ExistingFile);
    ask->add_flag("--json", as_json, "Print the answer and trace as JSON");
    popts.add_to(ask);

    // eval
    std::string dataset, system = "pipeline", split, report_path;
    auto* ev = app.add_subcommand("eval", "Score a system on a dataset (EM, EX, judge score)");
    ev->add_option("--db", db, "Database directory")->required();
    ev->add_option("--dataset", dataset, "Dataset directory or .jsonl file")->required()->check(CLI::ExistingPath);
    ev->add_option("--system", system, "echo-gold, pipeline or sentinel")
        ->check(CLI::IsMember({"echo-gold", "pipeline", "sentinel"}));
    ev->add_option("--split", split, "Only this split");
    ev->add_option("--report", report_path, "Write the per-item report as JSON");
    popts.add_to(ev);

    // verify
    std::optional<std::size_t> sample;
    auto* ver = app.add_subcommand("verify", "Re-execute stored queries and flag inconsistencies");
    ver->add_option("--dataset", dataset, "Dataset directory or .jsonl file")->required()->check(CLI::ExistingPath);
    ver->add_option("--db", db, "Database directory")->required();
    ver->add_option("--sample", sample, "Audit a seeded random sample of this size");
    ver->add_option("--seed", seed, "Sample seed");
    ver->add_option("--templates", templates_path, "Template bank JSON")->check(CLI::ExistingFile);

    // serve
    std::optional<int> port;
    auto* srv = app.add_subcommand("serve", "Run the HTTP API");
    srv->add_option("--config", config_path, "Service config (key = value)")->required()->check(CLI::ExistingFile);
    srv->add_option("--port", port, "Override the configured port");

    // export-exemplars
    std::size_t per_template = 2;
    auto* exp = app.add_subcommand("export-exemplars", "Write retrieval exemplars instantiated from the bank");
    exp->add_option("--db", db, "Database directory")->required();
    exp->add_option("--out", out_dir, "Output JSONL")->required();
    exp->add_option("--templates", templates_path, "Template bank JSON")->check(CLI::ExistingFile);
    exp->add_option("--per-template", per_template, "Exemplars per template")->check(CLI::Range(1, 100));
    exp->add_option("--seed", seed, "RNG seed");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto t0 = std::chrono::steady_clock::now();
        if (gen->parsed()) {
            const SynthScale scale = scale_spec.empty() ? SynthScale{} : SynthScale::parse(scale_spec);
            scale.validate();
            const Database d = generate_synthetic(seed, scale);
            write_tables(d, out_dir, gzip);
            std::size_t rows = 0;
            for (const auto& [name, n] : row_counts(d)) rows += n;
            out << "wrote " << d.tables.size() << " tables (" << rows << " rows, " << d.notes.size() << " notes) to "
                << out_dir << "\n";
            return 0;
        }
        if (bd->parsed()) {
            DatasetConfig cfg = config_path.empty() ? DatasetConfig::desk() : DatasetConfig::load(config_path);
            if (seed_override) cfg.seed = *seed_override;
            const Database d = open_db(db);
            const auto bank = load_templates(templates_path);
            const auto ds = build(d, bank, cfg);
            write_dataset(ds, out_dir);
            out << render_stats(stats(ds));
            char line[96];
            std::snprintf(line, sizeof line, "%zu records in %.2f s\n", ds.all().size(), seconds_since(t0));
            out << line;
            return 0;
        }
        if (ask->parsed()) {
            Service service(popts.config(db), open_db(db));
            if (!llm_script.empty())
                service.set_llm(ScriptedBackend::from_file(llm_script));
            const auto r = service.run_pipeline(question);
            if (as_json) {
                out << nlohmann::json{{"answer", r.answer}, {"trace", to_json(r.trace)}}.dump(2) << "\n";
            } else {
                out << r.answer << "\n";
                print_trace(r, out);
            }
            return r.trace.final_status == FinalStatus::backend_error ? 1 : 0;
        }
        if (ev->parsed()) {
            Service service(popts.config(db), open_db(db));
            const auto report = service.eval(dataset, system, split.empty() ? std::nullopt
                                                                            : std::optional<std::string>(split));
            out << report.summary_table();
            if (!report_path.empty()) write_file(report_path, report.to_json().dump(2) + "\n");
            return 0;
        }
        if (ver->parsed()) {
            const auto ds = load_dataset(dataset);
            const Database d = open_db(db);
            const auto bank = load_templates(templates_path);
            SqlExecutor executor(d);
            OfflineTextBackend text;
            const auto report = verify(ds, executor, text, &bank, sample, seed);
            out << "audited " << report.audited << " of " << report.total << " records, " << report.flags.size()
                << " flags\n";
            for (const auto& f : report.flags) out << f.kind << " " << f.instance_id << ": " << f.detail << "\n";
            return report.flags.empty() ? 0 : 1;
        }
        if (srv->parsed()) {
            ServiceConfig cfg = ServiceConfig::load(config_path);
            if (port) cfg.port = *port;
            auto service = Service::open(cfg);
            return serve(*service);
        }
        if (exp->parsed()) {
            const Database d = open_db(db);
            const auto bank = load_templates(templates_path);
            SqlExecutor executor(d);
            OfflineTextBackend text;
            const auto ex = exemplars_from_bank(bank, executor, text, seed, per_template);
            write_exemplars(ex, out_dir);
            out << "wrote " << ex.size() << " exemplars to " << out_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace ehrq
