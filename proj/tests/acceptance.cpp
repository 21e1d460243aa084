// Acceptance suite. One line per criterion; exit status is the number of
// failures (capped at 1).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ehrq/database.hpp"
#include "ehrq/dataset.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/evaluator.hpp"
#include "ehrq/executor.hpp"
#include "ehrq/lexicon.hpp"
#include "ehrq/llm.hpp"
#include "ehrq/pipeline.hpp"
#include "ehrq/retrieval.hpp"
#include "ehrq/schema.hpp"
#include "ehrq/service.hpp"
#include "ehrq/sql.hpp"
#include "ehrq/templates.hpp"
#include "ehrq/text_backend.hpp"
#include "ehrq/util.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace ehrq;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Verdict()>& body) {
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::printf("%s  %-28s %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int decimals = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

// Larger database shared by the dataset criteria.
const Database& build_db() {
    static const Database db = [] {
        SynthScale scale;
        scale.n_patients = 200;
        return preprocess(generate_synthetic(11, scale));
    }();
    return db;
}

Service& fixture_service() {
    static std::unique_ptr<Service> service = [] {
        ServiceConfig c;
        c.runs = testing::scratch_dir("acceptance-runs").string();
        return std::make_unique<Service>(c, testing::fixture_db(), BackendEnv{});
    }();
    return *service;
}

const DatasetSplits& test_split_600() {
    static const DatasetSplits ds = [] {
        SqlExecutor executor(build_db());
        OfflineTextBackend text;
        return build(executor, build_db(), testing::bank(),
                     DatasetConfig::with_level_totals(7, {{"test", {300, 300}}}), text);
    }();
    return ds;
}

Verdict reflexivity() {
    const auto items = instances(test_split_600(), "test");
    SqlExecutor executor(build_db());
    OfflineTextBackend text;
    const auto t0 = std::chrono::steady_clock::now();
    const auto report = evaluate(items, echo_gold_system(), executor, text);
    const double secs = seconds_since(t0);
    const auto& o = report.overall;
    const bool ok = items.size() == 600 && o.em && o.ex && *o.em == 1.0 && *o.ex == 1.0 && secs < 60.0;
    return {ok, std::to_string(items.size()) + " items, EM " + fmt(o.em.value_or(-1)) + " EX " +
                    fmt(o.ex.value_or(-1)) + " in " + fmt(secs, 2) + " s (< 60)"};
}

Verdict em_strict_ex_tolerant() {
    const auto& db = testing::fixture_db();
    const std::int64_t s = testing::single_admission_patient();
    const Table& p = db.table("patients");
    const auto sid = p.require_column("subject_id");
    const std::string s1 = std::to_string(std::get<std::int64_t>(p.rows[0][sid]));
    const std::string s2 = std::to_string(std::get<std::int64_t>(p.rows[1][sid]));
    const std::string ss = std::to_string(s);

    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"select max(anchor_age) from patients",
         "select anchor_age from patients order by anchor_age desc limit 1"},
        {"select count(*) from patients where anchor_age between 40 and 60",
         "select count(*) from patients where anchor_age >= 40 and anchor_age <= 60"},
        {"select hadm_id from admissions where subject_id in (" + s1 + ", " + s2 + ")",
         "select hadm_id from admissions where subject_id = " + s1 + " or subject_id = " + s2},
        {"select count(distinct subject_id) from admissions",
         "select count(*) from patients where subject_id in (select subject_id from admissions)"},
        {"select count(*) from admissions a join patients p on a.subject_id = p.subject_id where p.gender = 'F'",
         "select count(*) from admissions where subject_id in (select subject_id from patients where gender = 'F')"},
        {"select avg(anchor_age) from patients", "select sum(anchor_age) * 1.0 / count(anchor_age) from patients"},
        {"select count(*) from patients where gender = 'M'", "select count(*) from patients where gender like 'M'"},
        {"select count(*) from patients where anchor_age >= 50",
         "select count(*) from patients where not (anchor_age < 50)"},
        {"select min(valuenum) from labevents where subject_id = " + ss,
         "select valuenum from labevents where subject_id = " + ss +
             " and valuenum is not null order by valuenum asc limit 1"},
        {"select count(*) from admissions where subject_id = " + ss,
         "select count(hadm_id) from admissions where subject_id = " + ss},
    };

    SqlExecutor executor(db);
    OfflineTextBackend text;
    int good = 0;
    std::string bad;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& [a, b] = pairs[i];
        const auto ra = executor.execute(a, text);
        const bool nonempty = ra.ok && !ra.rows.empty() && !is_null(ra.rows[0][0]);
        const int em = exact_match(b, a);
        const int ex = execution_accuracy(b, a, executor, text);
        if (nonempty && em == 0 && ex == 1) ++good;
        else bad += " #" + std::to_string(i + 1) + "(em=" + std::to_string(em) + ",ex=" + std::to_string(ex) + ")";
    }
    return {good == static_cast<int>(pairs.size()), std::to_string(good) + "/" + std::to_string(pairs.size()) +
                                                        " pairs EM=0 EX=1" + bad};
}

Verdict em_implies_ex() {
    const auto items = instances(test_split_600(), "test");
    SqlExecutor executor(build_db());
    OfflineTextBackend text;
    std::size_t scored = 0, counter = 0;
    auto tally = [&](const EvalReport& r) {
        for (const auto& it : r.items) {
            if (!it.em) continue;
            ++scored;
            if (*it.em == 1 && it.ex.value_or(0) == 0) ++counter;
        }
    };
    tally(evaluate(items, echo_gold_system(), executor, text));

    ServiceConfig c;
    c.runs = testing::scratch_dir("acceptance-runs-600").string();
    Service service(c, build_db(), BackendEnv{});
    tally(evaluate(items, pipeline_system(service.deps()), executor, text));
    return {counter == 0, std::to_string(scored) + " scored items (echo-gold + pipeline), " + std::to_string(counter) +
                              " with em=1 ex=0"};
}

Verdict termination() {
    Service& service = fixture_service();
    const std::vector<std::string> questions = {
        "how many patients are there?", "Count the admission num of patient " +
                                            std::to_string(testing::single_admission_patient()) + ".",
        "what is the maximum anchor age?", "list every drug", "when was the last chest x-ray?"};
    std::size_t ok_fail = 0, ok_once = 0;
    for (const auto& q : questions) {
        auto deps = service.deps();
        ScriptedBackend always({"select nope from patients", "this is not sql", "select * from nowhere"});
        deps.llm = &always;
        deps.k_max = 3;
        const auto a = run(q, deps);
        if (a.trace.attempts.size() == 3 && a.trace.final_status == FinalStatus::exhausted) ++ok_fail;

        ScriptedBackend once({"select nope from patients", "select count(*) from patients"});
        deps.llm = &once;
        const auto b = run(q, deps);
        if (b.trace.attempts.size() == 2 && b.trace.final_status == FinalStatus::answered) ++ok_once;
    }
    const auto n = questions.size();
    return {ok_fail == n && ok_once == n, "always-fail 3/exhausted " + std::to_string(ok_fail) + "/" +
                                              std::to_string(n) + ", fail-once 2/answered " + std::to_string(ok_once) +
                                              "/" + std::to_string(n)};
}

Verdict terminology() {
    const Lexicon& lex = testing::lexicon();
    std::size_t forms = 0, wrong = 0;
    for (const auto& e : lex.entries()) {
        std::vector<std::string> surfaces = e.synonyms;
        surfaces.push_back(e.canonical);
        for (const auto& s : surfaces) {
            ++forms;
            if (normalize(s, lex) != e.canonical) ++wrong;
        }
    }
    const bool rbc = normalize("rbc", lex) == "red blood cell";

    Rng rng(20240601);
    const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCXYZ0123456789 -_.,/'%";
    std::size_t not_idempotent = 0;
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        if (rng.chance(0.3)) {
            const auto& surfaces = lex.surfaces();
            s = surfaces[rng.index(surfaces.size())];
            if (rng.chance(0.5)) s = "  " + s + " ";
            if (rng.chance(0.3)) std::transform(s.begin(), s.end(), s.begin(), ::toupper);
        } else {
            const auto len = rng.uniform_int(0, 24);
            for (std::int64_t k = 0; k < len; ++k) s += alphabet[rng.index(alphabet.size())];
        }
        const auto once = normalize(s, lex);
        if (normalize(once, lex) != once) ++not_idempotent;
    }
    return {wrong == 0 && rbc && not_idempotent == 0,
            std::to_string(forms - wrong) + "/" + std::to_string(forms) + " surface forms, rbc->red blood cell " +
                (rbc ? "yes" : "no") + ", idempotence violations " + std::to_string(not_idempotent) + "/10000"};
}

EmbeddingVector unit(EmbeddingVector v) {
    double n = 0;
    for (double x : v) n += x * x;
    n = std::sqrt(n);
    if (n > 0)
        for (double& x : v) x /= n;
    return v;
}

Verdict retrieval_exactness() {
    Rng rng(99);
    std::size_t mismatches = 0;
    for (int corpus = 0; corpus < 1000; ++corpus) {
        const auto n = static_cast<std::size_t>(rng.uniform_int(1, 60));
        const auto dim = static_cast<std::size_t>(rng.uniform_int(2, 16));
        std::vector<Exemplar> ex(n);
        std::vector<EmbeddingVector> vecs;
        for (std::size_t i = 0; i < n; ++i) {
            ex[i].question = "q" + std::to_string(i);
            if (i > 0 && rng.chance(0.1)) {
                vecs.push_back(vecs[rng.index(i)]);  // exact duplicate forces a tie
                continue;
            }
            EmbeddingVector v(dim);
            for (double& x : v) x = rng.uniform() * 2 - 1;
            vecs.push_back(unit(v));
        }
        EmbeddingVector q(dim);
        for (double& x : q) x = rng.uniform() * 2 - 1;
        q = unit(q);
        const auto k = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(n) + 2));

        std::vector<std::pair<double, std::size_t>> scan;
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0, na = 0, nb = 0;
            for (std::size_t d = 0; d < dim; ++d) {
                dot += q[d] * vecs[i][d];
                na += q[d] * q[d];
                nb += vecs[i][d] * vecs[i][d];
            }
            scan.emplace_back(dot / (std::sqrt(na) * std::sqrt(nb)), i);
        }
        std::stable_sort(scan.begin(), scan.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        scan.resize(std::min(k, n));

        const ExemplarIndex index(ex, vecs, "random");
        const auto got = index.top_k(q, k);
        bool same = got.size() == scan.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].index == scan[i].second && std::abs(got[i].similarity - scan[i].first) < 1e-9;
        if (!same) ++mismatches;
    }

    HashedTrigramEmbedder embedder;
    const ExemplarIndex bank_index(load_exemplars(default_exemplars_path()), embedder);
    double worst = 0;
    for (const auto& e : bank_index.exemplars()) {
        const auto top = bank_index.top_k(e.question, embedder, 1);
        worst = std::max(worst, std::abs(top.at(0).similarity - 1.0));
    }
    return {mismatches == 0 && worst <= 1e-9, std::to_string(1000 - mismatches) +
                                                  "/1000 corpora match brute force, self-similarity max |1-s| " +
                                                  fmt(worst * 1e12, 3) + "e-12 over " +
                                                  std::to_string(bank_index.size()) + " exemplars"};
}

Verdict unanswerable() {
    const auto& db = testing::fixture_db();
    SqlExecutor executor(db);
    OfflineTextBackend text;
    Rng rng(31);
    std::vector<std::string> questions;
    std::int64_t fake = 99990001;
    for (const auto* t : testing::bank().by_modality(Modality::table)) {
        if (questions.size() == 20) break;
        if (!t->slot("subject_id") || to_lower(t->gold_query_template).find("count(") != std::string::npos) continue;
        QuestionInstance inst;
        try {
            inst = instantiate(*t, executor, text, rng);
        } catch (const InstantiationError&) {
            continue;
        }
        std::string q = inst.question;
        const std::string real = inst.bindings.at("subject_id");
        const auto pos = q.find(real);
        if (pos == std::string::npos) continue;
        q.replace(pos, real.size(), std::to_string(fake++));
        questions.push_back(q);
    }

    Service& service = fixture_service();
    int exact = 0;
    std::string bad;
    for (const auto& q : questions) {
        const auto r = service.run_pipeline(q);
        if (r.answer == kSentinel) ++exact;
        else bad += " [" + q + " -> " + r.answer + "]";
    }
    return {questions.size() == 20 && exact == 20,
            std::to_string(exact) + "/" + std::to_string(questions.size()) + " answered with the sentinel" + bad};
}

// Impression section of a report, split into lowercased findings.
std::set<std::string> impression_findings(const std::string& report) {
    std::set<std::string> out;
    const auto pos = report.find("IMPRESSION:");
    if (pos == std::string::npos) return out;
    std::string body = report.substr(pos + 11);
    std::replace(body.begin(), body.end(), '\n', ' ');
    body = to_lower(trim(body));
    if (!body.empty() && body.back() == '.') body.pop_back();
    std::stringstream ss(body);
    for (std::string part; std::getline(ss, part, ',');) out.insert(trim(part));
    return out;
}

Verdict tool_calls() {
    SynthScale scale;
    scale.n_patients = 40;
    Database raw = generate_synthetic(23, scale);
    auto& list = raw.tables.at("cxr_record_list");
    auto& meta = raw.tables.at("cxr_metadata");
    if (list.rows.size() < 50) return {false, "generator produced only " + std::to_string(list.rows.size()) + " reports"};
    list.rows.resize(50);
    const auto study = list.require_column("study_id");
    const auto path_col = list.require_column("path");
    std::set<std::int64_t> kept;
    std::set<std::string> kept_paths;
    for (const auto& r : list.rows) {
        kept.insert(std::get<std::int64_t>(r[study]));
        kept_paths.insert(std::get<std::string>(r[path_col]));
    }
    const auto mstudy = meta.require_column("study_id");
    std::erase_if(meta.rows, [&](const Row& r) { return !kept.count(std::get<std::int64_t>(r[mstudy])); });
    std::erase_if(raw.notes, [&](const auto& kv) {
        return kv.first.rfind("notes/cxr/", 0) == 0 && !kept_paths.count(kv.first);
    });

    const auto root = testing::scratch_dir("acceptance-cxr50");
    write_tables(raw, root);
    const Database db = preprocess(load_tables(root));

    // Brute force over the files on disk, independent of the executor.
    std::map<std::int64_t, std::vector<std::set<std::string>>> by_subject;
    std::size_t files = 0;
    const std::regex name(R"(p(\d+)/s\d+\.txt$)");
    for (const auto& entry : fs::recursive_directory_iterator(root / "notes" / "cxr")) {
        if (!entry.is_regular_file()) continue;
        std::smatch m;
        const std::string p = entry.path().generic_string();
        if (!std::regex_search(p, m, name)) continue;
        std::ifstream in(entry.path());
        std::stringstream buf;
        buf << in.rdbuf();
        by_subject[std::stoll(m[1])].push_back(impression_findings(buf.str()));
        ++files;
    }
    if (files != 50) return {false, std::to_string(files) + " report files on disk, expected 50"};

    std::vector<std::int64_t> subjects;
    for (const auto& [s, reports] : by_subject) subjects.push_back(s);
    const auto& vocab = findings_vocabulary();
    Rng rng(5);
    SqlExecutor executor(db);
    OfflineTextBackend text;
    int agree = 0, nonzero = 0;
    std::string bad;
    for (int i = 0; i < 20; ++i) {
        const auto s = subjects[rng.index(subjects.size())];
        const auto& reports = by_subject[s];
        std::string finding = vocab[rng.index(vocab.size())];
        if (rng.chance(0.5) && !reports[0].empty()) finding = *reports[0].begin();
        std::int64_t expected = 0;
        for (const auto& r : reports) expected += r.count(finding) ? 1 : 0;
        const std::string sql = "select count(*) from cxr_record_list where subject_id = " + std::to_string(s) +
                                " and text_func(path, 'does the chest x-ray report indicate " + finding +
                                "?') = 'yes'";
        const auto out = executor.execute(sql, text);
        const bool ok = out.ok && out.rows.size() == 1 && out.rows[0][0] == Cell{expected};
        if (ok) ++agree;
        else bad += " [" + std::to_string(s) + "/" + finding + " expected " + std::to_string(expected) + "]";
        nonzero += expected > 0 ? 1 : 0;
    }
    return {agree == 20, std::to_string(agree) + "/20 counts match a scan of 50 report files (" +
                             std::to_string(nonzero) + " nonzero)" + bad};
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

Verdict dataset_reproduction() {
    const auto cfg = DatasetConfig::desk();
    SqlExecutor executor(build_db());
    OfflineTextBackend text;

    const auto t0 = std::chrono::steady_clock::now();
    const auto ds = build(executor, build_db(), testing::bank(), cfg, text);
    const auto a = testing::scratch_dir("acceptance-build-a");
    write_dataset(ds, a);
    const auto report = verify(ds, executor, text, &testing::bank());
    const double secs = seconds_since(t0);

    const auto b = testing::scratch_dir("acceptance-build-b");
    write_dataset(build(executor, build_db(), testing::bank(), cfg, text), b);
    bool identical = true;
    std::size_t files = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        ++files;
        identical = identical && read_bytes(entry.path()) == read_bytes(b / entry.path().filename());
    }

    const auto m = stats(ds);
    const bool matrix = m == cfg.counts;
    bool ratio = true;
    for (const auto& [split, mods] : m)
        for (const auto& [level, n] : mods.at("table"))
            ratio = ratio && n == 2 * mods.at("cxr_report").at(level) && n == 2 * mods.at("discharge").at(level);

    return {matrix && ratio && identical && files > 0 && report.flags.empty() && secs < 120.0,
            std::to_string(cfg.total()) + " records, matrix " + (matrix ? "exact" : "differs") + ", 2:1:1 " +
                (ratio ? "yes" : "no") + ", byte-identical " + (identical ? "yes" : "no") + " (" +
                std::to_string(files) + " files), verify flags " + std::to_string(report.flags.size()) + ", " +
                fmt(secs, 2) + " s (< 120)"};
}

Verdict sandbox_safety() {
    const Database& db = testing::fixture_db();
    const auto before_db = checksum(db);
    SqlExecutor executor(db);
    OfflineTextBackend text;
    const auto before = executor.content_checksum();

    std::vector<std::string> valid;
    for (const auto& e : load_exemplars(default_exemplars_path())) valid.push_back(e.query);
    const std::vector<std::string> hostile = {
        "drop table patients",
        "delete from admissions",
        "update patients set anchor_age = 0",
        "insert into patients values (1, 1, 'F', 1, 1, NULL)",
        "create table x (a)",
        "attach database ':memory:' as other",
        "pragma writable_schema = 1",
        "select * from patients; drop table patients",
        "vacuum",
        "select load_extension('x')",
        "select text_func('notes/../../etc/passwd', 'what?')",
        "select text_func(text, 'drop table patients') from discharge limit 1",
        "with recursive r(x) as (select 1 union all select x + 1 from r) select count(*) from r",
        "replace into patients values (1, 1, 'F', 1, 1, NULL)",
        "alter table patients rename to p2",
        "begin; delete from patients; commit",
    };
    const std::string junk = "();,'\"*%-=<>abcdefghijklmnopqrstuvwxyz0123456789 \n\t";

    Rng rng(1234);
    ExecutionLimits limits;
    limits.timeout = std::chrono::milliseconds(200);
    std::size_t errors = 0;
    for (int i = 0; i < 1000; ++i) {
        std::string sql;
        switch (rng.index(4)) {
            case 0: sql = valid[rng.index(valid.size())]; break;
            case 1: sql = hostile[rng.index(hostile.size())]; break;
            case 2: {
                sql = valid[rng.index(valid.size())];
                sql = sql.substr(0, rng.index(sql.size() + 1));
                const auto inserts = rng.uniform_int(0, 4);
                for (std::int64_t k = 0; k < inserts && !sql.empty(); ++k)
                    sql.insert(rng.index(sql.size()), 1, junk[rng.index(junk.size())]);
                break;
            }
            default: {
                const auto len = rng.uniform_int(0, 60);
                for (std::int64_t k = 0; k < len; ++k) sql += junk[rng.index(junk.size())];
            }
        }
        const auto out = executor.execute(sql, text, limits);
        errors += out.ok ? 0 : 1;
    }
    const bool same = executor.content_checksum() == before && checksum(db) == before_db;
    return {same, "1000 executions (" + std::to_string(errors) + " rejected), checksums " +
                      (same ? "unchanged" : "CHANGED")};
}

}  // namespace

int main() {
    criterion("metric-reflexivity", reflexivity);
    criterion("em-strict-ex-tolerant", em_strict_ex_tolerant);
    criterion("em-implies-ex", em_implies_ex);
    criterion("repair-loop-termination", termination);
    criterion("terminology", terminology);
    criterion("retrieval-exactness", retrieval_exactness);
    criterion("unanswerable", unanswerable);
    criterion("tool-call-correctness", tool_calls);
    criterion("dataset-reproduction", dataset_reproduction);
    criterion("sandbox-safety", sandbox_safety);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
