#include "ehrq/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

namespace {

constexpr std::array<Modality, 3> kModalities = {Modality::table, Modality::cxr_report, Modality::discharge};
constexpr std::array<Level, 2> kLevels = {Level::I, Level::II};

std::string key(Modality m) { return std::string(to_string(m)); }
std::string key(Level l) { return std::string(to_string(l)); }

std::size_t cell_count(const CountMatrix& m, const std::string& split, Modality mod, Level lvl) {
    auto s = m.find(split);
    if (s == m.end()) return 0;
    auto md = s->second.find(key(mod));
    if (md == s->second.end()) return 0;
    auto l = md->second.find(key(lvl));
    return l == md->second.end() ? 0 : l->second;
}

// Level a template yields when every slot is bound.
Level nominal_level(const QuestionTemplate& t) {
    Bindings all;
    for (const auto& s : t.slots) all[s.name] = "";
    return classify_level(all, &t);
}

std::optional<std::int64_t> binding_int(const Bindings& b, const std::string& name) {
    auto it = b.find(name);
    if (it == b.end()) return std::nullopt;
    std::int64_t v = 0;
    const auto& s = it->second;
    auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || end != s.data() + s.size()) return std::nullopt;
    return v;
}

}  // namespace

DatasetConfig DatasetConfig::with_level_totals(std::uint64_t seed,
                                               const std::map<std::string, std::pair<std::size_t, std::size_t>>& totals,
                                               std::array<std::size_t, 3> ratio) {
    DatasetConfig c;
    c.seed = seed;
    const std::size_t parts = ratio[0] + ratio[1] + ratio[2];
    if (parts == 0) throw ConfigError("modality ratio sums to zero");
    for (const auto& [split, lv] : totals) {
        for (Level l : kLevels) {
            const std::size_t n = l == Level::I ? lv.first : lv.second;
            std::size_t given = 0;
            for (std::size_t i = 0; i < 3; ++i) {
                const std::size_t share = i == 2 ? n - given : n * ratio[i] / parts;
                c.counts[split][key(kModalities[i])][key(l)] = share;
                given += share;
            }
        }
    }
    return c;
}

DatasetConfig DatasetConfig::desk() {
    return with_level_totals(7, {{"train", {400, 400}}, {"valid", {100, 100}}, {"test", {100, 100}}});
}

nlohmann::json DatasetConfig::to_json() const {
    return {{"seed", seed},
            {"counts", counts},
            {"max_sentinel_fraction", max_sentinel_fraction},
            {"templates", templates},
            {"attempts_per_item", attempts_per_item}};
}

DatasetConfig DatasetConfig::from_json(const nlohmann::json& j) {
    DatasetConfig c;
    try {
        c.seed = j.value("seed", c.seed);
        c.max_sentinel_fraction = j.value("max_sentinel_fraction", c.max_sentinel_fraction);
        c.attempts_per_item = j.value("attempts_per_item", c.attempts_per_item);
        if (j.contains("templates")) c.templates = j.at("templates").get<std::vector<std::string>>();
        if (j.contains("level_totals")) {
            std::map<std::string, std::pair<std::size_t, std::size_t>> totals;
            for (const auto& [split, v] : j.at("level_totals").items())
                totals[split] = {v.at("I").get<std::size_t>(), v.at("II").get<std::size_t>()};
            std::array<std::size_t, 3> ratio = {2, 1, 1};
            if (j.contains("modality_ratio")) ratio = j.at("modality_ratio").get<std::array<std::size_t, 3>>();
            c.counts = with_level_totals(c.seed, totals, ratio).counts;
        }
        if (j.contains("counts")) c.counts = j.at("counts").get<CountMatrix>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dataset config: ") + e.what());
    }
    c.validate();
    return c;
}

DatasetConfig DatasetConfig::load(const std::filesystem::path& path) {
    try {
        return from_json(nlohmann::json::parse(read_file(path.string())));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

void DatasetConfig::validate() const {
    for (const auto& [split, mods] : counts) {
        if (std::find_if(kSplits.begin(), kSplits.end(), [&](const char* s) { return split == s; }) == kSplits.end())
            throw ConfigError("dataset config: unknown split '" + split + "'");
        for (const auto& [mod, levels] : mods) {
            try {
                parse_modality(mod);
                for (const auto& [lvl, n] : levels) parse_level(lvl);
            } catch (const ValidationError& e) {
                throw ConfigError(std::string("dataset config: ") + e.what());
            }
        }
    }
    if (!(max_sentinel_fraction >= 0.0 && max_sentinel_fraction <= 1.0))
        throw ConfigError("dataset config: max_sentinel_fraction must be within [0, 1]");
    if (attempts_per_item == 0) throw ConfigError("dataset config: attempts_per_item must be positive");
}

std::size_t DatasetConfig::total() const {
    std::size_t n = 0;
    for (const auto& [s, mods] : counts)
        for (const auto& [m, levels] : mods)
            for (const auto& [l, c] : levels) n += c;
    return n;
}

std::vector<const DatasetRecord*> DatasetSplits::all() const {
    std::vector<const DatasetRecord*> out;
    for (const char* s : kSplits) {
        auto it = splits.find(s);
        if (it == splits.end()) continue;
        for (const auto& r : it->second) out.push_back(&r);
    }
    return out;
}

DatasetSplits build(const Database& db, const TemplateBank& bank, const DatasetConfig& config) {
    SqlExecutor executor(db);
    OfflineTextBackend text;
    return build(executor, db, bank, config, text);
}

DatasetSplits build(SqlExecutor& executor, const Database& db, const TemplateBank& bank, const DatasetConfig& config,
                    TextBackend& text_backend) {
    config.validate();
    if (!db.preprocessed) throw BuildError("database must be preprocessed before building a dataset");

    std::vector<const QuestionTemplate*> pool;
    if (config.templates.empty()) {
        for (const auto& t : bank.templates()) pool.push_back(&t);
    } else {
        for (const auto& id : config.templates) pool.push_back(&bank.get(id));
    }

    // Patients are partitioned across splits in proportion to split sizes.
    std::map<std::string, std::set<std::int64_t>> patients;
    {
        const Table& p = db.table("patients");
        const std::size_t col = p.require_column("subject_id");
        std::vector<std::int64_t> ids;
        for (const auto& r : p.rows)
            if (auto id = std::get_if<std::int64_t>(&r[col])) ids.push_back(*id);
        std::sort(ids.begin(), ids.end());
        Rng rng(config.seed ^ 0x5eed5u);
        rng.shuffle(ids);
        std::vector<std::pair<std::string, std::size_t>> sizes;
        std::size_t total = 0;
        for (const char* s : kSplits) {
            std::size_t n = 0;
            for (Modality m : kModalities)
                for (Level l : kLevels) n += cell_count(config.counts, s, m, l);
            sizes.emplace_back(s, n);
            total += n;
        }
        std::size_t begin = 0, acc = 0;
        for (const auto& [s, n] : sizes) {
            acc += n;
            const std::size_t end = total ? static_cast<std::size_t>(std::llround(
                                                static_cast<double>(ids.size()) * static_cast<double>(acc) / static_cast<double>(total)))
                                          : 0;
            patients[s].insert(ids.begin() + static_cast<std::ptrdiff_t>(begin),
                               ids.begin() + static_cast<std::ptrdiff_t>(std::max(begin, end)));
            begin = std::max(begin, end);
        }
    }

    DatasetSplits out;
    std::set<std::string> seen_ids, seen_questions;
    std::map<std::string, ExecutionOutcome> sampler_cache;
    for (const char* split : kSplits) {
        auto& records = out.splits[split];
        for (Modality mod : kModalities) {
            for (Level lvl : kLevels) {
                const std::size_t want = cell_count(config.counts, split, mod, lvl);
                if (want == 0) continue;
                const std::string cell = std::string(split) + "/" + key(mod) + "/Level " + key(lvl);

                std::vector<const QuestionTemplate*> candidates;
                for (const auto* t : pool)
                    if (t->modality == mod && nominal_level(*t) == lvl) candidates.push_back(t);
                if (candidates.empty()) throw BuildError("cell " + cell + " is starved: no templates of this kind");

                Rng rng(fnv1a(cell, config.seed));
                rng.shuffle(candidates);
                const auto max_sentinel =
                    static_cast<std::size_t>(std::floor(config.max_sentinel_fraction * static_cast<double>(want)));
                const std::size_t max_attempts = config.attempts_per_item * want + 100;
                InstantiateOptions options{&patients[split], &sampler_cache};

                std::size_t made = 0, sentinels = 0, attempts = 0, cursor = 0;
                std::string last_reason = "duplicates or sentinel cap";
                while (made < want) {
                    if (candidates.empty())
                        throw BuildError("cell " + cell + " is starved after " + std::to_string(made) + " of " +
                                         std::to_string(want) + " items: " + last_reason);
                    if (++attempts > max_attempts)
                        throw BuildError("cell " + cell + " is starved after " + std::to_string(made) + " of " +
                                         std::to_string(want) + " items (" + std::to_string(max_attempts) +
                                         " attempts): " + last_reason);
                    cursor %= candidates.size();
                    const QuestionTemplate& t = *candidates[cursor];
                    QuestionInstance inst;
                    try {
                        inst = instantiate(t, executor, text_backend, rng, options);
                    } catch (const InstantiationError& e) {
                        last_reason = e.what();
                        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(cursor));
                        continue;
                    }
                    ++cursor;
                    if (inst.level != lvl) continue;
                    if (seen_ids.count(inst.instance_id) || seen_questions.count(inst.question)) continue;
                    const bool sentinel = is_sentinel(inst.gold_answer);
                    if (sentinel && sentinels >= max_sentinel) continue;
                    sentinels += sentinel ? 1 : 0;
                    seen_ids.insert(inst.instance_id);
                    seen_questions.insert(inst.question);

                    DatasetRecord r;
                    r.question_template = t.canonical_text;
                    r.subject_id = binding_int(inst.bindings, "subject_id");
                    r.hadm_id = binding_int(inst.bindings, "hadm_id");
                    r.split = split;
                    r.instance = std::move(inst);
                    records.push_back(std::move(r));
                    ++made;
                }
            }
        }
    }
    return out;
}

nlohmann::ordered_json record_to_json(const DatasetRecord& r) {
    const auto& q = r.instance;
    nlohmann::ordered_json j;
    j["format"] = kRecordFormat;
    j["instance_id"] = q.instance_id;
    j["subject_id"] = r.subject_id ? nlohmann::ordered_json(*r.subject_id) : nlohmann::ordered_json(nullptr);
    j["hadm_id"] = r.hadm_id ? nlohmann::ordered_json(*r.hadm_id) : nlohmann::ordered_json(nullptr);
    j["question_answer_pairs"] = nlohmann::ordered_json::array({{{"question_template", r.question_template},
                                                                 {"question", q.question},
                                                                 {"query_code", q.gold_query.sql_text},
                                                                 {"answer", q.gold_answer}}});
    j["template_id"] = q.template_id;
    j["level"] = to_string(q.level);
    j["modality"] = to_string(q.modality);
    j["answer_mode"] = to_string(q.answer_mode);
    j["split"] = r.split;
    j["bindings"] = q.bindings;
    return j;
}

DatasetRecord record_from_json(const nlohmann::json& j) {
    DatasetRecord r;
    try {
        if (j.at("format").get<std::string>() != kRecordFormat)
            throw ValidationError("unsupported record format " + j.at("format").dump());
        auto& q = r.instance;
        q.instance_id = j.at("instance_id").get<std::string>();
        if (!j.at("subject_id").is_null()) r.subject_id = j.at("subject_id").get<std::int64_t>();
        if (!j.at("hadm_id").is_null()) r.hadm_id = j.at("hadm_id").get<std::int64_t>();
        const auto& pairs = j.at("question_answer_pairs");
        if (!pairs.is_array() || pairs.size() != 1)
            throw ValidationError("record " + q.instance_id + ": expected one question_answer_pair");
        const auto& p = pairs[0];
        r.question_template = p.at("question_template").get<std::string>();
        q.question = p.at("question").get<std::string>();
        q.gold_query = parse_program(p.at("query_code").get<std::string>());
        q.gold_answer = p.at("answer").get<std::string>();
        q.template_id = j.at("template_id").get<std::string>();
        q.level = parse_level(j.at("level").get<std::string>());
        q.modality = parse_modality(j.at("modality").get<std::string>());
        q.answer_mode = parse_answer_mode(j.at("answer_mode").get<std::string>());
        q.bindings = j.at("bindings").get<Bindings>();
        r.split = j.at("split").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed record: ") + e.what());
    } catch (const SqlSyntaxError& e) {
        throw ValidationError(std::string("record query_code does not parse: ") + e.what());
    }
    return r;
}

std::string to_jsonl(const std::vector<DatasetRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r).dump();
        out += '\n';
    }
    return out;
}

void write_dataset(const DatasetSplits& ds, const std::filesystem::path& out) {
    std::error_code ec;
    std::filesystem::create_directories(out, ec);
    if (ec) throw PersistenceError("cannot create " + out.string() + ": " + ec.message());
    for (const char* s : kSplits) {
        auto it = ds.splits.find(s);
        write_file((out / (std::string(s) + ".jsonl")).string(),
                   it == ds.splits.end() ? std::string() : to_jsonl(it->second));
    }
    write_file((out / "stats.json").string(), stats_json(stats(ds)).dump(2) + "\n");
}

DatasetSplits load_dataset(const std::filesystem::path& path) {
    DatasetSplits ds;
    auto load_file = [&](const std::filesystem::path& file) {
        const std::string text = read_file(file.string());
        std::size_t line_no = 0;
        for (const auto& line : split(text, '\n')) {
            ++line_no;
            if (trim(line).empty()) continue;
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::parse_error& e) {
                throw ValidationError(file.string() + ":" + std::to_string(line_no) + ": " + e.what());
            }
            auto r = record_from_json(j);
            ds.splits[r.split].push_back(std::move(r));
        }
    };
    if (std::filesystem::is_directory(path)) {
        bool any = false;
        for (const char* s : kSplits) {
            const auto f = path / (std::string(s) + ".jsonl");
            if (std::filesystem::exists(f)) {
                load_file(f);
                any = true;
            }
        }
        if (!any) throw LoadError("no split files under " + path.string());
    } else {
        load_file(path);
    }
    return ds;
}

std::vector<QuestionInstance> instances(const DatasetSplits& ds, std::optional<std::string> split) {
    std::vector<QuestionInstance> out;
    for (const auto* r : ds.all())
        if (!split || r->split == *split) out.push_back(r->instance);
    return out;
}

CountMatrix stats(const DatasetSplits& ds) {
    CountMatrix m;
    for (const char* s : kSplits)
        for (Modality mod : kModalities)
            for (Level l : kLevels) m[s][key(mod)][key(l)] = 0;
    for (const auto* r : ds.all()) ++m[r->split][key(r->instance.modality)][key(r->instance.level)];
    return m;
}

nlohmann::json stats_json(const CountMatrix& m) {
    nlohmann::json j{{"format", "tqgen-stats/1"}, {"counts", m}};
    std::size_t total = 0;
    for (const auto& [s, mods] : m)
        for (const auto& [mod, lv] : mods)
            for (const auto& [l, n] : lv) total += n;
    j["total"] = total;
    return j;
}

std::string render_stats(const CountMatrix& m) {
    auto get = [&](const char* s, Modality mod, Level l) { return cell_count(m, s, mod, l); };
    std::string out;
    char line[200];
    std::snprintf(line, sizeof line, "%-12s|%-19s|%-19s|%-19s|\n", "", " Train", " Valid", " Test");
    out += line;
    std::snprintf(line, sizeof line, "%-12s|%9s %9s|%9s %9s|%9s %9s|\n", "", "Level I", "Level II", "Level I",
                  "Level II", "Level I", "Level II");
    out += line;
    const std::array<std::pair<Modality, const char*>, 3> rows = {
        {{Modality::table, "Table"}, {Modality::cxr_report, "CXR report"}, {Modality::discharge, "Discharge"}}};
    std::array<std::size_t, 6> totals{};
    for (const auto& [mod, name] : rows) {
        std::array<std::size_t, 6> v{};
        for (std::size_t s = 0; s < 3; ++s)
            for (std::size_t l = 0; l < 2; ++l) {
                v[s * 2 + l] = get(kSplits[s], mod, kLevels[l]);
                totals[s * 2 + l] += v[s * 2 + l];
            }
        std::snprintf(line, sizeof line, "%-12s|%9zu %9zu|%9zu %9zu|%9zu %9zu|\n", name, v[0], v[1], v[2], v[3], v[4],
                      v[5]);
        out += line;
    }
    std::snprintf(line, sizeof line, "%-12s|%9zu %9zu|%9zu %9zu|%9zu %9zu|\n", "Total", totals[0], totals[1],
                  totals[2], totals[3], totals[4], totals[5]);
    out += line;
    return out;
}

nlohmann::json VerificationReport::to_json() const {
    nlohmann::json j{{"total", total}, {"audited", audited}, {"flags", nlohmann::json::array()}};
    for (const auto& f : flags)
        j["flags"].push_back({{"instance_id", f.instance_id}, {"kind", f.kind}, {"detail", f.detail}});
    return j;
}

VerificationReport verify(const DatasetSplits& ds, SqlExecutor& executor, TextBackend& text_backend,
                          const TemplateBank* bank, std::optional<std::size_t> sample_size, std::uint64_t sample_seed) {
    VerificationReport report;
    auto records = ds.all();
    report.total = records.size();
    if (sample_size && *sample_size < records.size()) {
        Rng rng(sample_seed);
        rng.shuffle(records);
        records.resize(*sample_size);
    }
    report.audited = records.size();
    for (const auto* r : records) {
        const auto& q = r->instance;
        const auto outcome = executor.execute(q.gold_query, text_backend);
        if (!outcome.ok) {
            report.flags.push_back({q.instance_id, "execution_error", outcome.error->message});
            continue;
        }
        const std::string answer = render_answer(outcome);
        if (answer != q.gold_answer)
            report.flags.push_back({q.instance_id, "mismatch", "stored '" + q.gold_answer + "', got '" + answer + "'"});
        if (!bank) continue;
        const QuestionTemplate* t = nullptr;
        try {
            t = &bank->get(q.template_id);
        } catch (const LookupError&) {
            report.flags.push_back({q.instance_id, "level", "unknown template " + q.template_id});
            continue;
        }
        const Level expected = classify_level(q.bindings, t);
        if (expected != q.level)
            report.flags.push_back({q.instance_id, "level", "stored Level " + std::string(to_string(q.level)) +
                                                                ", bindings give Level " +
                                                                std::string(to_string(expected))});
    }
    return report;
}

std::vector<Exemplar> exemplars_from_bank(const TemplateBank& bank, SqlExecutor& executor, TextBackend& text_backend,
                                          std::uint64_t seed, std::size_t per_template) {
    std::vector<Exemplar> out;
    std::map<std::string, ExecutionOutcome> cache;
    InstantiateOptions options{nullptr, &cache};
    for (const auto& t : bank.templates()) {
        Rng rng(fnv1a(t.template_id, seed));
        std::set<std::string> questions;
        for (std::size_t tries = 0; questions.size() < per_template && tries < per_template * 10; ++tries) {
            const auto inst = instantiate(t, executor, text_backend, rng, options);
            if (!questions.insert(inst.question).second) continue;
            out.push_back({inst.question, inst.gold_query.sql_text, t.template_id});
        }
    }
    return out;
}

}  // namespace ehrq
