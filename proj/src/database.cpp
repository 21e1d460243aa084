#include "ehrq/database.hpp"

#include <zlib.h>

#include <charconv>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"
#include "json.hpp"

namespace ehrq {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::optional<std::size_t> Table::column_index(std::string_view column) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == column) return i;
    return std::nullopt;
}

std::size_t Table::require_column(std::string_view column) const {
    if (auto i = column_index(column)) return *i;
    throw LookupError("table " + name + " has no column " + std::string(column));
}

const Table& Database::table(std::string_view name) const {
    if (auto it = tables.find(std::string(name)); it != tables.end()) return it->second;
    if (auto it = views.find(std::string(name)); it != views.end()) return it->second;
    throw LookupError("unknown table: " + std::string(name));
}

// ---------------------------------------------------------------- SynthScale

namespace {

std::int64_t parse_int(std::string_view text, const std::string& what) {
    std::int64_t v = 0;
    auto t = trim(text);
    auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size())
        throw ConfigError("invalid integer for " + what + ": '" + std::string(text) + "'");
    return v;
}

IntRange parse_range(std::string_view text, const std::string& what) {
    auto dash = text.find('-', 1);
    if (dash == std::string_view::npos) {
        auto v = parse_int(text, what);
        return {v, v};
    }
    return {parse_int(text.substr(0, dash), what), parse_int(text.substr(dash + 1), what)};
}

std::string range_text(const IntRange& r) { return std::to_string(r.lo) + "-" + std::to_string(r.hi); }

}  // namespace

SynthScale SynthScale::parse(std::string_view spec) {
    SynthScale s;
    for (const auto& part : split(spec, ',')) {
        auto item = trim(part);
        if (item.empty()) continue;
        auto eq = item.find('=');
        if (eq == std::string::npos) throw ConfigError("scale entry without '=': " + item);
        auto key = trim(item.substr(0, eq));
        auto value = trim(item.substr(eq + 1));
        if (key == "patients") s.n_patients = parse_int(value, key);
        else if (key == "admissions") s.admissions_per_patient = parse_range(value, key);
        else if (key == "labs") s.labs_per_admission = parse_range(value, key);
        else if (key == "notes") s.notes_per_admission = parse_int(value, key);
        else if (key == "years") s.year_window = parse_range(value, key);
        else throw ConfigError("unknown scale key: " + key);
    }
    s.validate();
    return s;
}

std::string SynthScale::to_string() const {
    return "patients=" + std::to_string(n_patients) + ",admissions=" + range_text(admissions_per_patient) +
           ",labs=" + range_text(labs_per_admission) + ",notes=" + std::to_string(notes_per_admission) +
           ",years=" + range_text(year_window);
}

void SynthScale::validate() const {
    if (n_patients < 1) throw ConfigError("invalid scale: n_patients must be >= 1");
    auto check = [](const IntRange& r, const char* name, std::int64_t min_lo) {
        if (r.lo < min_lo || r.hi < r.lo)
            throw ConfigError(std::string("invalid scale: empty or negative range for ") + name);
    };
    check(admissions_per_patient, "admissions_per_patient", 1);
    check(labs_per_admission, "labs_per_admission", 0);
    check(year_window, "year_window", 1900);
    if (year_window.hi > 9000) throw ConfigError("invalid scale: year_window beyond 9000");
    if (notes_per_admission < 0) throw ConfigError("invalid scale: notes_per_admission must be >= 0");
    if (admissions_per_patient.hi > 40) throw ConfigError("invalid scale: at most 40 admissions per patient");
}

// ---------------------------------------------------------------- typed cells

bool is_valid_timestamp(std::string_view t) {
    auto digits = [&](std::size_t pos, std::size_t n, int& out) {
        if (pos + n > t.size()) return false;
        out = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (t[i] < '0' || t[i] > '9') return false;
            out = out * 10 + (t[i] - '0');
        }
        return true;
    };
    auto valid_time = [&](std::size_t pos) {
        int h, m, s;
        return t.size() == pos + 8 && digits(pos, 2, h) && t[pos + 2] == ':' && digits(pos + 3, 2, m) &&
               t[pos + 5] == ':' && digits(pos + 6, 2, s) && h < 24 && m < 60 && s < 60;
    };
    if (t.size() == 8) return valid_time(0);
    int y, mo, d;
    if (t.size() < 10 || !digits(0, 4, y) || t[4] != '-' || !digits(5, 2, mo) || t[7] != '-' || !digits(8, 2, d))
        return false;
    if (mo < 1 || mo > 12 || d < 1) return false;
    static const int mdays[] = {31, 29, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (d > mdays[mo - 1] || (mo == 2 && d == 29 && !leap)) return false;
    if (t.size() == 10) return true;
    return t[10] == ' ' && valid_time(11);
}

std::optional<Cell> parse_typed_cell(std::string_view raw, const ColumnDescription& column, std::string* error) {
    auto fail = [&](const std::string& why) -> std::optional<Cell> {
        if (error) *error = why;
        return std::nullopt;
    };
    switch (column.semantic_type) {
        case SemanticType::id: {
            if (raw.empty()) {
                if (column.nullable) return Cell{};
                return fail("empty id");
            }
            std::int64_t v = 0;
            auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
            if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size())
                return fail("'" + std::string(raw) + "' is not an integer id");
            return Cell{v};
        }
        case SemanticType::numeric: {
            if (raw.empty()) return Cell{};
            const bool real = raw.find_first_of(".eEn") != std::string_view::npos;
            if (!real) {
                std::int64_t v = 0;
                auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
                if (res.ec == std::errc{} && res.ptr == raw.data() + raw.size()) return Cell{v};
                return fail("'" + std::string(raw) + "' is not numeric");
            }
            double v = 0;
            auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
            if (res.ec != std::errc{} || res.ptr != raw.data() + raw.size())
                return fail("'" + std::string(raw) + "' is not numeric");
            return Cell{v};
        }
        case SemanticType::timestamp:
            if (raw.empty()) {
                if (column.nullable) return Cell{};
                return fail("empty timestamp");
            }
            if (!is_valid_timestamp(raw)) return fail("'" + std::string(raw) + "' is not a timestamp");
            return Cell{std::string(raw)};
        case SemanticType::note_path:
            if (raw.empty()) return fail("empty note path");
            return Cell{std::string(raw)};
        case SemanticType::categorical:
        case SemanticType::free_text:
            if (raw.empty()) return Cell{};
            return Cell{std::string(raw)};
    }
    return fail("unknown semantic type");
}

// ---------------------------------------------------------------- CSV

namespace {

void append_field(std::string& out, const Cell& cell) {
    if (is_null(cell)) return;
    const std::string text = cell_to_string(cell);
    const bool is_text = std::holds_alternative<std::string>(cell);
    if (is_text && (text.empty() || text.find_first_of(",\"\r\n") != std::string::npos)) {
        out += '"';
        for (char c : text) {
            if (c == '"') out += '"';
            out += c;
        }
        out += '"';
    } else {
        out += text;
    }
}

struct RawField {
    std::string text;
    bool quoted = false;
};

/// RFC 4180 records; a quoted empty field is an empty string, an unquoted
/// empty field is NULL.
std::vector<std::vector<RawField>> parse_csv(std::string_view data) {
    std::vector<std::vector<RawField>> records;
    std::vector<RawField> record;
    RawField field;
    std::size_t i = 0;
    bool at_field_start = true;
    auto end_field = [&] {
        record.push_back(std::move(field));
        field = RawField{};
        at_field_start = true;
    };
    auto end_record = [&] {
        end_field();
        records.push_back(std::move(record));
        record.clear();
    };
    while (i < data.size()) {
        char c = data[i];
        if (at_field_start && c == '"') {
            field.quoted = true;
            at_field_start = false;
            ++i;
            while (true) {
                if (i >= data.size()) throw LoadError("unterminated quoted field");
                if (data[i] == '"') {
                    if (i + 1 < data.size() && data[i + 1] == '"') {
                        field.text += '"';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                field.text += data[i++];
            }
            continue;
        }
        at_field_start = false;
        if (c == ',') {
            end_field();
            ++i;
        } else if (c == '\n' || c == '\r') {
            end_record();
            if (c == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
            ++i;
        } else {
            field.text += c;
            ++i;
        }
    }
    if (!at_field_start || !record.empty()) end_record();
    return records;
}

std::string read_maybe_gz(const fs::path& p) {
    gzFile f = gzopen(p.string().c_str(), "rb");
    if (!f) throw LoadError("cannot open " + p.string());
    std::string out;
    char buf[1 << 16];
    int n;
    while ((n = gzread(f, buf, sizeof buf)) > 0) out.append(buf, static_cast<std::size_t>(n));
    const bool failed = n < 0;
    gzclose(f);
    if (failed) throw LoadError("corrupt compressed file " + p.string());
    return out;
}

void write_gz(const fs::path& p, std::string_view data) {
    gzFile f = gzopen(p.string().c_str(), "wb9");
    if (!f) throw std::runtime_error("cannot write " + p.string());
    const bool ok = data.empty() || gzwrite(f, data.data(), static_cast<unsigned>(data.size())) > 0;
    gzclose(f);
    if (!ok) throw std::runtime_error("gzip write failed: " + p.string());
}

}  // namespace

void write_tables(const Database& db, const fs::path& root, bool gzip) {
    fs::create_directories(root);
    json counts = json::object();
    for (const auto& desc : ehr_schema()) {
        const Table& t = db.table(desc.table_name);
        std::string out;
        for (std::size_t c = 0; c < t.columns.size(); ++c) {
            if (c) out += ',';
            out += t.columns[c];
        }
        out += '\n';
        for (const auto& row : t.rows) {
            for (std::size_t c = 0; c < row.size(); ++c) {
                if (c) out += ',';
                append_field(out, row[c]);
            }
            out += '\n';
        }
        if (gzip) {
            write_gz(root / (desc.table_name + ".csv.gz"), out);
            fs::remove(root / (desc.table_name + ".csv"));
        } else {
            write_file((root / (desc.table_name + ".csv")).string(), out);
            fs::remove(root / (desc.table_name + ".csv.gz"));
        }
        counts[desc.table_name] = t.rows.size();
    }
    for (const auto& [path, text] : db.notes) {
        const fs::path target = root / path;
        fs::create_directories(target.parent_path());
        write_file(target.string(), text);
    }
    json manifest = {{"format", "ehrq-db/1"},
                     {"seed", db.rng_seed},
                     {"preprocessed", db.preprocessed},
                     {"row_counts", counts},
                     {"note_count", db.notes.size()}};
    manifest["scale"] = db.scale ? json(db.scale->to_string()) : json(nullptr);
    write_file((root / "manifest.json").string(), manifest.dump(2) + "\n");
}

Database load_tables(const fs::path& root) {
    if (!fs::is_directory(root)) throw LoadError("not a directory: " + root.string());
    Database db;
    for (const auto& desc : ehr_schema()) {
        fs::path file = root / (desc.table_name + ".csv");
        if (!fs::exists(file)) file = root / (desc.table_name + ".csv.gz");
        if (!fs::exists(file)) throw LoadError("missing table: " + desc.table_name);
        auto records = parse_csv(read_maybe_gz(file));
        if (records.empty()) throw LoadError("table " + desc.table_name + " has no header row");
        Table t;
        t.name = desc.table_name;
        for (const auto& f : records.front()) t.columns.push_back(f.text);
        std::vector<std::string> expected;
        for (const auto& c : desc.columns) expected.push_back(c.name);
        if (t.columns != expected)
            throw LoadError("table " + desc.table_name + " header mismatch: expected " + join(expected, ",") +
                            " got " + join(t.columns, ","));
        for (std::size_t r = 1; r < records.size(); ++r) {
            const auto& rec = records[r];
            if (rec.size() != expected.size())
                throw LoadError("table " + desc.table_name + " row " + std::to_string(r) + ": expected " +
                                std::to_string(expected.size()) + " fields, got " + std::to_string(rec.size()));
            Row row;
            row.reserve(rec.size());
            for (std::size_t c = 0; c < rec.size(); ++c) {
                const auto& col = desc.columns[c];
                if (rec[c].quoted && (col.semantic_type == SemanticType::categorical ||
                                      col.semantic_type == SemanticType::free_text)) {
                    row.emplace_back(rec[c].text);
                    continue;
                }
                std::string why;
                auto cell = parse_typed_cell(rec[c].text, col, &why);
                if (!cell)
                    throw LoadError("type validation failed: table " + desc.table_name + ", column " + col.name +
                                    ", row " + std::to_string(r) + ": " + why);
                row.push_back(std::move(*cell));
            }
            t.rows.push_back(std::move(row));
        }
        db.tables.emplace(desc.table_name, std::move(t));
    }
    for (const auto& desc : ehr_schema()) {
        for (std::size_t c = 0; c < desc.columns.size(); ++c) {
            if (desc.columns[c].semantic_type != SemanticType::note_path) continue;
            for (const auto& row : db.tables.at(desc.table_name).rows) {
                const auto& path = std::get<std::string>(row[c]);
                if (db.notes.count(path)) continue;
                const fs::path file = root / path;
                if (!fs::exists(file)) throw LoadError("missing note file: " + path);
                db.notes.emplace(path, read_file(file.string()));
            }
        }
    }
    bool preprocessed = false;
    if (fs::exists(root / "manifest.json")) {
        try {
            auto m = json::parse(read_file((root / "manifest.json").string()));
            db.rng_seed = m.value("seed", std::uint64_t{0});
            if (m.contains("scale") && m["scale"].is_string())
                db.scale = SynthScale::parse(m["scale"].get<std::string>());
            preprocessed = m.value("preprocessed", false);
        } catch (const json::exception& e) {
            throw LoadError(std::string("invalid manifest.json: ") + e.what());
        }
    }
    if (preprocessed) db = preprocess(std::move(db));
    return db;
}

// ---------------------------------------------------------------- preprocess

namespace {

std::string key_of(const Row& row, const std::vector<std::size_t>& idx) {
    std::string k;
    for (auto i : idx) {
        k += static_cast<char>('0' + row[i].index());
        k += cell_to_string(row[i]);
        k += '\x1f';
    }
    return k;
}

}  // namespace

Database preprocess(Database db) {
    for (const auto& desc : ehr_schema()) {
        auto it = db.tables.find(desc.table_name);
        if (it == db.tables.end()) continue;
        for (std::size_t c = 0; c < desc.columns.size(); ++c) {
            if (desc.columns[c].semantic_type != SemanticType::free_text) continue;
            for (auto& row : it->second.rows)
                if (auto s = std::get_if<std::string>(&row[c])) *s = to_lower(*s);
        }
    }
    for (auto& [path, text] : db.notes) text = to_lower(text);

    db.views.clear();
    for (const auto& v : merged_views()) {
        const Table& child = db.table(v.child);
        const Table& parent = db.table(v.parent);
        std::vector<std::size_t> ck, pk, extra;
        for (const auto& k : v.keys) {
            ck.push_back(child.require_column(k));
            pk.push_back(parent.require_column(k));
        }
        for (const auto& c : v.parent_columns) extra.push_back(parent.require_column(c));
        std::unordered_map<std::string, const Row*> index;
        for (const auto& row : parent.rows) index.emplace(key_of(row, pk), &row);
        Table out;
        out.name = v.name;
        out.columns = child.columns;
        for (const auto& c : v.parent_columns) out.columns.push_back(c);
        out.rows.reserve(child.rows.size());
        for (const auto& row : child.rows) {
            Row merged = row;
            auto hit = index.find(key_of(row, ck));
            for (auto e : extra) merged.push_back(hit == index.end() ? Cell{} : (*hit->second)[e]);
            out.rows.push_back(std::move(merged));
        }
        db.views.emplace(v.name, std::move(out));
    }
    db.preprocessed = true;
    return db;
}

const std::string& resolve_note(const Database& db, std::string_view path) {
    auto it = db.notes.find(std::string(path));
    if (it == db.notes.end()) throw LookupError("unknown note path: " + std::string(path));
    return it->second;
}

// ---------------------------------------------------------------- checks

std::vector<std::string> check_referential_integrity(const Database& db) {
    std::vector<std::string> problems;
    for (const auto& fk : foreign_keys()) {
        const Table& child = db.table(fk.table);
        const Table& parent = db.table(fk.parent_table);
        std::vector<std::size_t> ci, pi;
        for (const auto& c : fk.columns) ci.push_back(child.require_column(c));
        for (const auto& c : fk.parent_columns) pi.push_back(parent.require_column(c));
        std::unordered_set<std::string> keys;
        for (const auto& row : parent.rows) keys.insert(key_of(row, pi));
        for (std::size_t r = 0; r < child.rows.size(); ++r) {
            const auto& row = child.rows[r];
            bool any_null = false;
            for (auto i : ci) any_null |= is_null(row[i]);
            if (any_null) continue;
            if (!keys.count(key_of(row, ci)))
                problems.push_back(fk.table + "(" + join(fk.columns, ",") + ") row " + std::to_string(r) +
                                   " does not resolve in " + fk.parent_table);
        }
    }
    return problems;
}

std::uint64_t checksum(const Database& db) {
    std::uint64_t h = fnv1a("ehrq");
    auto hash_table = [&](const Table& t) {
        h = fnv1a(t.name, h);
        for (const auto& c : t.columns) h = fnv1a(c, h);
        for (const auto& row : t.rows)
            for (const auto& cell : row) {
                const char tag = static_cast<char>('0' + cell.index());
                h = fnv1a(std::string_view(&tag, 1), h);
                h = fnv1a(cell_to_string(cell), h);
            }
    };
    for (const auto& [name, t] : db.tables) hash_table(t);
    for (const auto& [name, t] : db.views) hash_table(t);
    for (const auto& [path, text] : db.notes) {
        h = fnv1a(path, h);
        h = fnv1a(text, h);
    }
    return h;
}

std::map<std::string, std::size_t> row_counts(const Database& db) {
    std::map<std::string, std::size_t> counts;
    for (const auto& [name, t] : db.tables) counts[name] = t.rows.size();
    return counts;
}

}  // namespace ehrq
