#include "ehrq/executor.hpp"

#include <sqlite3.h>

#include "ehrq/errors.hpp"
#include "ehrq/sql.hpp"
#include "ehrq/util.hpp"

namespace ehrq {

std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::parse: return "parse";
        case ErrorKind::unknown_table: return "unknown_table";
        case ErrorKind::unknown_column: return "unknown_column";
        case ErrorKind::path: return "path";
        case ErrorKind::type: return "type";
        case ErrorKind::tool: return "tool";
        case ErrorKind::timeout: return "timeout";
    }
    return "unknown";
}

ExecutionOutcome ExecutionOutcome::failure(ErrorKind kind, std::string message, std::optional<std::size_t> pos) {
    ExecutionOutcome out;
    out.ok = false;
    out.error = ErrorInfo{kind, std::move(message), pos};
    return out;
}

QueryProgram parse_program(std::string_view sql) {
    QueryProgram program;
    program.sql_text = trim(sql);
    const auto ast = sql::parse(program.sql_text);
    for (const auto* call : sql::find_calls(ast, "text_func")) {
        if (call->args.size() != 2 || call->star_arg)
            throw SqlSyntaxError("text_func takes exactly two arguments (text, question)", 0);
        if (call->args[1].kind != sql::Expr::Kind::string)
            throw SqlSyntaxError("text_func question must be a quoted string literal", 0);
        program.tool_calls.push_back({sql::to_sql(call->args[0]), call->args[1].text});
    }
    return program;
}

namespace {

void check(int rc, sqlite3* db, const char* what) {
    if (rc != SQLITE_OK && rc != SQLITE_DONE && rc != SQLITE_ROW)
        throw std::runtime_error(std::string(what) + ": " + sqlite3_errmsg(db));
}

std::string quote_ident(const std::string& s) { return "\"" + s + "\""; }

void load_table(sqlite3* conn, const Table& t) {
    std::string ddl = "CREATE TABLE " + quote_ident(t.name) + " (";
    for (std::size_t i = 0; i < t.columns.size(); ++i) ddl += (i ? ", " : "") + quote_ident(t.columns[i]);
    ddl += ")";
    check(sqlite3_exec(conn, ddl.c_str(), nullptr, nullptr, nullptr), conn, "create table");
    std::string ins = "INSERT INTO " + quote_ident(t.name) + " VALUES (";
    for (std::size_t i = 0; i < t.columns.size(); ++i) ins += i ? ", ?" : "?";
    ins += ")";
    sqlite3_stmt* stmt = nullptr;
    check(sqlite3_prepare_v2(conn, ins.c_str(), -1, &stmt, nullptr), conn, "prepare insert");
    for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            const int idx = static_cast<int>(i + 1);
            const Cell& c = row[i];
            if (auto p = std::get_if<std::int64_t>(&c)) sqlite3_bind_int64(stmt, idx, *p);
            else if (auto p = std::get_if<double>(&c)) sqlite3_bind_double(stmt, idx, *p);
            else if (auto p = std::get_if<std::string>(&c))
                sqlite3_bind_text(stmt, idx, p->data(), static_cast<int>(p->size()), SQLITE_TRANSIENT);
            else sqlite3_bind_null(stmt, idx);
        }
        const int rc = sqlite3_step(stmt);
        if (rc != SQLITE_DONE) {
            sqlite3_finalize(stmt);
            throw std::runtime_error(std::string("insert: ") + sqlite3_errmsg(conn));
        }
        sqlite3_reset(stmt);
    }
    sqlite3_finalize(stmt);
    for (const char* key : {"subject_id", "hadm_id", "itemid", "study_id"}) {
        if (!t.column_index(key)) continue;
        const std::string idx = "CREATE INDEX " + quote_ident("idx_" + t.name + "_" + key) + " ON " +
                                quote_ident(t.name) + " (" + quote_ident(key) + ")";
        check(sqlite3_exec(conn, idx.c_str(), nullptr, nullptr, nullptr), conn, "create index");
    }
}

int read_only_authorizer(void*, int action, const char*, const char*, const char*, const char*) {
    switch (action) {
        case SQLITE_SELECT:
        case SQLITE_READ:
        case SQLITE_FUNCTION:
        case SQLITE_RECURSIVE: return SQLITE_OK;
        default: return SQLITE_DENY;
    }
}

Cell column_cell(sqlite3_stmt* stmt, int i) {
    switch (sqlite3_column_type(stmt, i)) {
        case SQLITE_INTEGER: return Cell{static_cast<std::int64_t>(sqlite3_column_int64(stmt, i))};
        case SQLITE_FLOAT: return Cell{sqlite3_column_double(stmt, i)};
        case SQLITE_NULL: return Cell{};
        default: {
            const auto* p = reinterpret_cast<const char*>(sqlite3_column_text(stmt, i));
            return Cell{std::string(p ? p : "", static_cast<std::size_t>(sqlite3_column_bytes(stmt, i)))};
        }
    }
}

std::string after_colon(const std::string& msg) {
    auto pos = msg.find(": ");
    return pos == std::string::npos ? msg : msg.substr(pos + 2);
}

}  // namespace

SqlExecutor::SqlExecutor(const Database& db) : db_(db) {
    if (sqlite3_open_v2(":memory:", &conn_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_NOMUTEX, nullptr) !=
        SQLITE_OK)
        throw std::runtime_error("cannot open in-memory sqlite database");
    check(sqlite3_exec(conn_, "BEGIN", nullptr, nullptr, nullptr), conn_, "begin");
    for (const auto& [name, t] : db.tables) load_table(conn_, t);
    for (const auto& [name, t] : db.views) load_table(conn_, t);
    check(sqlite3_exec(conn_, "COMMIT", nullptr, nullptr, nullptr), conn_, "commit");
    check(sqlite3_create_function_v2(conn_, "text_func", 2, SQLITE_UTF8, this, &SqlExecutor::text_func_udf, nullptr,
                                     nullptr, nullptr),
          conn_, "register text_func");
    check(sqlite3_exec(conn_, "PRAGMA query_only = 1", nullptr, nullptr, nullptr), conn_, "query_only");
    sqlite3_set_authorizer(conn_, read_only_authorizer, nullptr);
    sqlite3_progress_handler(conn_, 1000, &SqlExecutor::progress, this);
}

SqlExecutor::~SqlExecutor() { sqlite3_close(conn_); }

int SqlExecutor::progress(void* self) {
    auto* ex = static_cast<SqlExecutor*>(self);
    if (std::chrono::steady_clock::now() > ex->state_.deadline) {
        ex->state_.timed_out = true;
        return 1;
    }
    return 0;
}

void SqlExecutor::text_func_udf(sqlite3_context* ctx, int, sqlite3_value** argv) {
    auto* ex = static_cast<SqlExecutor*>(sqlite3_user_data(ctx));
    auto fail = [&](ErrorKind kind, const std::string& msg) {
        ex->state_.error_kind = kind;
        sqlite3_result_error(ctx, ("text_func: " + msg).c_str(), -1);
    };
    if (sqlite3_value_type(argv[0]) == SQLITE_NULL) {
        sqlite3_result_null(ctx);
        return;
    }
    if (sqlite3_value_type(argv[0]) != SQLITE_TEXT) return fail(ErrorKind::type, "first argument must be text or a note path");
    if (sqlite3_value_type(argv[1]) != SQLITE_TEXT) return fail(ErrorKind::type, "second argument must be a question string");
    const std::string arg(reinterpret_cast<const char*>(sqlite3_value_text(argv[0])),
                          static_cast<std::size_t>(sqlite3_value_bytes(argv[0])));
    const std::string question(reinterpret_cast<const char*>(sqlite3_value_text(argv[1])),
                               static_cast<std::size_t>(sqlite3_value_bytes(argv[1])));
    const std::string* text = &arg;
    if (starts_with_ci(arg, "notes/")) {
        auto it = ex->db_.notes.find(arg);
        if (it == ex->db_.notes.end()) return fail(ErrorKind::path, "cannot resolve note path " + arg);
        text = &it->second;
    }
    try {
        const std::string answer = text_func(*text, question, *ex->state_.backend);
        sqlite3_result_text(ctx, answer.data(), static_cast<int>(answer.size()), SQLITE_TRANSIENT);
    } catch (const std::exception& e) {
        fail(ErrorKind::tool, e.what());
    }
}

ExecutionOutcome SqlExecutor::execute(std::string_view sql_text, TextBackend& text_backend,
                                      const ExecutionLimits& limits) {
    try {
        parse_program(sql_text);
    } catch (const SqlSyntaxError& e) {
        return ExecutionOutcome::failure(ErrorKind::parse, e.what(), e.position());
    }

    std::lock_guard lock(mutex_);
    state_ = UdfState{&text_backend, std::nullopt, std::chrono::steady_clock::now() + limits.timeout, false};

    const std::string text(sql_text);
    sqlite3_stmt* stmt = nullptr;
    const char* tail = nullptr;
    int rc = sqlite3_prepare_v2(conn_, text.c_str(), static_cast<int>(text.size()), &stmt, &tail);
    if (rc != SQLITE_OK) {
        const std::string msg = sqlite3_errmsg(conn_);
        const std::optional<std::size_t> pos;
        sqlite3_finalize(stmt);
        if (msg.rfind("no such table", 0) == 0)
            return ExecutionOutcome::failure(ErrorKind::unknown_table, "unknown table: " + after_colon(msg), pos);
        if (msg.rfind("no such column", 0) == 0)
            return ExecutionOutcome::failure(ErrorKind::unknown_column, "unknown column: " + after_colon(msg), pos);
        if (msg.find("not authorized") != std::string::npos)
            return ExecutionOutcome::failure(ErrorKind::parse, "statement not permitted: " + msg, pos);
        if (msg.rfind("no such function", 0) == 0 || msg.find("syntax error") != std::string::npos)
            return ExecutionOutcome::failure(ErrorKind::parse, msg, pos);
        return ExecutionOutcome::failure(ErrorKind::type, msg, pos);
    }
    if (!stmt) return ExecutionOutcome::failure(ErrorKind::parse, "empty statement");
    if (!sqlite3_stmt_readonly(stmt)) {
        sqlite3_finalize(stmt);
        return ExecutionOutcome::failure(ErrorKind::parse, "statement not permitted: not read-only");
    }

    ExecutionOutcome out;
    const int ncols = sqlite3_column_count(stmt);
    for (int i = 0; i < ncols; ++i) {
        const char* name = sqlite3_column_name(stmt, i);
        out.columns.emplace_back(name ? name : "");
    }
    while ((rc = sqlite3_step(stmt)) == SQLITE_ROW) {
        if (out.rows.size() >= limits.row_limit) {
            out.truncated = true;
            break;
        }
        Row row;
        row.reserve(static_cast<std::size_t>(ncols));
        for (int i = 0; i < ncols; ++i) row.push_back(column_cell(stmt, i));
        out.rows.push_back(std::move(row));
    }
    if (rc != SQLITE_ROW && rc != SQLITE_DONE) {
        const std::string msg = sqlite3_errmsg(conn_);
        sqlite3_finalize(stmt);
        if (state_.timed_out || rc == SQLITE_INTERRUPT)
            return ExecutionOutcome::failure(ErrorKind::timeout,
                                             "statement exceeded " + std::to_string(limits.timeout.count()) + " ms");
        if (state_.error_kind) return ExecutionOutcome::failure(*state_.error_kind, msg);
        return ExecutionOutcome::failure(ErrorKind::type, msg);
    }
    sqlite3_finalize(stmt);
    out.ok = true;
    return out;
}

std::uint64_t SqlExecutor::content_checksum() {
    std::lock_guard lock(mutex_);
    state_.deadline = std::chrono::steady_clock::time_point::max();
    std::uint64_t h = fnv1a("sqlite");
    std::vector<std::string> names;
    for (const auto& [n, t] : db_.tables) names.push_back(n);
    for (const auto& [n, t] : db_.views) names.push_back(n);
    sqlite3_stmt* list = nullptr;
    // Also hash the catalogue so created objects would show up.
    if (sqlite3_prepare_v2(conn_, "SELECT type, name FROM sqlite_master ORDER BY name", -1, &list, nullptr) == SQLITE_OK) {
        while (sqlite3_step(list) == SQLITE_ROW)
            for (int i = 0; i < 2; ++i) h = fnv1a(reinterpret_cast<const char*>(sqlite3_column_text(list, i)), h);
    }
    sqlite3_finalize(list);
    for (const auto& n : names) {
        const std::string q = "SELECT * FROM " + quote_ident(n) + " ORDER BY rowid";
        sqlite3_stmt* stmt = nullptr;
        if (sqlite3_prepare_v2(conn_, q.c_str(), -1, &stmt, nullptr) != SQLITE_OK) {
            sqlite3_finalize(stmt);
            h = fnv1a("missing:" + n, h);
            continue;
        }
        const int ncols = sqlite3_column_count(stmt);
        while (sqlite3_step(stmt) == SQLITE_ROW)
            for (int i = 0; i < ncols; ++i) {
                const Cell c = column_cell(stmt, i);
                const char tag = static_cast<char>('0' + c.index());
                h = fnv1a(std::string_view(&tag, 1), h);
                h = fnv1a(cell_to_string(c), h);
            }
        sqlite3_finalize(stmt);
    }
    return h;
}

}  // namespace ehrq
