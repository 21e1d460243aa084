#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ehrq/cell.hpp"
#include "ehrq/database.hpp"
#include "ehrq/text_backend.hpp"

struct sqlite3;
struct sqlite3_context;
struct sqlite3_value;

namespace ehrq {

enum class ErrorKind { parse, unknown_table, unknown_column, path, type, tool, timeout };

std::string_view to_string(ErrorKind k);

struct ErrorInfo {
    ErrorKind kind = ErrorKind::parse;
    std::string message;
    std::optional<std::size_t> position;
};

/// One TEXT_FUNC(arg_expr, 'question') occurrence.
struct ToolCall {
    std::string argument;
    std::string question;
};

struct QueryProgram {
    std::string sql_text;
    std::vector<ToolCall> tool_calls;
};

/// Parses `sql` under the supported grammar and collects TEXT_FUNC calls.
/// Throws SqlSyntaxError (also when a TEXT_FUNC question is not a string
/// literal or the call does not have exactly two arguments).
QueryProgram parse_program(std::string_view sql);

struct ExecutionLimits {
    std::chrono::milliseconds timeout{5000};
    std::size_t row_limit = 10000;
};

struct ExecutionOutcome {
    bool ok = false;
    std::vector<std::string> columns;
    std::vector<Row> rows;
    bool truncated = false;  // row_limit reached
    std::optional<ErrorInfo> error;

    static ExecutionOutcome failure(ErrorKind kind, std::string message, std::optional<std::size_t> pos = {});
};

/// Read-only SQL evaluation over a Database, loaded into a private in-memory
/// SQLite connection. The authorizer admits only reads and function calls.
/// `text_func(text_or_note_path, question)` is registered as a scalar
/// function; arguments starting with "notes/" are resolved as note paths.
/// The Database must outlive the executor.
class SqlExecutor {
public:
    explicit SqlExecutor(const Database& db);
    ~SqlExecutor();
    SqlExecutor(const SqlExecutor&) = delete;
    SqlExecutor& operator=(const SqlExecutor&) = delete;

    ExecutionOutcome execute(std::string_view sql, TextBackend& text_backend, const ExecutionLimits& limits = {});
    ExecutionOutcome execute(const QueryProgram& program, TextBackend& text_backend,
                             const ExecutionLimits& limits = {}) {
        return execute(program.sql_text, text_backend, limits);
    }

    /// FNV-1a over every row the connection holds.
    std::uint64_t content_checksum();

    const Database& database() const { return db_; }

private:
    struct UdfState {
        TextBackend* backend = nullptr;
        std::optional<ErrorKind> error_kind;
        std::chrono::steady_clock::time_point deadline;
        bool timed_out = false;
    };

    static void text_func_udf(::sqlite3_context* ctx, int argc, ::sqlite3_value** argv);
    static int progress(void* self);

    const Database& db_;
    sqlite3* conn_ = nullptr;
    std::mutex mutex_;
    UdfState state_;
};

}  // namespace ehrq
