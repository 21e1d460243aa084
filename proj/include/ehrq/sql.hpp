#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ehrq::sql {

// Single-statement SELECT subset: joins, aggregates, DISTINCT, GROUP BY,
// HAVING, ORDER BY, LIMIT/OFFSET, CASE, CAST, IN/BETWEEN/LIKE/IS NULL,
// EXISTS, scalar subqueries and scalar function calls.

enum class TokenKind { identifier, keyword, number, string, op, end };

struct Token {
    TokenKind kind;
    std::string text;  // keywords and identifiers lowercased; strings unescaped
    std::size_t pos;
};

std::vector<Token> tokenize(std::string_view sql);

struct Select;

struct Expr {
    enum class Kind {
        number,
        string,
        null,
        column,     // qualifier.text
        star,       // qualifier.* or *
        unary,      // text = "-", "+", "not"
        binary,     // text = operator
        function,   // text = name; distinct; star_arg for count(*)
        case_,      // args: [operand] (when, then)* [else]
        cast,       // args[0] AS text
        in_list,    // args[0] IN (args[1..])
        in_select,  // args[0] IN (select)
        between,    // args[0] BETWEEN args[1] AND args[2]
        like,       // args[0] LIKE args[1]
        is_null,    // args[0] IS [NOT] NULL
        exists,     // EXISTS (select)
        subquery,   // (select)
    };
    Kind kind = Kind::null;
    std::string text;
    std::string qualifier;
    bool negated = false;
    bool distinct = false;
    bool star_arg = false;
    bool has_operand = false;
    bool has_else = false;
    std::vector<Expr> args;
    std::shared_ptr<Select> select;
};

struct SelectItem {
    Expr expr;
    std::string alias;
};

struct TableRef {
    enum class Join { first, comma, inner, left, cross };
    std::string name;  // empty for a derived table
    std::shared_ptr<Select> subquery;
    std::string alias;
    Join join = Join::first;
    std::optional<Expr> on;
};

struct OrderItem {
    Expr expr;
    bool desc = false;
};

struct Select {
    bool distinct = false;
    std::vector<SelectItem> items;
    std::vector<TableRef> from;
    std::optional<Expr> where;
    std::vector<Expr> group_by;
    std::optional<Expr> having;
    std::vector<OrderItem> order_by;
    std::optional<Expr> limit;
    std::optional<Expr> offset;
};

/// Parses one SELECT statement (a trailing ';' is allowed). Throws
/// ehrq::SqlSyntaxError with a byte position.
Select parse(std::string_view sql);

/// Plain rendering of an expression or statement in lowercase-keyword form.
std::string to_sql(const Expr& e);
std::string to_sql(const Select& s);

/// Every table name referenced anywhere in the statement, including subqueries.
std::vector<std::string> referenced_tables(const Select& s);

/// Calls to the named function anywhere in the statement, in source order.
std::vector<const Expr*> find_calls(const Select& s, std::string_view function_name);

/// Clause-kind -> canonical text. Keys are always the seven clause kinds
/// {select, from, where, group_by, having, order_by, limit}; absent clauses
/// map to "".
struct ComponentSet {
    std::map<std::string, std::string> components;
    bool operator==(const ComponentSet&) const = default;

    /// Reassembles the canonical components into a parseable statement.
    std::string render() const;
};

/// Keyword/identifier case folding, numeric literal normalization, alias
/// inlining, sorted AND/OR operands and =/!= sides, sorted GROUP BY keys.
/// SELECT projection order and ORDER BY order are kept.
ComponentSet canonicalize(const Select& s);
ComponentSet canonicalize(std::string_view sql);

}  // namespace ehrq::sql
