#include "ehrq/sql.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <set>

#include "ehrq/cell.hpp"
#include "ehrq/errors.hpp"
#include "ehrq/util.hpp"

namespace ehrq::sql {

namespace {

const std::set<std::string, std::less<>> kKeywords = {
    "select", "distinct", "all",  "from",  "where",  "group", "by",     "having", "order", "asc",
    "desc",   "limit",    "offset", "as",  "and",    "or",    "not",    "in",     "is",    "null",
    "like",   "between",  "case", "when",  "then",   "else",  "end",    "join",   "inner", "left",
    "outer",  "cross",    "on",   "exists", "cast",  "true",  "false",  "union",  "intersect", "except"};

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; }

}  // namespace

std::vector<Token> tokenize(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        const char c = s[i];
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        if (c == '-' && i + 1 < s.size() && s[i + 1] == '-') {
            while (i < s.size() && s[i] != '\n') ++i;
            continue;
        }
        if (c == '/' && i + 1 < s.size() && s[i + 1] == '*') {
            const auto close = s.find("*/", i + 2);
            if (close == std::string_view::npos) throw SqlSyntaxError("unterminated comment", i);
            i = close + 2;
            continue;
        }
        const std::size_t start = i;
        if (ident_start(c)) {
            while (i < s.size() && ident_char(s[i])) ++i;
            std::string word = to_lower(s.substr(start, i - start));
            const bool kw = kKeywords.count(word) > 0;
            out.push_back({kw ? TokenKind::keyword : TokenKind::identifier, std::move(word), start});
            continue;
        }
        if (c == '"' || c == '`' || c == '[') {
            const char close = c == '[' ? ']' : c;
            ++i;
            std::string word;
            while (true) {
                if (i >= s.size()) throw SqlSyntaxError("unterminated quoted identifier", start);
                if (s[i] == close) {
                    if (close != ']' && i + 1 < s.size() && s[i + 1] == close) {
                        word += close;
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                word += s[i++];
            }
            out.push_back({TokenKind::identifier, to_lower(word), start});
            continue;
        }
        if (c == '\'') {
            ++i;
            std::string value;
            while (true) {
                if (i >= s.size()) throw SqlSyntaxError("unterminated string literal", start);
                if (s[i] == '\'') {
                    if (i + 1 < s.size() && s[i + 1] == '\'') {
                        value += '\'';
                        i += 2;
                        continue;
                    }
                    ++i;
                    break;
                }
                value += s[i++];
            }
            out.push_back({TokenKind::string, std::move(value), start});
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[i + 1])))) {
            while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            if (i < s.size() && s[i] == '.') {
                ++i;
                while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
            }
            if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
                std::size_t j = i + 1;
                if (j < s.size() && (s[j] == '+' || s[j] == '-')) ++j;
                if (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) {
                    i = j;
                    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
                }
            }
            if (i < s.size() && ident_start(s[i])) throw SqlSyntaxError("malformed number", start);
            out.push_back({TokenKind::number, std::string(s.substr(start, i - start)), start});
            continue;
        }
        static const char* two[] = {"<=", ">=", "<>", "!=", "==", "||"};
        bool matched = false;
        for (const char* op : two) {
            if (s.substr(i, 2) == op) {
                out.push_back({TokenKind::op, op, start});
                i += 2;
                matched = true;
                break;
            }
        }
        if (matched) continue;
        if (std::string_view("=<>+-*/%(),.;").find(c) != std::string_view::npos) {
            out.push_back({TokenKind::op, std::string(1, c), start});
            ++i;
            continue;
        }
        throw SqlSyntaxError(std::string("unexpected character '") + c + "'", start);
    }
    out.push_back({TokenKind::end, "", s.size()});
    return out;
}

// ------------------------------------------------------------------ parser

namespace {

class Parser {
public:
    explicit Parser(std::string_view sql) : tokens_(tokenize(sql)) {}

    Select statement() {
        if (peek().kind == TokenKind::end) throw SqlSyntaxError("empty statement", 0);
        Select s = select();
        if (accept_op(";")) {
        }
        if (peek().kind != TokenKind::end) {
            if (peek().kind == TokenKind::keyword &&
                (peek().text == "union" || peek().text == "intersect" || peek().text == "except"))
                fail("compound queries are not supported");
            fail("unexpected '" + peek().text + "' after end of statement");
        }
        return s;
    }

private:
    std::vector<Token> tokens_;
    std::size_t i_ = 0;

    const Token& peek(std::size_t ahead = 0) const { return tokens_[std::min(i_ + ahead, tokens_.size() - 1)]; }
    const Token& next() { return tokens_[std::min(i_++, tokens_.size() - 1)]; }
    [[noreturn]] void fail(const std::string& what) const { throw SqlSyntaxError(what, peek().pos); }

    bool is_kw(std::string_view kw, std::size_t ahead = 0) const {
        return peek(ahead).kind == TokenKind::keyword && peek(ahead).text == kw;
    }
    bool is_op(std::string_view op, std::size_t ahead = 0) const {
        return peek(ahead).kind == TokenKind::op && peek(ahead).text == op;
    }
    bool accept_kw(std::string_view kw) {
        if (!is_kw(kw)) return false;
        ++i_;
        return true;
    }
    bool accept_op(std::string_view op) {
        if (!is_op(op)) return false;
        ++i_;
        return true;
    }
    void expect_kw(std::string_view kw) {
        if (!accept_kw(kw)) fail("expected '" + std::string(kw) + "' but found '" + describe(peek()) + "'");
    }
    void expect_op(std::string_view op) {
        if (!accept_op(op)) fail("expected '" + std::string(op) + "' but found '" + describe(peek()) + "'");
    }
    static std::string describe(const Token& t) { return t.kind == TokenKind::end ? "end of input" : t.text; }

    std::string identifier(const char* what) {
        if (peek().kind != TokenKind::identifier) fail(std::string("expected ") + what + " but found '" + describe(peek()) + "'");
        return next().text;
    }

    Select select() {
        expect_kw("select");
        Select s;
        if (accept_kw("distinct")) s.distinct = true;
        else accept_kw("all");
        do {
            s.items.push_back(select_item());
        } while (accept_op(","));
        if (accept_kw("from")) {
            s.from.push_back(table_ref(TableRef::Join::first));
            while (true) {
                if (accept_op(",")) {
                    s.from.push_back(table_ref(TableRef::Join::comma));
                } else if (is_kw("join") || is_kw("inner") || is_kw("left") || is_kw("cross")) {
                    TableRef::Join kind = TableRef::Join::inner;
                    if (accept_kw("left")) {
                        accept_kw("outer");
                        kind = TableRef::Join::left;
                    } else if (accept_kw("cross")) {
                        kind = TableRef::Join::cross;
                    } else {
                        accept_kw("inner");
                    }
                    expect_kw("join");
                    TableRef ref = table_ref(kind);
                    if (kind != TableRef::Join::cross && accept_kw("on")) ref.on = expr();
                    s.from.push_back(std::move(ref));
                } else {
                    break;
                }
            }
        }
        if (accept_kw("where")) s.where = expr();
        if (accept_kw("group")) {
            expect_kw("by");
            do {
                s.group_by.push_back(expr());
            } while (accept_op(","));
        }
        if (accept_kw("having")) s.having = expr();
        if (accept_kw("order")) {
            expect_kw("by");
            do {
                OrderItem item{expr(), false};
                if (accept_kw("desc")) item.desc = true;
                else accept_kw("asc");
                s.order_by.push_back(std::move(item));
            } while (accept_op(","));
        }
        if (accept_kw("limit")) {
            s.limit = expr();
            if (accept_kw("offset")) {
                s.offset = expr();
            } else if (accept_op(",")) {
                s.offset = std::move(s.limit);
                s.limit = expr();
            }
        }
        return s;
    }

    SelectItem select_item() {
        SelectItem item;
        if (is_op("*")) {
            next();
            item.expr.kind = Expr::Kind::star;
            return item;
        }
        if (peek().kind == TokenKind::identifier && is_op(".", 1) && is_op("*", 2)) {
            item.expr.kind = Expr::Kind::star;
            item.expr.qualifier = next().text;
            next();
            next();
            return item;
        }
        item.expr = expr();
        if (accept_kw("as")) {
            if (peek().kind == TokenKind::identifier || peek().kind == TokenKind::string) item.alias = next().text;
            else fail("expected alias after 'as'");
        } else if (peek().kind == TokenKind::identifier) {
            item.alias = next().text;
        }
        return item;
    }

    TableRef table_ref(TableRef::Join join) {
        TableRef ref;
        ref.join = join;
        if (accept_op("(")) {
            if (!is_kw("select")) fail("expected subquery");
            ref.subquery = std::make_shared<Select>(select());
            expect_op(")");
        } else {
            ref.name = identifier("table name");
        }
        if (accept_kw("as")) ref.alias = identifier("table alias");
        else if (peek().kind == TokenKind::identifier) ref.alias = next().text;
        if (ref.subquery && ref.alias.empty()) fail("derived table requires an alias");
        return ref;
    }

    static Expr make(Expr::Kind k, std::string text = {}) {
        Expr e;
        e.kind = k;
        e.text = std::move(text);
        return e;
    }
    static Expr binary(std::string op, Expr l, Expr r) {
        Expr e = make(Expr::Kind::binary, std::move(op));
        e.args.push_back(std::move(l));
        e.args.push_back(std::move(r));
        return e;
    }

    Expr expr() { return or_expr(); }

    Expr or_expr() {
        Expr l = and_expr();
        while (accept_kw("or")) l = binary("or", std::move(l), and_expr());
        return l;
    }
    Expr and_expr() {
        Expr l = not_expr();
        while (accept_kw("and")) l = binary("and", std::move(l), not_expr());
        return l;
    }
    Expr not_expr() {
        if (accept_kw("not")) {
            Expr e = make(Expr::Kind::unary, "not");
            e.args.push_back(not_expr());
            return e;
        }
        return equality();
    }
    Expr equality() {
        Expr l = comparison();
        while (true) {
            if (peek().kind == TokenKind::op &&
                (peek().text == "=" || peek().text == "==" || peek().text == "!=" || peek().text == "<>")) {
                std::string op = next().text;
                if (op == "==") op = "=";
                if (op == "<>") op = "!=";
                l = binary(op, std::move(l), comparison());
                continue;
            }
            if (accept_kw("is")) {
                const bool neg = accept_kw("not");
                expect_kw("null");
                Expr e = make(Expr::Kind::is_null);
                e.negated = neg;
                e.args.push_back(std::move(l));
                l = std::move(e);
                continue;
            }
            bool neg = false;
            if (is_kw("not") && (is_kw("in", 1) || is_kw("like", 1) || is_kw("between", 1))) {
                next();
                neg = true;
            }
            if (accept_kw("in")) {
                expect_op("(");
                Expr e;
                if (is_kw("select")) {
                    e = make(Expr::Kind::in_select);
                    e.args.push_back(std::move(l));
                    e.select = std::make_shared<Select>(select());
                } else {
                    e = make(Expr::Kind::in_list);
                    e.args.push_back(std::move(l));
                    do {
                        e.args.push_back(expr());
                    } while (accept_op(","));
                }
                expect_op(")");
                e.negated = neg;
                l = std::move(e);
                continue;
            }
            if (accept_kw("like")) {
                Expr e = make(Expr::Kind::like);
                e.negated = neg;
                e.args.push_back(std::move(l));
                e.args.push_back(comparison());
                l = std::move(e);
                continue;
            }
            if (accept_kw("between")) {
                Expr e = make(Expr::Kind::between);
                e.negated = neg;
                e.args.push_back(std::move(l));
                e.args.push_back(comparison());
                expect_kw("and");
                e.args.push_back(comparison());
                l = std::move(e);
                continue;
            }
            if (neg) fail("expected IN, LIKE or BETWEEN after NOT");
            return l;
        }
    }
    Expr comparison() {
        Expr l = additive();
        while (peek().kind == TokenKind::op &&
               (peek().text == "<" || peek().text == "<=" || peek().text == ">" || peek().text == ">=")) {
            std::string op = next().text;
            l = binary(op, std::move(l), additive());
        }
        return l;
    }
    Expr additive() {
        Expr l = multiplicative();
        while (is_op("+") || is_op("-")) {
            std::string op = next().text;
            l = binary(op, std::move(l), multiplicative());
        }
        return l;
    }
    Expr multiplicative() {
        Expr l = concat();
        while (is_op("*") || is_op("/") || is_op("%")) {
            std::string op = next().text;
            l = binary(op, std::move(l), concat());
        }
        return l;
    }
    Expr concat() {
        Expr l = unary();
        while (accept_op("||")) l = binary("||", std::move(l), unary());
        return l;
    }
    Expr unary() {
        if (is_op("-") || is_op("+")) {
            Expr e = make(Expr::Kind::unary, next().text);
            e.args.push_back(unary());
            return e;
        }
        return primary();
    }

    Expr primary() {
        const Token& t = peek();
        switch (t.kind) {
            case TokenKind::number: {
                next();
                return make(Expr::Kind::number, t.text);
            }
            case TokenKind::string: {
                next();
                return make(Expr::Kind::string, t.text);
            }
            case TokenKind::identifier: return identifier_expr();
            case TokenKind::keyword: break;
            case TokenKind::op:
                if (accept_op("(")) {
                    if (is_kw("select")) {
                        Expr e = make(Expr::Kind::subquery);
                        e.select = std::make_shared<Select>(select());
                        expect_op(")");
                        return e;
                    }
                    Expr inner = expr();
                    expect_op(")");
                    return inner;
                }
                fail("unexpected '" + t.text + "'");
            case TokenKind::end: fail("unexpected end of input");
        }
        if (accept_kw("null")) return make(Expr::Kind::null);
        if (accept_kw("true")) return make(Expr::Kind::number, "1");
        if (accept_kw("false")) return make(Expr::Kind::number, "0");
        if (accept_kw("case")) return case_expr();
        if (accept_kw("cast")) {
            expect_op("(");
            Expr e = make(Expr::Kind::cast);
            e.args.push_back(expr());
            expect_kw("as");
            std::string type = identifier("type name");
            while (peek().kind == TokenKind::identifier) type += " " + next().text;
            if (accept_op("(")) {
                type += "(";
                while (!is_op(")")) {
                    if (peek().kind == TokenKind::end) fail("unterminated type");
                    type += next().text;
                }
                type += ")";
                next();
            }
            expect_op(")");
            e.text = type;
            return e;
        }
        if (accept_kw("exists")) {
            expect_op("(");
            Expr e = make(Expr::Kind::exists);
            e.select = std::make_shared<Select>(select());
            expect_op(")");
            return e;
        }
        fail("unexpected keyword '" + t.text + "'");
    }

    Expr case_expr() {
        Expr e = make(Expr::Kind::case_);
        if (!is_kw("when")) {
            e.has_operand = true;
            e.args.push_back(expr());
        }
        if (!is_kw("when")) fail("expected WHEN in CASE");
        while (accept_kw("when")) {
            e.args.push_back(expr());
            expect_kw("then");
            e.args.push_back(expr());
        }
        if (accept_kw("else")) {
            e.has_else = true;
            e.args.push_back(expr());
        }
        expect_kw("end");
        return e;
    }

    Expr identifier_expr() {
        std::string name = next().text;
        if (accept_op("(")) {
            Expr e = make(Expr::Kind::function, name);
            if (accept_op("*")) {
                e.star_arg = true;
            } else if (!is_op(")")) {
                if (accept_kw("distinct")) e.distinct = true;
                do {
                    e.args.push_back(expr());
                } while (accept_op(","));
            }
            expect_op(")");
            return e;
        }
        if (accept_op(".")) {
            if (accept_op("*")) {
                Expr e = make(Expr::Kind::star);
                e.qualifier = name;
                return e;
            }
            Expr e = make(Expr::Kind::column, identifier("column name"));
            e.qualifier = name;
            return e;
        }
        return make(Expr::Kind::column, name);
    }
};

// ------------------------------------------------------------------ printer

int precedence(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::binary:
            if (e.text == "or") return 1;
            if (e.text == "and") return 2;
            if (e.text == "=" || e.text == "!=") return 4;
            if (e.text == "<" || e.text == "<=" || e.text == ">" || e.text == ">=") return 5;
            if (e.text == "+" || e.text == "-") return 6;
            if (e.text == "*" || e.text == "/" || e.text == "%") return 7;
            return 8;  // ||
        case Expr::Kind::unary: return e.text == "not" ? 3 : 9;
        case Expr::Kind::in_list:
        case Expr::Kind::in_select:
        case Expr::Kind::between:
        case Expr::Kind::like:
        case Expr::Kind::is_null: return 4;
        default: return 10;
    }
}

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += '\'';
        out += c;
    }
    return out + "'";
}

std::string normalize_number(const std::string& text) {
    const bool real = text.find_first_of(".eE") != std::string::npos;
    if (!real) {
        std::size_t nz = text.find_first_not_of('0');
        return nz == std::string::npos ? "0" : text.substr(nz);
    }
    double v = 0;
    auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc{}) return text;
    if (std::isfinite(v) && std::floor(v) == v && std::fabs(v) < 1e15)
        return std::to_string(static_cast<long long>(v));
    auto s = format_real(v);
    return s;
}

struct Scope {
    std::map<std::string, std::string> names;  // qualifier -> rendered name
    bool single = false;
    const Scope* parent = nullptr;
};

class Printer {
public:
    explicit Printer(bool canonical) : canonical_(canonical) {}

    std::string select(const Select& s, const Scope* parent) {
        auto parts = clauses(s, parent);
        return assemble(parts);
    }

    std::map<std::string, std::string> clauses(const Select& s, const Scope* parent) {
        Scope scope;
        scope.parent = parent;
        scope.single = s.from.size() == 1;
        std::map<std::string, int> base_counts;
        for (const auto& ref : s.from)
            if (!ref.name.empty()) ++base_counts[ref.name];

        std::map<std::string, std::string> out;
        for (const char* k : {"select", "from", "where", "group_by", "having", "order_by", "limit"}) out[k] = "";

        std::vector<std::string> rendered_refs;
        for (const auto& ref : s.from) {
            std::string name;
            if (ref.subquery) {
                name = "(" + select(*ref.subquery, &scope) + ") as " + ref.alias;
                scope.names[ref.alias] = ref.alias;
            } else if (!canonical_ || base_counts[ref.name] > 1) {
                name = ref.name + (ref.alias.empty() ? "" : " as " + ref.alias);
                scope.names[ref.alias.empty() ? ref.name : ref.alias] = ref.alias.empty() ? ref.name : ref.alias;
            } else {
                name = ref.name;
                scope.names[ref.name] = ref.name;
                if (!ref.alias.empty()) scope.names[ref.alias] = ref.name;
            }
            rendered_refs.push_back(name);
        }
        // ON conditions can reference any table of the FROM list.
        std::string from;
        for (std::size_t i = 0; i < s.from.size(); ++i) {
            const auto& ref = s.from[i];
            switch (ref.join) {
                case TableRef::Join::first: break;
                case TableRef::Join::comma:
                case TableRef::Join::cross: from += ", "; break;
                case TableRef::Join::inner: from += " join "; break;
                case TableRef::Join::left: from += " left join "; break;
            }
            from += rendered_refs[i];
            if (ref.on) from += " on " + expr(*ref.on, 0, scope);
        }
        out["from"] = from;

        std::vector<std::string> items;
        for (const auto& item : s.items) {
            std::string text = expr(item.expr, 0, scope);
            if (!canonical_ && !item.alias.empty()) text += " as " + item.alias;
            items.push_back(text);
        }
        out["select"] = (s.distinct ? "distinct " : "") + join(items, ", ");
        if (s.where) out["where"] = expr(*s.where, 0, scope);
        if (!s.group_by.empty()) {
            std::vector<std::string> keys;
            for (const auto& g : s.group_by) keys.push_back(expr(g, 0, scope));
            if (canonical_) std::sort(keys.begin(), keys.end());
            out["group_by"] = join(keys, ", ");
        }
        if (s.having) out["having"] = expr(*s.having, 0, scope);
        if (!s.order_by.empty()) {
            std::vector<std::string> keys;
            for (const auto& o : s.order_by) keys.push_back(expr(o.expr, 0, scope) + (o.desc ? " desc" : ""));
            out["order_by"] = join(keys, ", ");
        }
        if (s.limit) {
            out["limit"] = expr(*s.limit, 0, scope);
            if (s.offset) out["limit"] += " offset " + expr(*s.offset, 0, scope);
        }
        return out;
    }

    static std::string assemble(const std::map<std::string, std::string>& c) {
        std::string s = "select " + c.at("select");
        if (!c.at("from").empty()) s += " from " + c.at("from");
        if (!c.at("where").empty()) s += " where " + c.at("where");
        if (!c.at("group_by").empty()) s += " group by " + c.at("group_by");
        if (!c.at("having").empty()) s += " having " + c.at("having");
        if (!c.at("order_by").empty()) s += " order by " + c.at("order_by");
        if (!c.at("limit").empty()) s += " limit " + c.at("limit");
        return s;
    }

    std::string expr(const Expr& e, int parent_prec, const Scope& scope) {
        std::string s = raw(e, scope);
        if (precedence(e) < parent_prec) return "(" + s + ")";
        return s;
    }

private:
    bool canonical_;

    std::string column(const Expr& e, const Scope& scope) {
        if (e.qualifier.empty()) return e.text;
        if (!canonical_) return e.qualifier + "." + e.text;
        if (auto it = scope.names.find(e.qualifier); it != scope.names.end())
            return scope.single ? e.text : it->second + "." + e.text;
        for (const Scope* p = scope.parent; p; p = p->parent)
            if (auto it = p->names.find(e.qualifier); it != p->names.end()) return it->second + "." + e.text;
        return e.qualifier + "." + e.text;
    }

    void flatten(const Expr& e, const std::string& op, std::vector<const Expr*>& out) {
        if (e.kind == Expr::Kind::binary && e.text == op) {
            flatten(e.args[0], op, out);
            flatten(e.args[1], op, out);
        } else {
            out.push_back(&e);
        }
    }

    std::string raw(const Expr& e, const Scope& scope) {
        const int p = precedence(e);
        switch (e.kind) {
            case Expr::Kind::number: return canonical_ ? normalize_number(e.text) : e.text;
            case Expr::Kind::string: return quote(e.text);
            case Expr::Kind::null: return "null";
            case Expr::Kind::column: return column(e, scope);
            case Expr::Kind::star: {
                if (e.qualifier.empty()) return "*";
                Expr c = e;
                c.text = "*";
                return column(c, scope);
            }
            case Expr::Kind::unary: {
                if (e.text == "not") return "not " + expr(e.args[0], p, scope);
                if (canonical_ && e.args[0].kind == Expr::Kind::number) {
                    const std::string n = normalize_number(e.args[0].text);
                    if (e.text == "+") return n;
                    return n == "0" ? n : "-" + n;
                }
                std::string inner = expr(e.args[0], p, scope);
                if (!inner.empty() && (inner[0] == '-' || inner[0] == '+')) inner = "(" + inner + ")";
                return e.text + inner;
            }
            case Expr::Kind::binary: {
                if (canonical_ && (e.text == "and" || e.text == "or")) {
                    std::vector<const Expr*> ops;
                    flatten(e, e.text, ops);
                    std::vector<std::string> parts;
                    for (const auto* o : ops) parts.push_back(expr(*o, p + 1, scope));
                    std::sort(parts.begin(), parts.end());
                    return join(parts, " " + e.text + " ");
                }
                std::string l = expr(e.args[0], p, scope);
                std::string r = expr(e.args[1], p + 1, scope);
                if (canonical_ && (e.text == "=" || e.text == "!=") && r < l) std::swap(l, r);
                return l + " " + e.text + " " + r;
            }
            case Expr::Kind::function: {
                std::string s = e.text + "(";
                if (e.star_arg) s += "*";
                if (e.distinct) s += "distinct ";
                std::vector<std::string> args;
                for (const auto& a : e.args) args.push_back(expr(a, 0, scope));
                return s + join(args, ", ") + ")";
            }
            case Expr::Kind::case_: {
                std::string s = "case";
                std::size_t i = 0;
                if (e.has_operand) s += " " + expr(e.args[i++], 0, scope);
                const std::size_t end = e.args.size() - (e.has_else ? 1 : 0);
                for (; i < end; i += 2)
                    s += " when " + expr(e.args[i], 0, scope) + " then " + expr(e.args[i + 1], 0, scope);
                if (e.has_else) s += " else " + expr(e.args.back(), 0, scope);
                return s + " end";
            }
            case Expr::Kind::cast: return "cast(" + expr(e.args[0], 0, scope) + " as " + e.text + ")";
            case Expr::Kind::in_list: {
                std::vector<std::string> items;
                for (std::size_t i = 1; i < e.args.size(); ++i) items.push_back(expr(e.args[i], 0, scope));
                if (canonical_) std::sort(items.begin(), items.end());
                return expr(e.args[0], p + 1, scope) + (e.negated ? " not in (" : " in (") + join(items, ", ") + ")";
            }
            case Expr::Kind::in_select:
                return expr(e.args[0], p + 1, scope) + (e.negated ? " not in (" : " in (") + select(*e.select, &scope) + ")";
            case Expr::Kind::between:
                return expr(e.args[0], p + 1, scope) + (e.negated ? " not between " : " between ") +
                       expr(e.args[1], p + 1, scope) + " and " + expr(e.args[2], p + 1, scope);
            case Expr::Kind::like:
                return expr(e.args[0], p + 1, scope) + (e.negated ? " not like " : " like ") + expr(e.args[1], p + 1, scope);
            case Expr::Kind::is_null: return expr(e.args[0], p + 1, scope) + (e.negated ? " is not null" : " is null");
            case Expr::Kind::exists: return "exists (" + select(*e.select, &scope) + ")";
            case Expr::Kind::subquery: return "(" + select(*e.select, &scope) + ")";
        }
        return {};
    }
};

void visit(const Select& s, const std::function<void(const Expr&)>& on_expr,
           const std::function<void(const TableRef&)>& on_ref);

void visit_expr(const Expr& e, const std::function<void(const Expr&)>& on_expr,
                const std::function<void(const TableRef&)>& on_ref) {
    on_expr(e);
    for (const auto& a : e.args) visit_expr(a, on_expr, on_ref);
    if (e.select) visit(*e.select, on_expr, on_ref);
}

void visit(const Select& s, const std::function<void(const Expr&)>& on_expr,
           const std::function<void(const TableRef&)>& on_ref) {
    for (const auto& item : s.items) visit_expr(item.expr, on_expr, on_ref);
    for (const auto& ref : s.from) {
        on_ref(ref);
        if (ref.subquery) visit(*ref.subquery, on_expr, on_ref);
        if (ref.on) visit_expr(*ref.on, on_expr, on_ref);
    }
    if (s.where) visit_expr(*s.where, on_expr, on_ref);
    for (const auto& g : s.group_by) visit_expr(g, on_expr, on_ref);
    if (s.having) visit_expr(*s.having, on_expr, on_ref);
    for (const auto& o : s.order_by) visit_expr(o.expr, on_expr, on_ref);
    if (s.limit) visit_expr(*s.limit, on_expr, on_ref);
    if (s.offset) visit_expr(*s.offset, on_expr, on_ref);
}

}  // namespace

Select parse(std::string_view sql) { return Parser(sql).statement(); }

std::string to_sql(const Expr& e) {
    Scope scope;
    return Printer(false).expr(e, 0, scope);
}

std::string to_sql(const Select& s) { return Printer(false).select(s, nullptr); }

std::vector<std::string> referenced_tables(const Select& s) {
    std::vector<std::string> out;
    visit(
        s, [](const Expr&) {},
        [&](const TableRef& r) {
            if (!r.name.empty() && std::find(out.begin(), out.end(), r.name) == out.end()) out.push_back(r.name);
        });
    return out;
}

std::vector<const Expr*> find_calls(const Select& s, std::string_view function_name) {
    std::vector<const Expr*> out;
    visit(
        s,
        [&](const Expr& e) {
            if (e.kind == Expr::Kind::function && e.text == function_name) out.push_back(&e);
        },
        [](const TableRef&) {});
    return out;
}

std::string ComponentSet::render() const { return Printer::assemble(components); }

ComponentSet canonicalize(const Select& s) { return ComponentSet{Printer(true).clauses(s, nullptr)}; }

ComponentSet canonicalize(std::string_view sql) { return canonicalize(parse(sql)); }

}  // namespace ehrq::sql
