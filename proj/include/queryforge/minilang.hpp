#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "queryforge/errors.hpp"

// Parser for MiniLang, the small JavaScript-like language the analyses run on.
// Statement forms: let, assignment (identifier / index / field lvalue),
// if/else, while, function decl, return, expression statement.
// Expression forms: string/number literal, identifier, object literal `{}`,
// call, index access, field access, binary `+` / `==`.

namespace queryforge::minilang {

class SyntaxError : public Error {
public:
    SyntaxError(int line, int column, const std::string& expected)
        : Error("syntax error at " + std::to_string(line) + ":" + std::to_string(column) +
                ", expected " + expected),
          line(line),
          column(column),
          expected(expected) {}
    int line;
    int column;
    std::string expected;
};

struct Expr;
using ExprPtr = std::unique_ptr<Expr>;

enum class ExprKind {
    NumberLit,
    StringLit,
    ObjectLit,
    Ident,
    Call,
    IndexAccess,
    FieldAccess,
    Binary,  // "+" or "=="
};

struct Expr {
    ExprKind kind;
    int line = 1;
    int column = 0;
    std::string text;                // identifier name, literal lexeme, operator, or callee name
    std::vector<ExprPtr> children;   // call args; [recv, index]; [recv]; [lhs, rhs]
};

struct Stmt;
using StmtPtr = std::unique_ptr<Stmt>;

enum class StmtKind { Let, Assign, If, While, Return, ExprStmt };

struct Stmt {
    StmtKind kind;
    int line = 1;
    int column = 0;
    std::string let_name;            // Let only
    ExprPtr target;                  // Assign: lvalue expression
    ExprPtr value;                   // Let/Assign rhs, Return value (optional), ExprStmt expr, If/While condition
    std::vector<StmtPtr> body;       // If: then-branch; While: body
    std::vector<StmtPtr> else_body;  // If only
};

struct FunctionDecl {
    std::string name;
    std::vector<std::string> params;
    std::vector<StmtPtr> body;
    int line = 1;
    int column = 0;
};

struct MiniLangAst {
    std::string file;
    std::string source;                    // original text, kept for slicing
    std::vector<FunctionDecl> functions;   // all declarations, including nested ones
    std::vector<StmtPtr> top_level;
};

namespace detail {

enum class TokKind { Ident, Number, String, Punct, Keyword, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;   // for String: the lexeme including quotes
    int line = 1;
    int column = 0;
};

inline bool is_keyword(const std::string& s) {
    return s == "let" || s == "function" || s == "if" || s == "else" || s == "while" ||
           s == "return";
}

inline std::vector<Token> lex(const std::string& src) {
    std::vector<Token> out;
    int line = 1, col = 0;
    size_t i = 0;
    auto advance = [&](size_t n) {
        for (size_t k = 0; k < n; ++k) {
            if (src[i + k] == '\n') {
                ++line;
                col = 0;
            } else {
                ++col;
            }
        }
        i += n;
    };
    while (i < src.size()) {
        char c = src[i];
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            advance(1);
            continue;
        }
        if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') advance(1);
            continue;
        }
        Token t;
        t.line = line;
        t.column = col;
        if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t n = 0;
            while (i + n < src.size() &&
                   (isalnum(static_cast<unsigned char>(src[i + n])) || src[i + n] == '_'))
                ++n;
            t.text = src.substr(i, n);
            t.kind = is_keyword(t.text) ? TokKind::Keyword : TokKind::Ident;
            advance(n);
        } else if (isdigit(static_cast<unsigned char>(c))) {
            size_t n = 0;
            while (i + n < src.size() && isdigit(static_cast<unsigned char>(src[i + n]))) ++n;
            t.kind = TokKind::Number;
            t.text = src.substr(i, n);
            advance(n);
        } else if (c == '"') {
            size_t n = 1;
            while (i + n < src.size() && src[i + n] != '"' && src[i + n] != '\n') ++n;
            if (i + n >= src.size() || src[i + n] != '"')
                throw SyntaxError(line, col, "closing '\"'");
            ++n;
            t.kind = TokKind::String;
            t.text = src.substr(i, n);
            advance(n);
        } else if (c == '=' && i + 1 < src.size() && src[i + 1] == '=') {
            t.kind = TokKind::Punct;
            t.text = "==";
            advance(2);
        } else if (std::string("=+;(){}[],.").find(c) != std::string::npos) {
            t.kind = TokKind::Punct;
            t.text = std::string(1, c);
            advance(1);
        } else {
            throw SyntaxError(line, col, "a valid token, got '" + std::string(1, c) + "'");
        }
        out.push_back(std::move(t));
    }
    Token end;
    end.kind = TokKind::End;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

class Parser {
public:
    Parser(std::vector<Token> toks, std::string file)
        : toks_(std::move(toks)), file_(std::move(file)) {}

    MiniLangAst parse_program() {
        MiniLangAst ast;
        ast.file = file_;
        while (!at_end()) {
            if (peek_keyword("function")) {
                ast.functions.push_back(parse_function(ast));
            } else {
                ast.top_level.push_back(parse_statement(ast));
            }
        }
        return ast;
    }

private:
    std::vector<Token> toks_;
    std::string file_;
    size_t pos_ = 0;

    const Token& peek() const { return toks_[pos_]; }
    bool at_end() const { return peek().kind == TokKind::End; }

    bool peek_punct(const char* p) const {
        return peek().kind == TokKind::Punct && peek().text == p;
    }
    bool peek_keyword(const char* k) const {
        return peek().kind == TokKind::Keyword && peek().text == k;
    }

    Token next() { return toks_[pos_++]; }

    [[noreturn]] void fail(const std::string& expected) const {
        throw SyntaxError(peek().line, peek().column, expected);
    }

    Token expect_punct(const char* p) {
        if (!peek_punct(p)) fail(std::string("'") + p + "'");
        return next();
    }
    Token expect_ident() {
        if (peek().kind != TokKind::Ident) fail("identifier");
        return next();
    }

    FunctionDecl parse_function(MiniLangAst& ast) {
        Token kw = next();  // function
        FunctionDecl fn;
        fn.line = kw.line;
        fn.column = kw.column;
        fn.name = expect_ident().text;
        expect_punct("(");
        if (!peek_punct(")")) {
            fn.params.push_back(expect_ident().text);
            while (peek_punct(",")) {
                next();
                fn.params.push_back(expect_ident().text);
            }
        }
        expect_punct(")");
        fn.body = parse_block(ast);
        return fn;
    }

    std::vector<StmtPtr> parse_block(MiniLangAst& ast) {
        expect_punct("{");
        std::vector<StmtPtr> stmts;
        while (!peek_punct("}")) {
            if (at_end()) fail("'}'");
            if (peek_keyword("function")) {
                // Nested declarations hoist; no closure semantics.
                ast.functions.push_back(parse_function(ast));
            } else {
                stmts.push_back(parse_statement(ast));
            }
        }
        next();
        return stmts;
    }

    StmtPtr parse_statement(MiniLangAst& ast) {
        auto stmt = std::make_unique<Stmt>();
        stmt->line = peek().line;
        stmt->column = peek().column;
        if (peek_keyword("let")) {
            next();
            stmt->kind = StmtKind::Let;
            stmt->let_name = expect_ident().text;
            expect_punct("=");
            stmt->value = parse_expr();
            expect_punct(";");
            return stmt;
        }
        if (peek_keyword("if")) {
            next();
            stmt->kind = StmtKind::If;
            expect_punct("(");
            stmt->value = parse_expr();
            expect_punct(")");
            stmt->body = parse_block(ast);
            if (peek_keyword("else")) {
                next();
                stmt->else_body = parse_block(ast);
            }
            return stmt;
        }
        if (peek_keyword("while")) {
            next();
            stmt->kind = StmtKind::While;
            expect_punct("(");
            stmt->value = parse_expr();
            expect_punct(")");
            stmt->body = parse_block(ast);
            return stmt;
        }
        if (peek_keyword("return")) {
            next();
            stmt->kind = StmtKind::Return;
            if (!peek_punct(";")) stmt->value = parse_expr();
            expect_punct(";");
            return stmt;
        }
        if (peek_keyword("else")) fail("a statement, 'else' has no matching 'if'");

        ExprPtr e = parse_expr();
        if (peek_punct("=")) {
            if (e->kind != ExprKind::Ident && e->kind != ExprKind::IndexAccess &&
                e->kind != ExprKind::FieldAccess)
                fail("an assignable lvalue before '='");
            next();
            stmt->kind = StmtKind::Assign;
            stmt->target = std::move(e);
            stmt->value = parse_expr();
            expect_punct(";");
            return stmt;
        }
        stmt->kind = StmtKind::ExprStmt;
        stmt->value = std::move(e);
        expect_punct(";");
        return stmt;
    }

    ExprPtr parse_expr() { return parse_equality(); }

    ExprPtr make_binary(const char* op, ExprPtr lhs, ExprPtr rhs) {
        auto e = std::make_unique<Expr>();
        e->kind = ExprKind::Binary;
        e->text = op;
        e->line = lhs->line;
        e->column = lhs->column;
        e->children.push_back(std::move(lhs));
        e->children.push_back(std::move(rhs));
        return e;
    }

    ExprPtr parse_equality() {
        ExprPtr e = parse_additive();
        while (peek_punct("==")) {
            next();
            e = make_binary("==", std::move(e), parse_additive());
        }
        return e;
    }

    ExprPtr parse_additive() {
        ExprPtr e = parse_postfix();
        while (peek_punct("+")) {
            next();
            e = make_binary("+", std::move(e), parse_postfix());
        }
        return e;
    }

    ExprPtr parse_postfix() {
        ExprPtr e = parse_primary();
        for (;;) {
            if (peek_punct("(")) {
                if (e->kind != ExprKind::Ident)
                    fail("a plain identifier as call target");
                Token open = next();
                auto call = std::make_unique<Expr>();
                call->kind = ExprKind::Call;
                call->text = e->text;
                call->line = e->line;
                call->column = e->column;
                if (!peek_punct(")")) {
                    call->children.push_back(parse_expr());
                    while (peek_punct(",")) {
                        next();
                        call->children.push_back(parse_expr());
                    }
                }
                expect_punct(")");
                e = std::move(call);
            } else if (peek_punct("[")) {
                next();
                auto ix = std::make_unique<Expr>();
                ix->kind = ExprKind::IndexAccess;
                ix->line = e->line;
                ix->column = e->column;
                ix->children.push_back(std::move(e));
                ix->children.push_back(parse_expr());
                expect_punct("]");
                e = std::move(ix);
            } else if (peek_punct(".")) {
                next();
                Token field = expect_ident();
                auto fa = std::make_unique<Expr>();
                fa->kind = ExprKind::FieldAccess;
                fa->text = field.text;
                fa->line = e->line;
                fa->column = e->column;
                fa->children.push_back(std::move(e));
                e = std::move(fa);
            } else {
                return e;
            }
        }
    }

    ExprPtr parse_primary() {
        auto e = std::make_unique<Expr>();
        e->line = peek().line;
        e->column = peek().column;
        if (peek().kind == TokKind::Number) {
            e->kind = ExprKind::NumberLit;
            e->text = next().text;
            return e;
        }
        if (peek().kind == TokKind::String) {
            e->kind = ExprKind::StringLit;
            e->text = next().text;
            return e;
        }
        if (peek().kind == TokKind::Ident) {
            e->kind = ExprKind::Ident;
            e->text = next().text;
            return e;
        }
        if (peek_punct("{")) {
            next();
            expect_punct("}");
            e->kind = ExprKind::ObjectLit;
            e->text = "{}";
            return e;
        }
        if (peek_punct("(")) {
            next();
            ExprPtr inner = parse_expr();
            expect_punct(")");
            return inner;
        }
        fail("an expression");
    }
};

}  // namespace detail

// Deterministic; reports the first error with line/column.
inline MiniLangAst parse_program(const std::string& source, const std::string& file) {
    detail::Parser p(detail::lex(source), file);
    MiniLangAst ast = p.parse_program();
    ast.source = source;
    return ast;
}

}  // namespace queryforge::minilang
