#pragma once

#include <set>
#include <string>
#include <vector>

#include "queryforge/query_ast.hpp"

namespace queryforge::dsl {

namespace detail {

enum class QTokKind { Ident, String, Integer, Punct, End };

struct QTok {
    QTokKind kind = QTokKind::End;
    std::string text;
    int line = 1;
    int column = 0;
};

inline std::vector<QTok> qlex(const std::string& src) {
    std::vector<QTok> out;
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
        QTok t;
        t.line = line;
        t.column = col;
        if (isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t n = 0;
            while (i + n < src.size() &&
                   (isalnum(static_cast<unsigned char>(src[i + n])) || src[i + n] == '_'))
                ++n;
            t.kind = QTokKind::Ident;
            t.text = src.substr(i, n);
            advance(n);
        } else if (isdigit(static_cast<unsigned char>(c))) {
            size_t n = 0;
            while (i + n < src.size() && isdigit(static_cast<unsigned char>(src[i + n]))) ++n;
            t.kind = QTokKind::Integer;
            t.text = src.substr(i, n);
            advance(n);
        } else if (c == '"') {
            std::string value;
            size_t n = 1;
            while (i + n < src.size() && src[i + n] != '"') {
                if (src[i + n] == '\\' && i + n + 1 < src.size()) {
                    value += src[i + n + 1];
                    n += 2;
                } else {
                    value += src[i + n];
                    ++n;
                }
            }
            if (i + n >= src.size())
                throw GrammarError("string", line, col, "closing '\"'");
            ++n;
            t.kind = QTokKind::String;
            t.text = value;
            advance(n);
        } else if (c == '+' && i + 1 < src.size() && src[i + 1] == '+') {
            t.kind = QTokKind::Punct;
            t.text = "++";
            advance(2);
        } else if (std::string(".(),=").find(c) != std::string::npos) {
            t.kind = QTokKind::Punct;
            t.text = std::string(1, c);
            advance(1);
        } else {
            throw GrammarError("query", line, col, "a valid token, got '" + std::string(1, c) + "'");
        }
        out.push_back(std::move(t));
    }
    QTok end;
    end.kind = QTokKind::End;
    end.line = line;
    end.column = col;
    out.push_back(end);
    return out;
}

class QueryParser {
public:
    QueryParser(std::vector<QTok> toks, bool template_mode = false)
        : toks_(std::move(toks)), template_mode_(template_mode) {}

    QueryAst parse_query(const std::string& source) {
        QueryAst q;
        q.source = source;
        while (peek().kind == QTokKind::Ident && peek().text == "def") parse_binding(q);
        if (at_end()) fail("query", "a result traversal");
        q.result_arms.push_back(parse_traversal());
        while (peek_punct("++")) {
            next();
            q.result_arms.push_back(parse_traversal());
        }
        if (!at_end()) fail("query", "end of query");
        compute_blocks(q);
        return q;
    }

    // A rewrite template: a chain fragment with `_` / `_q` placeholders.
    std::vector<StepCall> parse_template() {
        std::vector<StepCall> steps;
        steps.push_back(parse_step());
        while (peek_punct(".")) {
            next();
            steps.push_back(parse_step());
        }
        if (!at_end()) fail("step_chain", "end of template");
        return steps;
    }

private:
    std::vector<QTok> toks_;
    bool template_mode_;
    size_t pos_ = 0;
    std::set<std::string> defined_;

    static const std::set<std::string>& reserved() {
        static const std::set<std::string> r = {"def", "cpg", "Operators", "not", "and", "or", "_", "_q"};
        return r;
    }

    const QTok& peek(size_t ahead = 0) const {
        size_t p = pos_ + ahead;
        return p < toks_.size() ? toks_[p] : toks_.back();
    }
    bool at_end() const { return peek().kind == QTokKind::End; }
    bool peek_punct(const char* p, size_t ahead = 0) const {
        return peek(ahead).kind == QTokKind::Punct && peek(ahead).text == p;
    }
    bool peek_ident(const char* s, size_t ahead = 0) const {
        return peek(ahead).kind == QTokKind::Ident && peek(ahead).text == s;
    }
    QTok next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

    [[noreturn]] void fail(const std::string& rule, const std::string& expected) const {
        throw GrammarError(rule, peek().line, peek().column, expected);
    }

    void expect_punct(const char* p, const char* rule) {
        if (!peek_punct(p)) fail(rule, std::string("'") + p + "'");
        next();
    }

    void parse_binding(QueryAst& q) {
        next();  // def
        if (peek().kind != QTokKind::Ident) fail("def_binding", "a binding name");
        QTok name = next();
        if (reserved().count(name.text))
            throw GrammarError("def_binding", name.line, name.column,
                               "a binding name that is not reserved");
        for (const BindingDef& b : q.bindings)
            if (b.name == name.text)
                throw GrammarError("def_binding", name.line, name.column,
                                   "a unique binding name, '" + name.text + "' already defined");
        expect_punct("=", "def_binding");
        BindingDef def;
        def.name = name.text;
        def.chain = parse_traversal();
        defined_.insert(def.name);
        q.bindings.push_back(std::move(def));
    }

    Chain parse_traversal() {
        Chain c;
        c.line = peek().line;
        c.column = peek().column;
        if (peek().kind != QTokKind::Ident)
            fail("cpg_start", "'cpg' or a defined binding");
        QTok root = next();
        if (root.text == "cpg") {
            c.root = Chain::Root::Cpg;
            if (peek_punct(".") && peek(1).kind == QTokKind::Ident) {
                const std::string& s = peek(1).text;
                if (s == "call" || s == "method" || s == "identifier" || s == "literal") {
                    next();
                    next();
                    c.root = s == "call"         ? Chain::Root::CpgCall
                             : s == "method"     ? Chain::Root::CpgMethod
                             : s == "identifier" ? Chain::Root::CpgIdentifier
                                                 : Chain::Root::CpgLiteral;
                }
            }
        } else if (defined_.count(root.text)) {
            c.root = Chain::Root::Binding;
            c.binding = root.text;
        } else {
            throw GrammarError("cpg_start", root.line, root.column,
                               "'cpg' or a defined binding, got '" + root.text + "'");
        }
        while (peek_punct(".")) {
            next();
            c.steps.push_back(parse_step());
        }
        return c;
    }

    StepCall parse_step() {
        if (peek().kind != QTokKind::Ident) fail("step", "a step name");
        QTok name = next();
        StepCall step;
        step.name = name.text;
        step.line = name.line;
        step.column = name.column;
        if (peek_punct("(")) {
            step.has_parens = true;
            next();
            if (!peek_punct(")")) {
                step.args.push_back(parse_arg());
                while (peek_punct(",")) {
                    next();
                    step.args.push_back(parse_arg());
                }
            }
            expect_punct(")", "step");
        }
        return step;
    }

    StepArg parse_arg() {
        StepArg arg;
        const QTok& t = peek();
        if (t.kind == QTokKind::String) {
            arg.kind = StepArg::Kind::String;
            arg.str = next().text;
            return arg;
        }
        if (t.kind == QTokKind::Integer) {
            arg.kind = StepArg::Kind::Integer;
            arg.integer = std::stoll(next().text);
            return arg;
        }
        if (t.kind == QTokKind::Ident) {
            if (t.text == "_" && template_mode_ && !peek_punct(".", 1)) {
                next();
                arg.kind = StepArg::Kind::Placeholder;
                return arg;
            }
            if (t.text == "_q" && template_mode_) {
                next();
                arg.kind = StepArg::Kind::PlaceholderQuoted;
                return arg;
            }
            if (t.text == "_" || ((t.text == "not" || t.text == "and" || t.text == "or") &&
                                  peek_punct("(", 1))) {
                arg.kind = StepArg::Kind::Predicate;
                arg.predicate = std::make_shared<Predicate>(parse_predicate());
                return arg;
            }
            if (t.text == "Operators") {
                next();
                expect_punct(".", "reference");
                if (peek().kind != QTokKind::Ident) fail("reference", "an operator name");
                arg.kind = StepArg::Kind::OperatorRef;
                arg.str = next().text;
                return arg;
            }
            if (t.text == "cpg" || defined_.count(t.text)) {
                arg.kind = StepArg::Kind::Traversal;
                arg.traversal = std::make_shared<Chain>(parse_traversal());
                return arg;
            }
        }
        fail("argument", "a string, integer, predicate, Operators constant, or traversal");
    }

    Predicate parse_predicate() {
        Predicate p;
        const QTok& t = peek();
        if (t.kind != QTokKind::Ident) fail("predicate", "'_', 'not', 'and' or 'or'");
        if (t.text == "_") {
            if (template_mode_ && !peek_punct(".", 1)) {
                next();
                p.kind = Predicate::Kind::Placeholder;
                return p;
            }
            next();
            p.kind = Predicate::Kind::Chain;
            expect_punct(".", "predicate");
            p.steps.push_back(parse_step());
            while (peek_punct(".")) {
                next();
                p.steps.push_back(parse_step());
            }
            return p;
        }
        if (t.text == "not") {
            next();
            p.kind = Predicate::Kind::Not;
            expect_punct("(", "predicate");
            p.lhs = std::make_shared<Predicate>(parse_predicate());
            expect_punct(")", "predicate");
            return p;
        }
        if (t.text == "and" || t.text == "or") {
            p.kind = t.text == "and" ? Predicate::Kind::And : Predicate::Kind::Or;
            next();
            expect_punct("(", "predicate");
            p.lhs = std::make_shared<Predicate>(parse_predicate());
            expect_punct(",", "predicate");
            p.rhs = std::make_shared<Predicate>(parse_predicate());
            expect_punct(")", "predicate");
            return p;
        }
        fail("predicate", "'_', 'not', 'and' or 'or'");
    }
};

}  // namespace detail

// Parses query text against the DSL grammar; throws GrammarError carrying
// the violated rule name and source position.
inline QueryAst parse_query(const std::string& text) {
    detail::QueryParser p(detail::qlex(text));
    return p.parse_query(text);
}

// Rewrite templates are chain fragments, possibly with placeholders.
inline std::vector<StepCall> parse_rewrite_template(const std::string& text) {
    detail::QueryParser p(detail::qlex(text), /*template_mode=*/true);
    return p.parse_template();
}

}  // namespace queryforge::dsl
