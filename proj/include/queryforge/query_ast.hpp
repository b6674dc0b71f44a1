#pragma once

#include <memory>
#include <string>
#include <vector>

#include "queryforge/errors.hpp"

namespace queryforge::dsl {

// Violated grammar rule plus the offending source position.
class GrammarError : public Error {
public:
    GrammarError(std::string rule_, int line_, int column_, std::string expected_)
        : Error("grammar rule <" + rule_ + "> violated at " + std::to_string(line_) + ":" +
                std::to_string(column_) + ", expected " + expected_),
          rule(std::move(rule_)),
          line(line_),
          column(column_),
          expected(std::move(expected_)) {}
    std::string rule;
    int line;
    int column;
    std::string expected;
};

struct Predicate;
struct Chain;

struct StepArg {
    enum class Kind {
        String,       // quoted literal, stored unquoted
        Integer,
        OperatorRef,  // Operators.<name>, stored as the short name
        Predicate,
        Traversal,
        Placeholder,        // `_` in rewrite templates: consumes one original arg
        PlaceholderQuoted,  // `_q`: consumes one original arg, regex-escaped
    };
    Kind kind = Kind::String;
    std::string str;
    long long integer = 0;
    std::shared_ptr<Predicate> predicate;
    std::shared_ptr<Chain> traversal;
};

struct StepCall {
    std::string name;
    bool has_parens = false;
    std::vector<StepArg> args;
    int line = 1;
    int column = 0;
};

struct Predicate {
    enum class Kind { Chain, Not, And, Or, Placeholder };  // Placeholder: templates only
    Kind kind = Kind::Chain;
    std::vector<StepCall> steps;                // Chain: steps applied to `_`
    std::shared_ptr<Predicate> lhs, rhs;        // Not uses lhs only
};

struct Chain {
    enum class Root { Cpg, CpgCall, CpgMethod, CpgIdentifier, CpgLiteral, Binding };
    Root root = Root::Cpg;
    std::string binding;  // Root::Binding
    std::vector<StepCall> steps;
    int line = 1;
    int column = 0;
};

inline const char* root_text(Chain::Root r) {
    switch (r) {
        case Chain::Root::Cpg: return "cpg";
        case Chain::Root::CpgCall: return "cpg.call";
        case Chain::Root::CpgMethod: return "cpg.method";
        case Chain::Root::CpgIdentifier: return "cpg.identifier";
        case Chain::Root::CpgLiteral: return "cpg.literal";
        case Chain::Root::Binding: return "";
    }
    return "";
}

struct BindingDef {
    std::string name;
    Chain chain;
};

// One unit of evaluation: a root selection or a step application of a
// top-level chain. Bindings complete at their chain's final block.
struct BlockRef {
    int binding = -1;  // index into bindings, or -1 for a result arm
    int arm = -1;      // index into result_arms when binding == -1
    int step = -1;     // index into the chain's steps, -1 = root selection
};

struct QueryAst {
    std::vector<BindingDef> bindings;
    std::vector<Chain> result_arms;  // joined with ++ (set union)
    std::string source;
    std::vector<BlockRef> blocks;    // evaluation order, one per step application

    const Chain& chain_of(const BlockRef& b) const {
        return b.binding >= 0 ? bindings[b.binding].chain : result_arms[b.arm];
    }
    std::string owner_of(const BlockRef& b) const {
        return b.binding >= 0 ? bindings[b.binding].name : std::string("<result>");
    }
};

inline void compute_blocks(QueryAst& q) {
    q.blocks.clear();
    auto add_chain = [&q](int binding, int arm, const Chain& c) {
        q.blocks.push_back(BlockRef{binding, arm, -1});
        for (int i = 0; i < static_cast<int>(c.steps.size()); ++i)
            q.blocks.push_back(BlockRef{binding, arm, i});
    };
    for (int b = 0; b < static_cast<int>(q.bindings.size()); ++b)
        add_chain(b, -1, q.bindings[b].chain);
    for (int a = 0; a < static_cast<int>(q.result_arms.size()); ++a)
        add_chain(-1, a, q.result_arms[a]);
}

// --- canonical text rendering -------------------------------------------

inline std::string to_text(const Predicate& p);
inline std::string to_text(const Chain& c);

inline std::string quote_string(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        if (c == '"' || c == '\\') out += '\\';
        out += c;
    }
    return out + "\"";
}

inline std::string to_text(const StepArg& a) {
    switch (a.kind) {
        case StepArg::Kind::String: return quote_string(a.str);
        case StepArg::Kind::Integer: return std::to_string(a.integer);
        case StepArg::Kind::OperatorRef: return "Operators." + a.str;
        case StepArg::Kind::Predicate: return to_text(*a.predicate);
        case StepArg::Kind::Traversal: return to_text(*a.traversal);
        case StepArg::Kind::Placeholder: return "_";
        case StepArg::Kind::PlaceholderQuoted: return "_q";
    }
    return "";
}

inline std::string to_text(const StepCall& s) {
    std::string out = s.name;
    if (s.has_parens) {
        out += "(";
        for (size_t i = 0; i < s.args.size(); ++i) {
            if (i) out += ", ";
            out += to_text(s.args[i]);
        }
        out += ")";
    }
    return out;
}

inline std::string to_text(const Predicate& p) {
    switch (p.kind) {
        case Predicate::Kind::Chain: {
            std::string out = "_";
            for (const StepCall& s : p.steps) out += "." + to_text(s);
            return out;
        }
        case Predicate::Kind::Not: return "not(" + to_text(*p.lhs) + ")";
        case Predicate::Kind::And: return "and(" + to_text(*p.lhs) + ", " + to_text(*p.rhs) + ")";
        case Predicate::Kind::Or: return "or(" + to_text(*p.lhs) + ", " + to_text(*p.rhs) + ")";
        case Predicate::Kind::Placeholder: return "_";
    }
    return "";
}

inline std::string to_text(const Chain& c) {
    std::string out = c.root == Chain::Root::Binding ? c.binding : root_text(c.root);
    for (const StepCall& s : c.steps) out += "." + to_text(s);
    return out;
}

inline std::string to_text(const QueryAst& q) {
    std::string out;
    for (const BindingDef& b : q.bindings) out += "def " + b.name + " = " + to_text(b.chain) + "\n";
    for (size_t i = 0; i < q.result_arms.size(); ++i) {
        if (i) out += " ++ ";
        out += to_text(q.result_arms[i]);
    }
    out += "\n";
    return out;
}

// Text of the step (or root) a block refers to, for traces and prompts.
inline std::string block_text(const QueryAst& q, const BlockRef& b) {
    const Chain& c = q.chain_of(b);
    if (b.step < 0)
        return c.root == Chain::Root::Binding ? c.binding : root_text(c.root);
    return "." + to_text(c.steps[b.step]);
}

}  // namespace queryforge::dsl
