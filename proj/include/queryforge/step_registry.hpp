#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "queryforge/query_parser.hpp"

namespace queryforge::dsl {

enum class ParamSig { None, String, Regex, Integer, Predicate, Traversal };
enum class ReceiverKind { Root, NodeSet };
enum class StepTag { Core, Debug, LanguageSpecific };

inline const char* to_string(ParamSig s) {
    switch (s) {
        case ParamSig::None: return "";
        case ParamSig::String: return "string";
        case ParamSig::Regex: return "regex";
        case ParamSig::Integer: return "int";
        case ParamSig::Predicate: return "predicate";
        case ParamSig::Traversal: return "traversal";
    }
    return "";
}

inline const char* to_string(StepTag t) {
    switch (t) {
        case StepTag::Core: return "core";
        case StepTag::Debug: return "debug";
        case StepTag::LanguageSpecific: return "language-specific";
    }
    return "";
}

struct StepRegistryEntry {
    std::string name;
    ReceiverKind receiver = ReceiverKind::NodeSet;
    std::vector<ParamSig> params;
    int min_args = -1;  // -1: all params required
    std::string returns;
    std::string description;
    std::string redundancy_rewrite;  // equivalent expression template, empty if none
    StepTag tag = StepTag::Core;

    int required_args() const { return min_args >= 0 ? min_args : static_cast<int>(params.size()); }

    std::string signature() const {
        std::string s;
        for (size_t i = 0; i < params.size(); ++i) {
            if (i) s += ", ";
            s += to_string(params[i]);
            if (static_cast<int>(i) >= required_args()) s += "?";
        }
        return s;
    }
};

// The shipped step set. Deliberately redundant in places (whereNot, isCall,
// array, ...) so that subsetting has real work to do.
inline const std::vector<StepRegistryEntry>& step_registry() {
    static const std::vector<StepRegistryEntry> entries = [] {
        std::vector<StepRegistryEntry> r;
        auto root = [&](const char* name, const char* desc) {
            r.push_back({name, ReceiverKind::Root, {}, -1, "node-set", desc, "", StepTag::Core});
        };
        auto step = [&](const char* name, std::vector<ParamSig> params, const char* ret,
                        const char* desc, const char* rewrite = "", StepTag tag = StepTag::Core,
                        int min_args = -1) {
            r.push_back({name, ReceiverKind::NodeSet, std::move(params), min_args, ret, desc,
                         rewrite, tag});
        };

        root("cpg", "all nodes of the graph");
        root("cpg.call", "all CALL nodes (calls and operator expressions)");
        root("cpg.method", "all METHOD nodes (function definitions)");
        root("cpg.identifier", "all IDENTIFIER nodes (variable reads and writes)");
        root("cpg.literal", "all LITERAL nodes (string/number/object literals)");

        step("name", {ParamSig::Regex}, "node-set", "keep nodes whose name matches the regex (full match)");
        step("nameExact", {ParamSig::String}, "node-set", "keep nodes whose name equals the string");
        step("nameNot", {ParamSig::Regex}, "node-set", "drop nodes whose name matches the regex",
             "where(not(_.name(_)))");
        step("code", {ParamSig::Regex}, "node-set", "keep nodes whose source excerpt matches the regex (full match)");
        step("codeExact", {ParamSig::String}, "node-set", "keep nodes whose source excerpt equals the string",
             "code(_q)");
        step("lineNumber", {ParamSig::Integer}, "node-set", "keep nodes at the given source line");
        step("label", {ParamSig::Regex}, "node-set",
             "keep nodes whose kind name (METHOD, CALL, ...) matches the regex");
        step("isCall", {}, "node-set", "keep CALL nodes", "label(\"CALL\")");
        step("isLiteral", {}, "node-set", "keep LITERAL nodes", "label(\"LITERAL\")");
        step("isIdentifier", {}, "node-set", "keep IDENTIFIER nodes", "label(\"IDENTIFIER\")");
        step("isMethod", {}, "node-set", "keep METHOD nodes", "label(\"METHOD\")");
        step("arrayAccess", {}, "node-set", "keep index-access operator calls",
             "nameExact(\"<operator>.indexAccess\")");
        step("where", {ParamSig::Predicate}, "node-set", "keep nodes satisfying the predicate");
        step("whereNot", {ParamSig::Predicate}, "node-set", "keep nodes failing the predicate",
             "where(not(_))");
        step("filter", {ParamSig::Predicate}, "node-set", "keep nodes satisfying the predicate",
             "where(_)");

        step("argument", {ParamSig::Integer}, "node-set",
             "argument(i): the i-th labeled AST child; argument: all labeled AST children", "",
             StepTag::Core, 0);
        step("array", {}, "node-set", "receiver expression of an index access (its first argument)",
             "nameExact(\"<operator>.indexAccess\").argument(1)");
        step("index", {}, "node-set", "index expression of an index access (its second argument)",
             "nameExact(\"<operator>.indexAccess\").argument(2)");
        step("astChildren", {}, "node-set", "all direct AST children");
        step("inAst", {}, "node-set", "all transitive AST ancestors");
        step("method", {}, "node-set", "the enclosing METHOD node (self if already a method)");

        step("reachableBy", {ParamSig::Traversal}, "node-set",
             "keep nodes reachable from the traversal's result via data-flow edges");

        step("not", {ParamSig::Predicate}, "predicate", "negate a predicate");
        step("and", {ParamSig::Predicate, ParamSig::Predicate}, "predicate",
             "both predicates must hold");
        step("or", {ParamSig::Predicate, ParamSig::Predicate}, "predicate",
             "at least one predicate must hold");

        step("Operators.assignment", {}, "operator-name", "the canonical assignment operator name");
        step("Operators.indexAccess", {}, "operator-name", "the canonical index-access operator name");
        step("Operators.fieldAccess", {}, "operator-name", "the canonical field-access operator name");

        step("dump", {}, "node-set", "debug aid; passes the node set through unchanged", "",
             StepTag::Debug);
        step("size", {}, "node-set", "debug aid; records the set size, passes the set through", "",
             StepTag::Debug);
        return r;
    }();
    return entries;
}

inline const StepRegistryEntry* find_step(const std::string& name) {
    for (const StepRegistryEntry& e : step_registry())
        if (e.name == name) return &e;
    return nullptr;
}

// Complete catalog in deterministic order by name.
inline std::vector<StepRegistryEntry> list_api_catalog() {
    std::vector<StepRegistryEntry> out = step_registry();
    std::sort(out.begin(), out.end(),
              [](const StepRegistryEntry& a, const StepRegistryEntry& b) { return a.name < b.name; });
    return out;
}

// Canonical operator constants (Operators.<short-name> resolves through this).
inline const std::map<std::string, std::string>& operator_constants() {
    static const std::map<std::string, std::string> ops = {
        {"assignment", "<operator>.assignment"},
        {"indexAccess", "<operator>.indexAccess"},
        {"fieldAccess", "<operator>.fieldAccess"},
    };
    return ops;
}

// Step names a rewrite template refers to.
inline std::set<std::string> template_step_names(const std::vector<StepCall>& steps);

namespace detail {
inline void collect_pred_names(const Predicate& p, std::set<std::string>& out) {
    switch (p.kind) {
        case Predicate::Kind::Chain:
            for (const StepCall& s : p.steps) {
                out.insert(s.name);
                for (const StepArg& a : s.args) {
                    if (a.kind == StepArg::Kind::Predicate) collect_pred_names(*a.predicate, out);
                    if (a.kind == StepArg::Kind::OperatorRef) out.insert("Operators." + a.str);
                }
            }
            break;
        case Predicate::Kind::Not:
            out.insert("not");
            collect_pred_names(*p.lhs, out);
            break;
        case Predicate::Kind::And:
        case Predicate::Kind::Or:
            out.insert(p.kind == Predicate::Kind::And ? "and" : "or");
            collect_pred_names(*p.lhs, out);
            collect_pred_names(*p.rhs, out);
            break;
        case Predicate::Kind::Placeholder:
            break;
    }
}
}  // namespace detail

inline std::set<std::string> template_step_names(const std::vector<StepCall>& steps) {
    std::set<std::string> out;
    for (const StepCall& s : steps) {
        out.insert(s.name);
        for (const StepArg& a : s.args) {
            if (a.kind == StepArg::Kind::Predicate) detail::collect_pred_names(*a.predicate, out);
            if (a.kind == StepArg::Kind::OperatorRef) out.insert("Operators." + a.str);
        }
    }
    return out;
}

inline std::string regex_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (std::string("\\^$.|?*+()[]{}").find(c) != std::string::npos) out += '\\';
        out += c;
    }
    return out;
}

namespace detail {

inline StepArg substitute_arg(const StepArg& tmpl_arg, const std::vector<StepArg>& originals,
                              size_t& consumed);

inline Predicate substitute_predicate(const Predicate& p, const std::vector<StepArg>& originals,
                                      size_t& consumed) {
    Predicate out;
    out.kind = p.kind;
    switch (p.kind) {
        case Predicate::Kind::Placeholder: {
            if (consumed >= originals.size() ||
                originals[consumed].kind != StepArg::Kind::Predicate)
                throw Error("rewrite template expects a predicate argument");
            return *originals[consumed++].predicate;
        }
        case Predicate::Kind::Chain:
            for (const StepCall& s : p.steps) {
                StepCall copy = s;
                copy.args.clear();
                for (const StepArg& a : s.args)
                    copy.args.push_back(substitute_arg(a, originals, consumed));
                out.steps.push_back(std::move(copy));
            }
            return out;
        case Predicate::Kind::Not:
            out.lhs = std::make_shared<Predicate>(substitute_predicate(*p.lhs, originals, consumed));
            return out;
        case Predicate::Kind::And:
        case Predicate::Kind::Or:
            out.lhs = std::make_shared<Predicate>(substitute_predicate(*p.lhs, originals, consumed));
            out.rhs = std::make_shared<Predicate>(substitute_predicate(*p.rhs, originals, consumed));
            return out;
    }
    return out;
}

inline StepArg substitute_arg(const StepArg& tmpl_arg, const std::vector<StepArg>& originals,
                              size_t& consumed) {
    switch (tmpl_arg.kind) {
        case StepArg::Kind::Placeholder:
            if (consumed >= originals.size()) throw Error("rewrite template arity mismatch");
            return originals[consumed++];
        case StepArg::Kind::PlaceholderQuoted: {
            if (consumed >= originals.size() ||
                originals[consumed].kind != StepArg::Kind::String)
                throw Error("rewrite template expects a string argument");
            StepArg out;
            out.kind = StepArg::Kind::String;
            out.str = regex_escape(originals[consumed++].str);
            return out;
        }
        case StepArg::Kind::Predicate: {
            StepArg out = tmpl_arg;
            out.predicate =
                std::make_shared<Predicate>(substitute_predicate(*tmpl_arg.predicate, originals, consumed));
            return out;
        }
        default:
            return tmpl_arg;
    }
}

}  // namespace detail

// Expands `step` through its registry rewrite template. The caller ensures
// the entry has a rewrite.
inline std::vector<StepCall> instantiate_rewrite(const StepRegistryEntry& entry,
                                                 const StepCall& step) {
    std::vector<StepCall> tmpl = parse_rewrite_template(entry.redundancy_rewrite);
    std::vector<StepCall> out;
    size_t consumed = 0;
    for (const StepCall& t : tmpl) {
        StepCall copy = t;
        copy.args.clear();
        for (const StepArg& a : t.args)
            copy.args.push_back(detail::substitute_arg(a, step.args, consumed));
        copy.line = step.line;
        copy.column = step.column;
        out.push_back(std::move(copy));
    }
    return out;
}

// Registry self-check: unique names, rewrites parse, their step names exist
// and are never themselves rewritable or debug (so one expansion suffices).
inline void validate_registry() {
    std::set<std::string> names;
    for (const StepRegistryEntry& e : step_registry())
        if (!names.insert(e.name).second) throw InvariantError("duplicate registry name " + e.name);
    for (const StepRegistryEntry& e : step_registry()) {
        if (e.redundancy_rewrite.empty()) continue;
        std::vector<StepCall> tmpl = parse_rewrite_template(e.redundancy_rewrite);
        for (const std::string& n : template_step_names(tmpl)) {
            const StepRegistryEntry* ref = find_step(n);
            if (!ref) throw InvariantError("rewrite of " + e.name + " references unknown step " + n);
            if (!ref->redundancy_rewrite.empty() || ref->tag != StepTag::Core)
                throw InvariantError("rewrite of " + e.name + " references non-core step " + n);
        }
    }
}

}  // namespace queryforge::dsl
