#pragma once

#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "queryforge/cpg_builder.hpp"
#include "queryforge/interpreter.hpp"
#include "queryforge/step_registry.hpp"

namespace queryforge::dsl {

class CoverageViolation : public Error {
public:
    using Error::Error;
};

struct GrammarRule {
    std::string lhs;                                    // without angle brackets
    std::vector<std::vector<std::string>> alternatives; // atoms: "<nt>" or terminal text

    std::string render() const {
        std::string out = "<" + lhs + "> ::= ";
        for (size_t i = 0; i < alternatives.size(); ++i) {
            if (i) out += " | ";
            for (size_t k = 0; k < alternatives[i].size(); ++k) {
                if (k) out += " ";
                const std::string& atom = alternatives[i][k];
                if (!atom.empty() && atom.front() == '<' && atom.back() == '>')
                    out += atom;
                else
                    out += quote_string(atom);
            }
        }
        return out;
    }
};

struct DslBuiltins {
    std::vector<std::string> sources;
    std::vector<std::string> sinks;
    std::vector<std::string> sanitizers;
};

// Machine-readable DSL specification: grammar, API catalog, operator
// constants, and the frontend's taint builtins.
struct DslSpec {
    std::vector<GrammarRule> grammar;
    std::vector<StepRegistryEntry> apis;  // sorted by name
    std::vector<std::string> operators;   // short operator names
    std::string version;
    DslBuiltins builtins;

    const StepRegistryEntry* find(const std::string& name) const {
        for (const StepRegistryEntry& e : apis)
            if (e.name == name) return &e;
        return nullptr;
    }
};

struct SubsetRemoval {
    std::string name;
    std::string reason;  // redundant-rewrite | debug | language-specific | model-pruned
};

struct SubsetCoverage {
    std::string original;
    std::string rewritten;  // equal to original when unchanged
    bool unchanged = true;
};

struct SubsetReport {
    std::vector<std::string> kept;
    std::vector<SubsetRemoval> removed;
    std::vector<SubsetCoverage> coverage_proof;
    std::vector<std::string> warnings;
};

namespace detail {

inline bool is_filter_step(const StepRegistryEntry& e) {
    static const std::set<std::string> filters = {
        "name", "nameExact", "nameNot", "code",    "codeExact",   "lineNumber",  "label",
        "isCall", "isLiteral", "isIdentifier", "isMethod", "arrayAccess", "where", "whereNot"};
    return filters.count(e.name) != 0;
}

inline std::vector<std::string> step_alternative(const StepRegistryEntry& e) {
    if (e.params.empty()) return {e.name};
    std::vector<std::string> atoms;
    atoms.push_back(e.name + "(");
    for (size_t i = 0; i < e.params.size(); ++i) {
        if (i) atoms.push_back(",");
        switch (e.params[i]) {
            case ParamSig::String:
            case ParamSig::Regex: atoms.push_back("<string_arg>"); break;
            case ParamSig::Integer: atoms.push_back("<integer>"); break;
            case ParamSig::Predicate: atoms.push_back("<predicate>"); break;
            case ParamSig::Traversal: atoms.push_back("<traversal>"); break;
            case ParamSig::None: break;
        }
    }
    atoms.push_back(")");
    return atoms;
}

}  // namespace detail

// Builds the grammar over a given API catalog. Step names referenced in the
// alternatives always exist in the catalog.
inline std::vector<GrammarRule> build_grammar(const std::vector<StepRegistryEntry>& apis,
                                              const std::vector<std::string>& operators) {
    std::vector<GrammarRule> rules;
    std::vector<std::string> roots;
    std::vector<const StepRegistryEntry*> filter_steps, complex_steps;
    bool has_not = false, has_and = false, has_or = false;
    for (const StepRegistryEntry& e : apis) {
        if (e.receiver == ReceiverKind::Root) {
            roots.push_back(e.name);
            continue;
        }
        if (e.name == "not") { has_not = true; continue; }
        if (e.name == "and") { has_and = true; continue; }
        if (e.name == "or") { has_or = true; continue; }
        if (e.returns == "node-set") {
            if (detail::is_filter_step(e))
                filter_steps.push_back(&e);
            else
                complex_steps.push_back(&e);
        }
    }

    rules.push_back({"query", {{"<result>"}, {"<def_binding>", "<query>"}}});
    rules.push_back({"def_binding", {{"def", "<identifier>", "=", "<traversal>"}}});
    rules.push_back({"result", {{"<traversal>"}, {"<traversal>", "++", "<result>"}}});
    rules.push_back({"traversal",
                     {{"<cpg_start>"},
                      {"<cpg_start>", ".", "<step_chain>"},
                      {"<identifier>"},
                      {"<identifier>", ".", "<step_chain>"}}});
    GrammarRule cpg_start{"cpg_start", {}};
    for (const std::string& r : roots) cpg_start.alternatives.push_back({r});
    rules.push_back(std::move(cpg_start));
    rules.push_back({"step_chain", {{"<step>"}, {"<step>", ".", "<step_chain>"}}});
    rules.push_back({"step", {{"<filter_step>"}, {"<complex_step>"}}});

    GrammarRule filter_rule{"filter_step", {}};
    for (const StepRegistryEntry* e : filter_steps)
        filter_rule.alternatives.push_back(detail::step_alternative(*e));
    rules.push_back(std::move(filter_rule));

    GrammarRule complex_rule{"complex_step", {}};
    for (const StepRegistryEntry* e : complex_steps) {
        if (e->min_args >= 0 && e->min_args < static_cast<int>(e->params.size())) {
            // Optional-argument steps get one alternative per arity.
            StepRegistryEntry full = *e;
            complex_rule.alternatives.push_back(detail::step_alternative(full));
            StepRegistryEntry bare = *e;
            bare.params.clear();
            complex_rule.alternatives.push_back(detail::step_alternative(bare));
        } else {
            complex_rule.alternatives.push_back(detail::step_alternative(*e));
        }
    }
    rules.push_back(std::move(complex_rule));

    GrammarRule pred{"predicate", {{"_.", "<step_chain>"}}};
    if (has_not) pred.alternatives.push_back({"not(", "<predicate>", ")"});
    if (has_and) pred.alternatives.push_back({"and(", "<predicate>", ",", "<predicate>", ")"});
    if (has_or) pred.alternatives.push_back({"or(", "<predicate>", ",", "<predicate>", ")"});
    rules.push_back(std::move(pred));

    if (!operators.empty()) {
        rules.push_back({"string_arg", {{"<quoted_string>"}, {"<reference>"}}});
        rules.push_back({"reference", {{"Operators.", "<operator>"}}});
        GrammarRule op{"operator", {}};
        for (const std::string& o : operators) op.alternatives.push_back({o});
        rules.push_back(std::move(op));
    } else {
        rules.push_back({"string_arg", {{"<quoted_string>"}}});
    }
    return rules;
}

// The artifact owns its engine, so extraction introspects the step registry
// rather than scraping documentation. Deterministic.
inline DslSpec extract_spec() {
    DslSpec spec;
    spec.apis = list_api_catalog();
    for (const auto& [short_name, canonical] : operator_constants())
        spec.operators.push_back(short_name);
    std::sort(spec.operators.begin(), spec.operators.end());
    spec.grammar = build_grammar(spec.apis, spec.operators);
    spec.version = "queryforge-dsl-1";
    for (const std::string& s : minilang::builtin_sources()) spec.builtins.sources.push_back(s);
    for (const std::string& s : minilang::builtin_sinks()) spec.builtins.sinks.push_back(s);
    for (const std::string& s : minilang::builtin_sanitizers())
        spec.builtins.sanitizers.push_back(s);
    return spec;
}

// --- API usage collection ---------------------------------------------------

namespace detail {
inline void collect_chain_names(const Chain& c, std::set<std::string>& out);

inline void collect_predicate_names(const Predicate& p, std::set<std::string>& out) {
    switch (p.kind) {
        case Predicate::Kind::Chain:
            for (const StepCall& s : p.steps) {
                out.insert(s.name);
                for (const StepArg& a : s.args) {
                    if (a.kind == StepArg::Kind::Predicate) collect_predicate_names(*a.predicate, out);
                    if (a.kind == StepArg::Kind::Traversal) collect_chain_names(*a.traversal, out);
                    if (a.kind == StepArg::Kind::OperatorRef) out.insert("Operators." + a.str);
                }
            }
            break;
        case Predicate::Kind::Not:
            out.insert("not");
            collect_predicate_names(*p.lhs, out);
            break;
        case Predicate::Kind::And:
        case Predicate::Kind::Or:
            out.insert(p.kind == Predicate::Kind::And ? "and" : "or");
            collect_predicate_names(*p.lhs, out);
            collect_predicate_names(*p.rhs, out);
            break;
        case Predicate::Kind::Placeholder:
            break;
    }
}

inline void collect_chain_names(const Chain& c, std::set<std::string>& out) {
    if (c.root != Chain::Root::Binding) out.insert(root_text(c.root));
    for (const StepCall& s : c.steps) {
        out.insert(s.name);
        for (const StepArg& a : s.args) {
            if (a.kind == StepArg::Kind::Predicate) collect_predicate_names(*a.predicate, out);
            if (a.kind == StepArg::Kind::Traversal) collect_chain_names(*a.traversal, out);
            if (a.kind == StepArg::Kind::OperatorRef) out.insert("Operators." + a.str);
        }
    }
}
}  // namespace detail

// Every API name a query touches: roots, steps, predicate combinators and
// operator constants.
inline std::set<std::string> query_api_names(const QueryAst& q) {
    std::set<std::string> out;
    for (const BindingDef& b : q.bindings) detail::collect_chain_names(b.chain, out);
    for (const Chain& arm : q.result_arms) detail::collect_chain_names(arm, out);
    return out;
}

// --- rewriting through redundancy templates ---------------------------------

namespace detail {
inline std::vector<StepCall> rewrite_steps(const std::vector<StepCall>& steps,
                                           const std::set<std::string>& removed);

inline Predicate rewrite_predicate(const Predicate& p, const std::set<std::string>& removed) {
    Predicate out = p;
    switch (p.kind) {
        case Predicate::Kind::Chain:
            out.steps = rewrite_steps(p.steps, removed);
            return out;
        case Predicate::Kind::Not:
            out.lhs = std::make_shared<Predicate>(rewrite_predicate(*p.lhs, removed));
            return out;
        case Predicate::Kind::And:
        case Predicate::Kind::Or:
            out.lhs = std::make_shared<Predicate>(rewrite_predicate(*p.lhs, removed));
            out.rhs = std::make_shared<Predicate>(rewrite_predicate(*p.rhs, removed));
            return out;
        default:
            return out;
    }
}

inline std::vector<StepCall> rewrite_steps(const std::vector<StepCall>& steps,
                                           const std::set<std::string>& removed) {
    std::vector<StepCall> out;
    for (const StepCall& s : steps) {
        StepCall copy = s;
        copy.args.clear();
        for (const StepArg& a : s.args) {
            StepArg arg = a;
            if (a.kind == StepArg::Kind::Predicate)
                arg.predicate = std::make_shared<Predicate>(rewrite_predicate(*a.predicate, removed));
            if (a.kind == StepArg::Kind::Traversal) {
                Chain c = *a.traversal;
                c.steps = rewrite_steps(c.steps, removed);
                arg.traversal = std::make_shared<Chain>(std::move(c));
            }
            copy.args.push_back(std::move(arg));
        }
        if (removed.count(s.name)) {
            const StepRegistryEntry* entry = find_step(s.name);
            if (!entry || entry->redundancy_rewrite.empty())
                throw CoverageViolation("no rewrite for pruned api '" + s.name + "'");
            std::vector<StepCall> expansion = instantiate_rewrite(*entry, copy);
            out.insert(out.end(), expansion.begin(), expansion.end());
        } else {
            out.push_back(std::move(copy));
        }
    }
    return out;
}
}  // namespace detail

// Rewrites every use of a removed API through its redundancy template.
inline QueryAst rewrite_query(const QueryAst& q, const std::set<std::string>& removed) {
    QueryAst out = q;
    for (BindingDef& b : out.bindings) b.chain.steps = detail::rewrite_steps(b.chain.steps, removed);
    for (Chain& arm : out.result_arms) arm.steps = detail::rewrite_steps(arm.steps, removed);
    compute_blocks(out);
    out.source = to_text(out);
    return out;
}

// --- subsetting --------------------------------------------------------------

using ModelFn = std::function<std::string(const std::string& prompt)>;

enum class SubsetMode { Deterministic, Model };

namespace detail {

inline bool subset_prunable(const StepRegistryEntry& e) {
    return !e.redundancy_rewrite.empty() || e.tag != StepTag::Core;
}

inline std::string removal_reason(const StepRegistryEntry& e) {
    if (e.tag == StepTag::Debug) return "debug";
    if (e.tag == StepTag::LanguageSpecific) return "language-specific";
    return "redundant-rewrite";
}

// Re-executes original and rewritten queries on the fixture graphs; both
// must return identical node-id sets.
inline bool coverage_identical(const QueryAst& original, const QueryAst& rewritten,
                               const std::vector<const CodePropertyGraph*>& graphs) {
    for (const CodePropertyGraph* g : graphs) {
        if (execute(original, *g).result != execute(rewritten, *g).result) return false;
    }
    return true;
}

}  // namespace detail

// Core-subset selection. Deterministic mode never prunes an API an example
// query uses; model mode may prune further but only when every example query
// stays expressible (rewriting through redundancy templates where needed).
inline std::pair<DslSpec, SubsetReport> subset_spec(
    const DslSpec& spec, const std::vector<QueryAst>& example_queries, SubsetMode mode,
    ModelFn model = nullptr, const std::vector<const CodePropertyGraph*>& graphs = {},
    const std::vector<std::string>& extra_keep = {}) {
    SubsetReport report;

    std::set<std::string> used(extra_keep.begin(), extra_keep.end());
    for (const QueryAst& q : example_queries) {
        std::set<std::string> names = query_api_names(q);
        used.insert(names.begin(), names.end());
    }

    std::set<std::string> removed_names;
    std::map<std::string, std::string> reasons;
    for (const StepRegistryEntry& e : spec.apis) {
        if (!detail::subset_prunable(e)) continue;
        if (used.count(e.name)) {
            if (e.tag != StepTag::Core)
                report.warnings.push_back("prune of " + e.name + " cancelled: used by an example query");
            continue;  // deterministic mode protects used APIs
        }
        removed_names.insert(e.name);
        reasons[e.name] = detail::removal_reason(e);
    }

    if (mode == SubsetMode::Model) {
        std::set<std::string> model_keep;
        bool model_ok = false;
        if (model) {
            std::ostringstream prompt;
            prompt << "Select the core subset of this analysis DSL. Reply with one API name "
                      "per line to KEEP. APIs:\n";
            for (const StepRegistryEntry& e : spec.apis)
                prompt << e.name << " - " << e.description << "\n";
            prompt << "Example queries that must stay expressible:\n";
            for (const QueryAst& q : example_queries) prompt << q.source << "\n";
            try {
                std::istringstream reply(model(prompt.str()));
                std::string line;
                while (std::getline(reply, line)) {
                    while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
                        line.pop_back();
                    size_t start = line.find_first_not_of(" \t-*");
                    if (start == std::string::npos) continue;
                    std::string name = line.substr(start);
                    if (spec.find(name)) model_keep.insert(name);
                }
                model_ok = !model_keep.empty();
            } catch (const std::exception& err) {
                report.warnings.push_back(std::string("provider failed, deterministic fallback: ") +
                                          err.what());
            }
        } else {
            report.warnings.push_back("no provider configured, deterministic fallback");
        }
        if (model_ok) {
            // The model may only prune, never add.
            for (const StepRegistryEntry& e : spec.apis) {
                if (removed_names.count(e.name) || model_keep.count(e.name)) continue;
                if (e.redundancy_rewrite.empty() && used.count(e.name)) {
                    report.warnings.push_back("prune of " + e.name +
                                              " cancelled: used and not rewritable");
                    continue;
                }
                if (e.redundancy_rewrite.empty() && e.receiver == ReceiverKind::Root) {
                    report.warnings.push_back("prune of " + e.name + " cancelled: root step");
                    continue;
                }
                if (e.redundancy_rewrite.empty() && e.returns != "node-set") {
                    report.warnings.push_back("prune of " + e.name + " cancelled: not a chain step");
                    continue;
                }
                if (e.redundancy_rewrite.empty() && !used.count(e.name)) {
                    // Unused and unreferenced; safe to drop from the prompt surface.
                    removed_names.insert(e.name);
                    reasons[e.name] = "model-pruned";
                    continue;
                }
                removed_names.insert(e.name);
                reasons[e.name] = "model-pruned";
            }
        }
    }

    // Coverage proof: every example query must re-execute identically under
    // the subset; a violated prune is cancelled.
    bool stable = false;
    std::vector<std::pair<QueryAst, bool>> rewritten_queries;
    while (!stable) {
        stable = true;
        rewritten_queries.clear();
        for (const QueryAst& q : example_queries) {
            std::set<std::string> names = query_api_names(q);
            std::set<std::string> overlap;
            for (const std::string& n : names)
                if (removed_names.count(n)) overlap.insert(n);
            if (overlap.empty()) {
                rewritten_queries.emplace_back(q, true);
                continue;
            }
            try {
                QueryAst rq = rewrite_query(q, removed_names);
                if (!graphs.empty() && !detail::coverage_identical(q, rq, graphs))
                    throw CoverageViolation("rewrite changed results");
                rewritten_queries.emplace_back(std::move(rq), false);
            } catch (const Error& err) {
                const std::string& victim = *overlap.begin();
                removed_names.erase(victim);
                reasons.erase(victim);
                report.warnings.push_back("prune of " + victim + " cancelled: " + err.what());
                stable = false;
                break;
            }
        }
    }

    for (const auto& [q, unchanged] : rewritten_queries) {
        SubsetCoverage cov;
        cov.original = q.source;
        cov.rewritten = unchanged ? q.source : to_text(q);
        cov.unchanged = unchanged;
        report.coverage_proof.push_back(std::move(cov));
    }

    DslSpec out = spec;
    out.apis.clear();
    for (const StepRegistryEntry& e : spec.apis) {
        if (removed_names.count(e.name)) {
            report.removed.push_back(SubsetRemoval{e.name, reasons.at(e.name)});
        } else {
            out.apis.push_back(e);
            report.kept.push_back(e.name);
        }
    }
    out.operators.clear();
    for (const StepRegistryEntry& e : out.apis)
        if (e.name.rfind("Operators.", 0) == 0) out.operators.push_back(e.name.substr(10));
    out.grammar = build_grammar(out.apis, out.operators);
    return {std::move(out), std::move(report)};
}

// --- prompt rendering --------------------------------------------------------

// Two sections: the BNF grammar (one rule per line) and compact API
// summaries. This is the system prompt for query generation.
inline std::string render_prompt(const DslSpec& spec) {
    std::ostringstream out;
    out << "=== DSL GRAMMAR (BNF) ===\n";
    for (const GrammarRule& r : spec.grammar) out << r.render() << "\n";
    out << "Lexical: <quoted_string> is a double-quoted string, <integer> is a number, "
           "<identifier> is a name bound with def.\n";
    out << "=== API SUMMARIES ===\n";
    for (const StepRegistryEntry& e : spec.apis) {
        out << e.name;
        if (!e.params.empty() || e.receiver != ReceiverKind::Root) out << "(" << e.signature() << ")";
        out << " -> " << e.returns << " - " << e.description << "\n";
    }
    out << "Taint builtins: sources=";
    for (size_t i = 0; i < spec.builtins.sources.size(); ++i)
        out << (i ? "," : "") << spec.builtins.sources[i];
    out << "; sinks=";
    for (size_t i = 0; i < spec.builtins.sinks.size(); ++i)
        out << (i ? "," : "") << spec.builtins.sinks[i];
    out << "; sanitizers=";
    for (size_t i = 0; i < spec.builtins.sanitizers.size(); ++i)
        out << (i ? "," : "") << spec.builtins.sanitizers[i];
    out << "\n";
    return out.str();
}

// --- JSON round-trip ----------------------------------------------------------

inline nlohmann::json to_json(const StepRegistryEntry& e) {
    nlohmann::json j;
    j["name"] = e.name;
    j["receiver"] = e.receiver == ReceiverKind::Root ? "root" : "node-set";
    std::vector<std::string> params;
    for (ParamSig p : e.params) params.push_back(to_string(p));
    j["params"] = params;
    j["min_args"] = e.min_args;
    j["returns"] = e.returns;
    j["description"] = e.description;
    j["redundancy_rewrite"] = e.redundancy_rewrite;
    j["tags"] = std::vector<std::string>{to_string(e.tag)};
    return j;
}

inline StepRegistryEntry entry_from_json(const nlohmann::json& j) {
    StepRegistryEntry e;
    e.name = j.at("name").get<std::string>();
    e.receiver = j.at("receiver").get<std::string>() == "root" ? ReceiverKind::Root
                                                               : ReceiverKind::NodeSet;
    for (const auto& p : j.at("params")) {
        std::string s = p.get<std::string>();
        if (s == "string") e.params.push_back(ParamSig::String);
        else if (s == "regex") e.params.push_back(ParamSig::Regex);
        else if (s == "int") e.params.push_back(ParamSig::Integer);
        else if (s == "predicate") e.params.push_back(ParamSig::Predicate);
        else if (s == "traversal") e.params.push_back(ParamSig::Traversal);
        else throw ConfigError("bad param signature: " + s);
    }
    e.min_args = j.at("min_args").get<int>();
    e.returns = j.at("returns").get<std::string>();
    e.description = j.at("description").get<std::string>();
    e.redundancy_rewrite = j.at("redundancy_rewrite").get<std::string>();
    std::string tag = j.at("tags")[0].get<std::string>();
    e.tag = tag == "debug"               ? StepTag::Debug
            : tag == "language-specific" ? StepTag::LanguageSpecific
                                         : StepTag::Core;
    return e;
}

inline GrammarRule parse_rule_string(const std::string& text) {
    size_t sep = text.find(" ::= ");
    if (sep == std::string::npos) throw ConfigError("bad grammar rule: " + text);
    GrammarRule rule;
    std::string lhs = text.substr(0, sep);
    if (lhs.size() < 3 || lhs.front() != '<' || lhs.back() != '>')
        throw ConfigError("bad grammar lhs: " + lhs);
    rule.lhs = lhs.substr(1, lhs.size() - 2);
    std::string rest = text.substr(sep + 5);

    std::vector<std::string> atoms;
    auto flush_alternative = [&] {
        rule.alternatives.push_back(atoms);
        atoms.clear();
    };
    size_t i = 0;
    while (i < rest.size()) {
        if (rest[i] == ' ') { ++i; continue; }
        if (rest[i] == '|' && (i + 1 >= rest.size() || rest[i + 1] == ' ')) {
            flush_alternative();
            ++i;
            continue;
        }
        if (rest[i] == '<') {
            size_t close = rest.find('>', i);
            if (close == std::string::npos) throw ConfigError("bad grammar atom: " + rest);
            atoms.push_back(rest.substr(i, close - i + 1));
            i = close + 1;
        } else if (rest[i] == '"') {
            std::string value;
            ++i;
            while (i < rest.size() && rest[i] != '"') {
                if (rest[i] == '\\' && i + 1 < rest.size()) ++i;
                value += rest[i++];
            }
            if (i >= rest.size()) throw ConfigError("unterminated terminal in: " + rest);
            ++i;
            atoms.push_back(value);
        } else {
            throw ConfigError("bad grammar atom at '" + rest.substr(i) + "'");
        }
    }
    flush_alternative();
    return rule;
}

inline nlohmann::json to_json(const DslSpec& spec) {
    nlohmann::json j;
    std::vector<std::string> rules;
    for (const GrammarRule& r : spec.grammar) rules.push_back(r.render());
    j["grammar"] = rules;
    nlohmann::json apis = nlohmann::json::array();
    for (const StepRegistryEntry& e : spec.apis) apis.push_back(to_json(e));
    j["apis"] = apis;
    j["operators"] = spec.operators;
    j["version"] = spec.version;
    j["builtins"] = {{"sources", spec.builtins.sources},
                     {"sinks", spec.builtins.sinks},
                     {"sanitizers", spec.builtins.sanitizers}};
    return j;
}

inline DslSpec spec_from_json(const nlohmann::json& j) {
    DslSpec spec;
    try {
        for (const auto& r : j.at("grammar"))
            spec.grammar.push_back(parse_rule_string(r.get<std::string>()));
        for (const auto& a : j.at("apis")) spec.apis.push_back(entry_from_json(a));
        spec.operators = j.at("operators").get<std::vector<std::string>>();
        spec.version = j.at("version").get<std::string>();
        const auto& b = j.at("builtins");
        spec.builtins.sources = b.at("sources").get<std::vector<std::string>>();
        spec.builtins.sinks = b.at("sinks").get<std::vector<std::string>>();
        spec.builtins.sanitizers = b.at("sanitizers").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("dslspec.json: ") + e.what());
    }
    return spec;
}

inline nlohmann::json to_json(const SubsetReport& r) {
    nlohmann::json j;
    j["kept"] = r.kept;
    nlohmann::json removed = nlohmann::json::array();
    for (const SubsetRemoval& rm : r.removed)
        removed.push_back({{"name", rm.name}, {"reason", rm.reason}});
    j["removed"] = removed;
    nlohmann::json cov = nlohmann::json::array();
    for (const SubsetCoverage& c : r.coverage_proof)
        cov.push_back({{"original", c.original},
                       {"rewritten", c.unchanged ? "unchanged" : c.rewritten},
                       {"unchanged", c.unchanged}});
    j["coverage_proof"] = cov;
    j["warnings"] = r.warnings;
    return j;
}

// --- random derivation (grammar self-check) -----------------------------------

namespace detail {

class GrammarSampler {
public:
    GrammarSampler(const DslSpec& spec, std::mt19937& rng) : spec_(spec), rng_(rng) {
        for (const GrammarRule& r : spec.grammar) rules_[r.lhs] = &r;
    }

    std::string sample() {
        bindings_.clear();
        fresh_ = 0;
        std::string out;
        expand("query", 0, out);
        return out;
    }

private:
    const DslSpec& spec_;
    std::mt19937& rng_;
    std::map<std::string, const GrammarRule*> rules_;
    std::vector<std::string> bindings_;
    int fresh_ = 0;

    size_t pick(size_t n) { return std::uniform_int_distribution<size_t>(0, n - 1)(rng_); }

    static int nonterminal_count(const std::vector<std::string>& alt) {
        int n = 0;
        for (const std::string& a : alt)
            if (!a.empty() && a.front() == '<' && a.back() == '>') ++n;
        return n;
    }

    void expand(const std::string& nt, int depth, std::string& out) {
        // Lexical and context-sensitive leaves.
        if (nt == "quoted_string") {
            static const std::vector<std::string> pool = {
                "input", "exec", "<operator>.assignment", "<operator>.indexAccess",
                "CALL",  "LITERAL", "x", "query.*"};
            out += quote_string(pool[pick(pool.size())]);
            return;
        }
        if (nt == "integer") {
            out += std::to_string(1 + pick(3));
            return;
        }
        if (nt == "identifier") {
            // In a def position the caller registers the name afterwards; in a
            // traversal-root position an existing binding is required.
            if (!bindings_.empty()) {
                out += bindings_[pick(bindings_.size())];
                return;
            }
            out += "cpg";  // no binding in scope: degrade to the cpg root
            return;
        }
        auto it = rules_.find(nt);
        if (it == rules_.end()) throw Error("grammar sampler: unknown nonterminal <" + nt + ">");
        const GrammarRule& rule = *it->second;

        // def bindings get fresh names and register them for later references.
        if (nt == "def_binding") {
            std::string name = "b" + std::to_string(fresh_++);
            out += "def " + name + " = ";
            expand("traversal", depth + 1, out);
            out += "\n";
            bindings_.push_back(name);
            return;
        }
        if (nt == "traversal" && bindings_.empty()) {
            // Alternatives rooted at <identifier> need a binding in scope.
            std::vector<const std::vector<std::string>*> ok;
            for (const auto& alt : rule.alternatives)
                if (alt.empty() || alt[0] != "<identifier>") ok.push_back(&alt);
            expand_alt(*ok[pick_capped(ok.size(), depth)], depth, out);
            return;
        }
        expand_alt(rule.alternatives[pick_capped(rule.alternatives.size(), depth)], depth, out,
                   &rule);
        return;
    }

    // Past the depth budget, take the alternative with the fewest
    // nonterminals so expansion terminates.
    size_t pick_capped(size_t n, int depth) { return depth < 10 ? pick(n) : 0; }

    void expand_alt(const std::vector<std::string>& alt, int depth, std::string& out,
                    const GrammarRule* rule = nullptr) {
        const std::vector<std::string>* chosen = &alt;
        std::vector<std::string> fallback;
        if (depth >= 10 && rule) {
            int best = nonterminal_count(alt);
            for (const auto& a : rule->alternatives) {
                if (nonterminal_count(a) < best) {
                    best = nonterminal_count(a);
                    fallback = a;
                    chosen = &fallback;
                }
            }
        }
        for (const std::string& atom : *chosen) {
            if (!atom.empty() && atom.front() == '<' && atom.back() == '>') {
                expand(atom.substr(1, atom.size() - 2), depth + 1, out);
            } else {
                out += atom;
            }
            out += " ";
        }
    }
};

}  // namespace detail

// Draws one random derivation of <query> from the spec's grammar. Every
// derivation must parse via parse_query.
inline std::string derive_random_query(const DslSpec& spec, std::mt19937& rng) {
    detail::GrammarSampler sampler(spec, rng);
    return sampler.sample();
}

}  // namespace queryforge::dsl
