#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "queryforge/dsl_spec.hpp"
#include "queryforge/fuzzy.hpp"
#include "queryforge/interpreter.hpp"
#include "queryforge/query_parser.hpp"
#include "queryforge/slicer.hpp"

namespace queryforge::dsl {

enum class Verdict { SyntaxError, ExecError, SemanticMiss, FalsePositives, Pass };

inline const char* to_string(Verdict v) {
    switch (v) {
        case Verdict::SyntaxError: return "SyntaxError";
        case Verdict::ExecError: return "ExecError";
        case Verdict::SemanticMiss: return "SemanticMiss";
        case Verdict::FalsePositives: return "FalsePositives";
        case Verdict::Pass: return "Pass";
    }
    return "?";
}

struct FixSuggestion {
    enum class Kind { RenameOperator, RenameStep, Arity, Signature };
    Kind kind = Kind::RenameStep;
    std::string original;
    std::vector<std::pair<std::string, int>> candidates;  // ascending by distance, at most 5
};

inline const char* to_string(FixSuggestion::Kind k) {
    switch (k) {
        case FixSuggestion::Kind::RenameOperator: return "rename-operator";
        case FixSuggestion::Kind::RenameStep: return "rename-step";
        case FixSuggestion::Kind::Arity: return "arity";
        case FixSuggestion::Kind::Signature: return "signature";
    }
    return "?";
}

struct OverfitFlag {
    enum class Kind { ExactConstant, StructuralOverSpecific };
    Kind kind = Kind::ExactConstant;
    std::string detail;  // offending literal or structure description
    int block = 1;
};

inline const char* to_string(OverfitFlag::Kind k) {
    return k == OverfitFlag::Kind::ExactConstant ? "ExactConstant" : "StructuralOverSpecific";
}

struct LabelRange {
    std::string file;
    int start = 1;
    int end = 1;
};

struct ValidationReport {
    Verdict verdict = Verdict::Pass;
    // SyntaxError payload
    std::string grammar_rule;
    int err_line = 0;
    int err_column = 0;
    std::string expected;
    // ExecError payload
    int exec_block = 0;
    std::string exec_kind;
    std::string message;
    std::vector<FixSuggestion> suggestions;
    // executed verdicts
    std::optional<PState> pstate;
    std::optional<PState> example_states;  // pstate filtered to the example's slice
    std::vector<NodeId> result;
    std::vector<NodeId> fp_nodes;
    std::optional<QueryAst> query;
    std::shared_ptr<ExecutionTrace> trace;  // full per-block sets, for localization
};

// --- fuzzy fix suggestions ---------------------------------------------------

namespace detail {
// Operator constants match against both the canonical name and the name
// without the "<operator>." prefix, so "assignment" finds
// "<operator>.assignment" at distance zero.
inline int candidate_distance(const std::string& input, const std::string& candidate) {
    int d = edit_distance(input, candidate);
    if (candidate.rfind(kOperatorPrefix, 0) == 0) {
        std::string stripped = candidate.substr(std::string(kOperatorPrefix).size());
        d = std::min(d, edit_distance(input, stripped));
    }
    return d;
}
}  // namespace detail

inline FixSuggestion suggest_fix(const std::string& offending, FixSuggestion::Kind kind,
                                 const DslSpec& spec) {
    FixSuggestion fix;
    fix.kind = kind;
    fix.original = offending;
    std::vector<std::string> candidates;
    for (const StepRegistryEntry& e : spec.apis) candidates.push_back(e.name);
    for (const std::string& op : spec.operators) candidates.push_back(operator_name(op));

    int threshold = std::max(3, static_cast<int>(std::ceil(offending.size() / 3.0)));
    for (const std::string& c : candidates) {
        int d = detail::candidate_distance(offending, c);
        if (d <= threshold) fix.candidates.emplace_back(c, d);
    }
    std::stable_sort(fix.candidates.begin(), fix.candidates.end(),
                     [](const auto& a, const auto& b) { return a.second < b.second; });
    if (fix.candidates.size() > 5) fix.candidates.resize(5);
    return fix;
}

inline std::vector<FixSuggestion> suggest_fix(const ExecError& err, const DslSpec& spec) {
    switch (err.kind) {
        case ExecError::Kind::UnknownStep:
            return {suggest_fix(err.offending, FixSuggestion::Kind::RenameStep, spec)};
        case ExecError::Kind::UnknownOperatorName:
            return {suggest_fix(err.offending, FixSuggestion::Kind::RenameOperator, spec)};
        case ExecError::Kind::ArityMismatch: {
            FixSuggestion fix;
            fix.kind = FixSuggestion::Kind::Arity;
            fix.original = err.offending;
            if (const StepRegistryEntry* e = spec.find(err.offending))
                fix.candidates.emplace_back(e->name + "(" + e->signature() + ")", 0);
            return {fix};
        }
        case ExecError::Kind::TypeMismatch: {
            FixSuggestion fix;
            fix.kind = FixSuggestion::Kind::Signature;
            fix.original = err.offending;
            if (const StepRegistryEntry* e = spec.find(err.offending))
                fix.candidates.emplace_back(e->name + "(" + e->signature() + ")", 0);
            return {fix};
        }
        case ExecError::Kind::RegexError:
            return {};
    }
    return {};
}

// --- overfitting heuristics ----------------------------------------------------

namespace detail {

inline const std::set<std::string>& overfit_allowlist() {
    static const std::set<std::string> allow = [] {
        std::set<std::string> s = {"__proto__", "prototype", "constructor"};
        for (const char* op : {"assignment", "indexAccess", "fieldAccess", "addition", "equals"}) {
            s.insert(op);
            s.insert(operator_name(op));
        }
        for (const std::string& b : minilang::builtin_sources()) s.insert(b);
        for (const std::string& b : minilang::builtin_sinks()) s.insert(b);
        return s;
    }();
    return allow;
}

struct OverfitScan {
    const std::string& slice;
    std::vector<OverfitFlag>& flags;
    int block = 1;

    void scan_steps(const std::vector<StepCall>& steps, bool top_level, int& run) {
        for (size_t i = 0; i < steps.size(); ++i) {
            const StepCall& s = steps[i];
            if (top_level) block++;
            if (s.name == "astChildren") {
                if (++run > 3 && run == 4)  // flag once per run
                    flags.push_back({OverfitFlag::Kind::StructuralOverSpecific,
                                     "astChildren chain deeper than 3", block});
            } else {
                run = 0;
            }
            if (s.name == "lineNumber")
                flags.push_back({OverfitFlag::Kind::StructuralOverSpecific,
                                 "lineNumber pins the query to one source line", block});
            bool literal_sensitive = s.name == "nameExact" || s.name == "code" ||
                                     s.name == "codeExact" || s.name == "name" ||
                                     s.name == "nameNot";
            for (const StepArg& a : s.args) {
                if (a.kind == StepArg::Kind::String && literal_sensitive) {
                    if (!overfit_allowlist().count(a.str) && !slice.empty() &&
                        slice.find(a.str) != std::string::npos)
                        flags.push_back({OverfitFlag::Kind::ExactConstant, a.str, block});
                }
                if (a.kind == StepArg::Kind::Predicate) scan_predicate(*a.predicate);
                if (a.kind == StepArg::Kind::Traversal) {
                    int sub_run = 0;
                    scan_steps(a.traversal->steps, false, sub_run);
                }
            }
        }
    }

    void scan_predicate(const Predicate& p) {
        switch (p.kind) {
            case Predicate::Kind::Chain: {
                int run = 0;
                scan_steps(p.steps, false, run);
                break;
            }
            case Predicate::Kind::Not: scan_predicate(*p.lhs); break;
            case Predicate::Kind::And:
            case Predicate::Kind::Or:
                scan_predicate(*p.lhs);
                scan_predicate(*p.rhs);
                break;
            case Predicate::Kind::Placeholder: break;
        }
    }
};

}  // namespace detail

// Flags constants bound to one example and structure too specific to it.
// `slice` is the example's program slice text.
inline std::vector<OverfitFlag> detect_overfit(const QueryAst& q, const std::string& slice) {
    std::vector<OverfitFlag> flags;
    detail::OverfitScan scan{slice, flags};
    scan.block = 0;
    auto scan_chain = [&scan](const Chain& c) {
        scan.block++;  // root block
        int run = 0;
        scan.scan_steps(c.steps, true, run);
    };
    for (const BindingDef& b : q.bindings) scan_chain(b.chain);
    for (const Chain& arm : q.result_arms) scan_chain(arm);
    return flags;
}

// --- false-positive localization ------------------------------------------------

class NotAnFp : public Error {
public:
    using Error::Error;
};

// The block where a false positive enters the result chain: the start of its
// uninterrupted presence through every later block into the final result.
inline int localize_fp(const QueryAst& q, const ExecutionTrace& trace, NodeId fp) {
    // Identify the result-arm block ranges in the trace.
    struct ArmRange {
        size_t first = 0, last = 0;  // indices into trace.states
    };
    std::vector<ArmRange> arms;
    for (size_t i = 0; i < trace.states.size(); ++i) {
        if (trace.states[i].owner != "<result>") continue;
        const BlockRef& ref = q.blocks[i];
        if (ref.step < 0) arms.push_back({i, i});
        else arms.back().last = i;
    }
    for (const ArmRange& arm : arms) {
        auto contains = [&](size_t ix) {
            const NodeSet& set = trace.states[ix].scope.at("<result>");
            return std::binary_search(set.begin(), set.end(), fp);
        };
        if (!contains(arm.last)) continue;
        size_t j = arm.last;
        while (j > arm.first && contains(j - 1)) --j;
        return trace.states[j].index;
    }
    throw NotAnFp("node " + std::to_string(fp) + " is not in the final result set");
}

// --- validation pipeline ----------------------------------------------------------

namespace detail {

inline PState pstate_filtered(const ExecutionTrace& trace, const CodePropertyGraph& g,
                              const std::set<std::pair<std::string, int>>& keep_lines) {
    PState ps;
    for (const BlockState& bs : trace.states) {
        std::map<std::string, ValueSummary> sj;
        for (const auto& [name, set] : bs.scope) {
            ValueSummary v;
            for (NodeId id : set) {
                const Node& n = g.node(id);
                if (!keep_lines.count({n.file, n.line})) continue;
                ++v.count;
                if (v.samples.size() < kPStateSampleCap)
                    v.samples.push_back(ValueSample{n.id, to_string(n.kind), n.code, n.line});
            }
            sj.emplace(name, std::move(v));
        }
        ps.states.push_back(std::move(sj));
    }
    return ps;
}

inline bool in_any_label(const Node& n, const std::vector<LabelRange>& labels) {
    for (const LabelRange& l : labels)
        if (n.file == l.file && n.line >= l.start && n.line <= l.end) return true;
    return false;
}

}  // namespace detail

// Parse, execute instrumented, then check semantics against the labeled
// example. Never throws: every failure mode is a verdict.
inline ValidationReport validate(const std::string& q_text, const CodePropertyGraph& g,
                                 const minilang::VulnExample& ex,
                                 std::vector<LabelRange> project_labels = {},
                                 const DslSpec* spec = nullptr) {
    ValidationReport report;
    DslSpec local_spec;
    if (!spec) {
        local_spec = extract_spec();
        spec = &local_spec;
    }
    if (project_labels.empty())
        project_labels.push_back(LabelRange{ex.sink_file, ex.sink_start, ex.sink_end});

    QueryAst q;
    try {
        q = parse_query(q_text);
    } catch (const GrammarError& e) {
        report.verdict = Verdict::SyntaxError;
        report.grammar_rule = e.rule;
        report.err_line = e.line;
        report.err_column = e.column;
        report.expected = e.expected;
        report.message = e.what();
        return report;
    }
    report.query = q;

    ExecResult exec_result;
    try {
        exec_result = execute(q, g, /*instrument=*/true);
    } catch (const ExecError& e) {
        report.verdict = Verdict::ExecError;
        report.exec_block = e.block_index;
        report.exec_kind = to_string(e.kind);
        report.message = e.what();
        report.suggestions = suggest_fix(e, *spec);
        if (e.partial_trace) {
            report.trace = e.partial_trace;
            report.pstate = pstate_from_trace(*e.partial_trace, g);
        }
        return report;
    }
    report.result = exec_result.result;
    report.trace = std::make_shared<ExecutionTrace>(*exec_result.trace);
    report.pstate = pstate_from_trace(*exec_result.trace, g);

    bool retrieved = false;
    for (NodeId id : exec_result.result) {
        const Node& n = g.node(id);
        if (n.file == ex.sink_file && n.line >= ex.sink_start && n.line <= ex.sink_end) {
            retrieved = true;
            break;
        }
    }

    if (!retrieved) {
        report.verdict = Verdict::SemanticMiss;
        // Restrict the states to the example's slice so the model can see
        // where the chain died; boolean feedback alone is not actionable.
        try {
            report.example_states =
                detail::pstate_filtered(*report.trace, g, minilang::slice_lines(g, ex));
        } catch (const Error&) {
            report.example_states = PState{};
        }
        // Empty-stage signal: the first block whose chain value is empty.
        for (size_t i = 0; i < report.trace->states.size(); ++i) {
            const BlockState& bs = report.trace->states[i];
            if (!bs.scope.at(bs.owner).empty()) continue;
            const BlockRef& ref = q.blocks[i];
            if (ref.step >= 0) {
                const StepCall& s = q.chain_of(ref).steps[ref.step];
                if ((s.name == "nameExact" || s.name == "name") && !s.args.empty() &&
                    s.args[0].kind == StepArg::Kind::String)
                    report.suggestions.push_back(
                        suggest_fix(s.args[0].str, FixSuggestion::Kind::RenameOperator, *spec));
            }
            report.message = "result misses the example; block " + std::to_string(bs.index) +
                             " (" + bs.step_text + ") first produced an empty set";
            break;
        }
        if (report.message.empty()) report.message = "result does not cover the labeled sink lines";
        return report;
    }

    for (NodeId id : exec_result.result) {
        if (!detail::in_any_label(g.node(id), project_labels)) report.fp_nodes.push_back(id);
    }
    if (!report.fp_nodes.empty()) {
        report.verdict = Verdict::FalsePositives;
        report.message = std::to_string(report.fp_nodes.size()) +
                         " result node(s) outside all labeled sink ranges";
        return report;
    }
    report.verdict = Verdict::Pass;
    return report;
}

// --- report serialization -----------------------------------------------------

inline nlohmann::json to_json(const FixSuggestion& f) {
    nlohmann::json j;
    j["kind"] = to_string(f.kind);
    j["original"] = f.original;
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& [name, dist] : f.candidates)
        cands.push_back({{"name", name}, {"distance", dist}});
    j["candidates"] = cands;
    return j;
}

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json j;
    j["verdict"] = to_string(r.verdict);
    nlohmann::json detail;
    if (r.verdict == Verdict::SyntaxError) {
        detail["rule"] = r.grammar_rule;
        detail["line"] = r.err_line;
        detail["column"] = r.err_column;
        detail["expected"] = r.expected;
    }
    if (r.verdict == Verdict::ExecError) {
        detail["block"] = r.exec_block;
        detail["kind"] = r.exec_kind;
    }
    if (!r.message.empty()) detail["message"] = r.message;
    j["detail"] = detail;
    if (r.pstate) j["pstate"] = render_pstate(*r.pstate);
    if (r.example_states) j["example_states"] = render_pstate(*r.example_states);
    nlohmann::json sugg = nlohmann::json::array();
    for (const FixSuggestion& f : r.suggestions) sugg.push_back(to_json(f));
    j["suggestions"] = sugg;
    j["result"] = r.result;
    j["fp_nodes"] = r.fp_nodes;
    return j;
}

}  // namespace queryforge::dsl
