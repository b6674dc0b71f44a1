#pragma once

#include <algorithm>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "queryforge/cpg.hpp"
#include "queryforge/query_ast.hpp"
#include "queryforge/step_registry.hpp"

namespace queryforge::dsl {

using NodeSet = std::vector<NodeId>;  // sorted, unique

struct BlockState {
    int index = 1;          // 1-based block number
    std::string owner;      // binding name, or "<result>"
    std::string step_text;
    std::map<std::string, NodeSet> scope;  // in-scope names -> full value sets
};

struct ExecutionTrace {
    std::vector<BlockState> states;
};

struct ExecResult {
    NodeSet result;
    std::optional<ExecutionTrace> trace;
};

// Execution-time exception, the paper's second failure class. Carries the
// failing block and the states recorded up to it.
class ExecError : public Error {
public:
    enum class Kind { UnknownStep, ArityMismatch, TypeMismatch, UnknownOperatorName, RegexError };

    ExecError(int block, Kind kind_, std::string offending_, const std::string& message)
        : Error("block " + std::to_string(block) + ": " + message),
          block_index(block),
          kind(kind_),
          offending(std::move(offending_)) {}

    int block_index;
    Kind kind;
    std::string offending;  // identifier for fix suggestions
    std::shared_ptr<ExecutionTrace> partial_trace;  // set when instrumented
};

inline const char* to_string(ExecError::Kind k) {
    switch (k) {
        case ExecError::Kind::UnknownStep: return "UnknownStep";
        case ExecError::Kind::ArityMismatch: return "ArityMismatch";
        case ExecError::Kind::TypeMismatch: return "TypeMismatch";
        case ExecError::Kind::UnknownOperatorName: return "UnknownOperatorName";
        case ExecError::Kind::RegexError: return "RegexError";
    }
    return "?";
}

// --- program states (PState) ----------------------------------------------

struct ValueSample {
    NodeId id;
    std::string kind;
    std::string code;
    int line;
};

struct ValueSummary {
    std::size_t count = 0;
    std::vector<ValueSample> samples;  // at most kPStateSampleCap
};

inline constexpr std::size_t kPStateSampleCap = 8;

// S_1..S_n: per-block maps from in-scope names to value summaries.
struct PState {
    std::vector<std::map<std::string, ValueSummary>> states;
};

inline PState pstate_from_trace(const ExecutionTrace& trace, const CodePropertyGraph& g) {
    PState ps;
    for (const BlockState& bs : trace.states) {
        std::map<std::string, ValueSummary> sj;
        for (const auto& [name, set] : bs.scope) {
            ValueSummary v;
            v.count = set.size();
            for (std::size_t i = 0; i < set.size() && i < kPStateSampleCap; ++i) {
                const Node& n = g.node(set[i]);
                v.samples.push_back(ValueSample{n.id, to_string(n.kind), n.code, n.line});
            }
            sj.emplace(name, std::move(v));
        }
        ps.states.push_back(std::move(sj));
    }
    return ps;
}

// Line-oriented PState text; this exact text is embedded in refinement prompts.
inline std::string render_pstate(const PState& ps) {
    std::ostringstream out;
    for (std::size_t j = 0; j < ps.states.size(); ++j) {
        out << "S " << (j + 1) << "\n";
        for (const auto& [name, v] : ps.states[j]) {
            out << "V " << name << " " << v.count;
            for (const ValueSample& s : v.samples) {
                std::string code = s.code;
                std::string escaped;
                for (char c : code) {
                    if (c == '"' || c == '\\') escaped += '\\';
                    escaped += c == '\n' ? ' ' : c;
                }
                out << " (" << s.id << "," << s.kind << ",\"" << escaped << "\"," << s.line << ")";
            }
            out << "\n";
        }
    }
    return out.str();
}

// --- interpreter -----------------------------------------------------------

namespace detail {

inline NodeSet intersect(const NodeSet& a, const NodeSet& b) {
    NodeSet out;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

inline void sort_unique(NodeSet& s) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
}

class Interpreter {
public:
    explicit Interpreter(const CodePropertyGraph& g) : g_(g) {
        for (const auto& [id, n] : g.nodes) {
            all_.push_back(id);
            by_kind_[n.kind].push_back(id);
        }
        for (const Edge& e : g.edges) {
            if (e.kind == EdgeKind::Ast) {
                children_[e.src].push_back(e.dst);
                parent_[e.dst] = e.src;
                if (e.label) labeled_[e.src].emplace_back(*e.label, e.dst);
            } else if (e.kind == EdgeKind::ReachingDef || e.kind == EdgeKind::ArgToParam ||
                       e.kind == EdgeKind::ReturnToCall) {
                dflow_[e.src].push_back(e.dst);
            }
        }
        for (auto& [k, v] : by_kind_) sort_unique(v);
        for (auto& [k, v] : children_) sort_unique(v);
    }

    ExecResult execute(const QueryAst& q, bool instrument) {
        completed_.clear();
        trace_ = instrument ? std::make_shared<ExecutionTrace>() : nullptr;
        block_no_ = 0;
        ExecResult out;
        try {
            for (const BindingDef& b : q.bindings)
                completed_[b.name] = eval_top_chain(b.chain, b.name);
            NodeSet result;
            for (const Chain& arm : q.result_arms) {
                NodeSet arm_result = eval_top_chain(arm, "<result>");
                result.insert(result.end(), arm_result.begin(), arm_result.end());
            }
            sort_unique(result);
            out.result = std::move(result);
        } catch (ExecError& err) {
            err.partial_trace = trace_;
            throw;
        }
        if (trace_) out.trace = *trace_;
        return out;
    }

private:
    const CodePropertyGraph& g_;
    NodeSet all_;
    std::map<NodeKind, NodeSet> by_kind_;
    std::map<NodeId, NodeSet> children_;
    std::map<NodeId, std::vector<std::pair<int, NodeId>>> labeled_;
    std::map<NodeId, NodeId> parent_;
    std::map<NodeId, NodeSet> dflow_;

    std::map<std::string, NodeSet> completed_;
    std::shared_ptr<ExecutionTrace> trace_;
    int block_no_ = 0;
    std::map<std::string, std::regex> regex_cache_;

    [[noreturn]] void err(ExecError::Kind kind, const std::string& offending,
                          const std::string& message) {
        throw ExecError(block_no_ == 0 ? 1 : block_no_, kind, offending, message);
    }

    const std::regex& compile_regex(const std::string& pattern) {
        auto it = regex_cache_.find(pattern);
        if (it != regex_cache_.end()) return it->second;
        try {
            return regex_cache_.emplace(pattern, std::regex(pattern)).first->second;
        } catch (const std::regex_error& e) {
            err(ExecError::Kind::RegexError, pattern,
                std::string("invalid regex \"") + pattern + "\": " + e.what());
        }
    }

    NodeSet root_set(const Chain& c) {
        switch (c.root) {
            case Chain::Root::Cpg: return all_;
            case Chain::Root::CpgCall: return by_kind_[NodeKind::Call];
            case Chain::Root::CpgMethod: return by_kind_[NodeKind::Method];
            case Chain::Root::CpgIdentifier: return by_kind_[NodeKind::Identifier];
            case Chain::Root::CpgLiteral: return by_kind_[NodeKind::Literal];
            case Chain::Root::Binding: return completed_.at(c.binding);
        }
        return {};
    }

    void record(const std::string& owner, const std::string& step_text, const NodeSet& current) {
        if (!trace_) return;
        BlockState bs;
        bs.index = block_no_;
        bs.owner = owner;
        bs.step_text = step_text;
        bs.scope = completed_;
        bs.scope[owner] = current;
        trace_->states.push_back(std::move(bs));
    }

    NodeSet eval_top_chain(const Chain& c, const std::string& owner) {
        ++block_no_;
        NodeSet cur = root_set(c);
        record(owner, c.root == Chain::Root::Binding ? c.binding : root_text(c.root), cur);
        for (const StepCall& s : c.steps) {
            ++block_no_;
            cur = apply_step(cur, s);
            record(owner, "." + to_text(s), cur);
        }
        return cur;
    }

    // Sub-traversals (arguments, predicates) evaluate atomically within the
    // enclosing block; they contribute no blocks of their own.
    NodeSet eval_sub_chain(const Chain& c) {
        NodeSet cur = root_set(c);
        for (const StepCall& s : c.steps) cur = apply_step(cur, s);
        return cur;
    }

    void check_signature(const StepRegistryEntry& entry, const StepCall& s) {
        int n = static_cast<int>(s.args.size());
        if (n < entry.required_args() || n > static_cast<int>(entry.params.size()))
            err(ExecError::Kind::ArityMismatch, s.name,
                s.name + " expects " + std::to_string(entry.required_args()) +
                    (entry.params.size() != static_cast<std::size_t>(entry.required_args())
                         ? ".." + std::to_string(entry.params.size())
                         : "") +
                    " argument(s), got " + std::to_string(n));
        for (int i = 0; i < n; ++i) {
            const StepArg& a = s.args[i];
            switch (entry.params[i]) {
                case ParamSig::String:
                case ParamSig::Regex:
                    if (a.kind != StepArg::Kind::String && a.kind != StepArg::Kind::OperatorRef)
                        err(ExecError::Kind::TypeMismatch, s.name,
                            s.name + ": argument " + std::to_string(i + 1) + " must be a string");
                    break;
                case ParamSig::Integer:
                    if (a.kind != StepArg::Kind::Integer)
                        err(ExecError::Kind::TypeMismatch, s.name,
                            s.name + ": argument " + std::to_string(i + 1) + " must be an integer");
                    break;
                case ParamSig::Predicate:
                    if (a.kind != StepArg::Kind::Predicate)
                        err(ExecError::Kind::TypeMismatch, s.name,
                            s.name + ": argument " + std::to_string(i + 1) + " must be a predicate");
                    break;
                case ParamSig::Traversal:
                    if (a.kind != StepArg::Kind::Traversal)
                        err(ExecError::Kind::TypeMismatch, s.name,
                            s.name + ": argument " + std::to_string(i + 1) + " must be a traversal");
                    break;
                case ParamSig::None:
                    break;
            }
        }
    }

    // Resolves a string-ish argument; Operators constants go through the
    // canonical table.
    std::string string_arg(const StepArg& a) {
        if (a.kind == StepArg::Kind::OperatorRef) {
            auto it = operator_constants().find(a.str);
            if (it == operator_constants().end())
                err(ExecError::Kind::UnknownOperatorName, a.str,
                    "unknown operator constant Operators." + a.str);
            return it->second;
        }
        return a.str;
    }

    NodeSet apply_step(const NodeSet& in, const StepCall& s) {
        const StepRegistryEntry* entry = find_step(s.name);
        if (!entry)
            err(ExecError::Kind::UnknownStep, s.name, "unknown step '" + s.name + "'");
        if (entry->returns != "node-set")
            err(ExecError::Kind::TypeMismatch, s.name,
                "'" + s.name + "' cannot be chained as a step");
        check_signature(*entry, s);

        const std::string& n = s.name;
        if (n == "name" || n == "nameNot") {
            const std::regex& re = compile_regex(string_arg(s.args[0]));
            bool keep_match = n == "name";
            return filter(in, [&](const Node& node) {
                return std::regex_match(node.name, re) == keep_match;
            });
        }
        if (n == "nameExact") {
            std::string want = string_arg(s.args[0]);
            return filter(in, [&](const Node& node) { return node.name == want; });
        }
        if (n == "code") {
            const std::regex& re = compile_regex(string_arg(s.args[0]));
            return filter(in, [&](const Node& node) { return std::regex_match(node.code, re); });
        }
        if (n == "codeExact") {
            std::string want = string_arg(s.args[0]);
            return filter(in, [&](const Node& node) { return node.code == want; });
        }
        if (n == "lineNumber") {
            int want = static_cast<int>(s.args[0].integer);
            return filter(in, [&](const Node& node) { return node.line == want; });
        }
        if (n == "label") {
            const std::regex& re = compile_regex(string_arg(s.args[0]));
            return filter(in, [&](const Node& node) {
                return std::regex_match(std::string(to_string(node.kind)), re);
            });
        }
        if (n == "isCall") return filter(in, [](const Node& x) { return x.kind == NodeKind::Call; });
        if (n == "isLiteral")
            return filter(in, [](const Node& x) { return x.kind == NodeKind::Literal; });
        if (n == "isIdentifier")
            return filter(in, [](const Node& x) { return x.kind == NodeKind::Identifier; });
        if (n == "isMethod")
            return filter(in, [](const Node& x) { return x.kind == NodeKind::Method; });
        if (n == "arrayAccess") {
            return filter(in, [](const Node& x) {
                return x.kind == NodeKind::Call && x.name == operator_name("indexAccess");
            });
        }
        if (n == "where" || n == "filter") {
            return filter_pred(in, *s.args[0].predicate, true);
        }
        if (n == "whereNot") {
            return filter_pred(in, *s.args[0].predicate, false);
        }
        if (n == "argument") {
            NodeSet out;
            if (s.args.empty()) {
                for (NodeId id : in) {
                    auto it = labeled_.find(id);
                    if (it == labeled_.end()) continue;
                    for (const auto& [label, child] : it->second) out.push_back(child);
                }
            } else {
                int want = static_cast<int>(s.args[0].integer);
                for (NodeId id : in) {
                    auto it = labeled_.find(id);
                    if (it == labeled_.end()) continue;
                    for (const auto& [label, child] : it->second)
                        if (label == want) out.push_back(child);
                }
            }
            sort_unique(out);
            return out;
        }
        if (n == "array" || n == "index") {
            int want = n == "array" ? 1 : 2;
            NodeSet out;
            for (NodeId id : in) {
                const Node& node = g_.node(id);
                if (node.kind != NodeKind::Call || node.name != operator_name("indexAccess"))
                    continue;
                auto it = labeled_.find(id);
                if (it == labeled_.end()) continue;
                for (const auto& [label, child] : it->second)
                    if (label == want) out.push_back(child);
            }
            sort_unique(out);
            return out;
        }
        if (n == "astChildren") {
            NodeSet out;
            for (NodeId id : in) {
                auto it = children_.find(id);
                if (it == children_.end()) continue;
                out.insert(out.end(), it->second.begin(), it->second.end());
            }
            sort_unique(out);
            return out;
        }
        if (n == "inAst") {
            NodeSet out;
            for (NodeId id : in) {
                NodeId cur = id;
                while (true) {
                    auto it = parent_.find(cur);
                    if (it == parent_.end()) break;
                    cur = it->second;
                    out.push_back(cur);
                }
            }
            sort_unique(out);
            return out;
        }
        if (n == "method") {
            NodeSet out;
            for (NodeId id : in) {
                NodeId cur = id;
                while (g_.node(cur).kind != NodeKind::Method) {
                    auto it = parent_.find(cur);
                    if (it == parent_.end()) break;
                    cur = it->second;
                }
                if (g_.node(cur).kind == NodeKind::Method) out.push_back(cur);
            }
            sort_unique(out);
            return out;
        }
        if (n == "reachableBy") {
            NodeSet sources = eval_sub_chain(*s.args[0].traversal);
            return reachable_from(sources, in);
        }
        if (n == "dump" || n == "size") return in;  // debug aids, identity

        err(ExecError::Kind::UnknownStep, s.name, "unhandled step '" + s.name + "'");
    }

    template <typename Fn>
    NodeSet filter(const NodeSet& in, Fn keep) {
        NodeSet out;
        for (NodeId id : in)
            if (keep(g_.node(id))) out.push_back(id);
        return out;
    }

    NodeSet filter_pred(const NodeSet& in, const Predicate& p, bool keep_when_true) {
        NodeSet out;
        for (NodeId id : in)
            if (eval_predicate(p, id) == keep_when_true) out.push_back(id);
        return out;
    }

    bool eval_predicate(const Predicate& p, NodeId node) {
        switch (p.kind) {
            case Predicate::Kind::Chain: {
                NodeSet cur{node};
                for (const StepCall& s : p.steps) {
                    cur = apply_step(cur, s);
                    if (cur.empty()) break;
                }
                return !cur.empty();
            }
            case Predicate::Kind::Not: return !eval_predicate(*p.lhs, node);
            case Predicate::Kind::And:
                return eval_predicate(*p.lhs, node) && eval_predicate(*p.rhs, node);
            case Predicate::Kind::Or:
                return eval_predicate(*p.lhs, node) || eval_predicate(*p.rhs, node);
            case Predicate::Kind::Placeholder:
                err(ExecError::Kind::TypeMismatch, "_", "placeholder predicate outside a template");
        }
        return false;
    }

    // Forward closure over data-flow edges; zero-length paths count, so
    // sources inside `targets` always survive.
    NodeSet reachable_from(const NodeSet& sources, const NodeSet& targets) {
        std::set<NodeId> visited(sources.begin(), sources.end());
        std::vector<NodeId> work(sources.begin(), sources.end());
        while (!work.empty()) {
            NodeId cur = work.back();
            work.pop_back();
            auto it = dflow_.find(cur);
            if (it == dflow_.end()) continue;
            for (NodeId next : it->second)
                if (visited.insert(next).second) work.push_back(next);
        }
        NodeSet out;
        for (NodeId t : targets)
            if (visited.count(t)) out.push_back(t);
        return out;
    }
};

}  // namespace detail

// Evaluates blocks in order; when instrument is set the result carries the
// per-block program states. Instrumentation never changes the result.
inline ExecResult execute(const QueryAst& q, const CodePropertyGraph& g, bool instrument = false) {
    detail::Interpreter interp(g);
    return interp.execute(q, instrument);
}

}  // namespace queryforge::dsl
