#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "queryforge/cpg.hpp"
#include "queryforge/minilang.hpp"

namespace queryforge::minilang {

// Fixed builtin table. Exported into the DSL spec so generated queries can
// reference the names.
inline const std::set<std::string>& builtin_sources() {
    static const std::set<std::string> s = {"input"};
    return s;
}
inline const std::set<std::string>& builtin_sinks() {
    static const std::set<std::string> s = {"exec", "sql", "evalCode"};
    return s;
}
inline const std::set<std::string>& builtin_sanitizers() {
    static const std::set<std::string> s = {"sanitize"};
    return s;
}

namespace detail {

inline std::string expr_code(const Expr& e) {
    switch (e.kind) {
        case ExprKind::NumberLit:
        case ExprKind::StringLit:
        case ExprKind::ObjectLit:
        case ExprKind::Ident:
            return e.text;
        case ExprKind::Call: {
            std::string s = e.text + "(";
            for (size_t i = 0; i < e.children.size(); ++i) {
                if (i) s += ", ";
                s += expr_code(*e.children[i]);
            }
            return s + ")";
        }
        case ExprKind::IndexAccess:
            return expr_code(*e.children[0]) + "[" + expr_code(*e.children[1]) + "]";
        case ExprKind::FieldAccess:
            return expr_code(*e.children[0]) + "." + e.text;
        case ExprKind::Binary:
            return expr_code(*e.children[0]) + " " + e.text + " " + expr_code(*e.children[1]);
    }
    return "";
}

// One definition reaching a program point: the variable plus the node the
// defined value originates from (an RHS root or a PARAM).
struct Def {
    std::string var;
    NodeId site;
    auto operator<=>(const Def&) const = default;
};

struct StmtFlow {
    NodeId anchor = -1;                 // CFG node of this statement
    std::vector<NodeId> cfg_succ;
    std::set<Def> gen;
    std::set<std::string> strong_kill;
    std::vector<std::pair<std::string, NodeId>> uses;  // identifier reads
    std::vector<size_t> branch_exits;   // If only: exits of both branches
};

class Builder {
public:
    CodePropertyGraph build(const std::vector<const MiniLangAst*>& files) {
        for (const MiniLangAst* ast : files) {
            for (const FunctionDecl& fn : ast->functions) {
                NodeId m = new_node(NodeKind::Method, fn.name, function_signature(fn), fn.line,
                                    fn.column, ast->file);
                g_.roots.push_back(m);
                methods_by_name_[fn.name] = m;
            }
        }
        // Bodies come second so call wiring can resolve forward references
        // between functions and files.
        size_t root_ix = 0;
        for (const MiniLangAst* ast : files) {
            for (const FunctionDecl& fn : ast->functions)
                build_function(g_.roots[root_ix++], fn.params, fn.body, ast->file);
            if (!ast->top_level.empty()) {
                NodeId m = new_node(NodeKind::Method, "<global>", "<global>", 1, 0, ast->file);
                g_.roots.push_back(m);
                build_function(m, {}, ast->top_level, ast->file);
            }
            g_.source_files[ast->file] = ast->source;
        }
        resolve_pending_calls();
        return std::move(g_);
    }

    const std::map<const Expr*, NodeId>& expr_nodes() const { return expr_nodes_; }

private:
    CodePropertyGraph g_;
    NodeId next_id_ = 0;
    std::map<std::string, NodeId> methods_by_name_;
    std::map<const Expr*, NodeId> expr_nodes_;
    struct PendingCall {
        NodeId call;
        std::string callee;
        std::vector<NodeId> args;
    };
    std::vector<PendingCall> pending_calls_;
    std::map<NodeId, std::vector<NodeId>> returns_of_method_;
    std::vector<NodeId> current_returns_;
    std::string file_;

    NodeId new_node(NodeKind kind, std::string name, std::string code, int line, int column,
                    const std::string& file) {
        Node n;
        n.id = next_id_++;
        n.kind = kind;
        n.name = std::move(name);
        n.code = std::move(code);
        n.line = line;
        n.column = column;
        n.file = file;
        NodeId id = n.id;
        g_.nodes.emplace(id, std::move(n));
        return id;
    }

    void add_edge(NodeId src, NodeId dst, EdgeKind kind, std::optional<int> label = std::nullopt) {
        g_.edges.push_back(Edge{src, dst, kind, label});
    }

    static std::string function_signature(const FunctionDecl& fn) {
        std::string s = "function " + fn.name + "(";
        for (size_t i = 0; i < fn.params.size(); ++i) {
            if (i) s += ", ";
            s += fn.params[i];
        }
        return s + ")";
    }

    void build_function(NodeId method, const std::vector<std::string>& params,
                        const std::vector<StmtPtr>& body, const std::string& file) {
        file_ = file;
        current_returns_.clear();
        const Node mnode = g_.node(method);

        std::set<Def> entry_defs;
        int label = 1;
        for (const std::string& p : params) {
            NodeId pn = new_node(NodeKind::Param, p, p, mnode.line, mnode.column, file);
            add_edge(method, pn, EdgeKind::Ast, label++);
            entry_defs.insert(Def{p, pn});
        }
        NodeId block = new_node(NodeKind::Block, "<block>", "{ ... }", mnode.line, mnode.column, file);
        add_edge(method, block, EdgeKind::Ast);

        std::vector<StmtFlow> flows;
        std::vector<size_t> entries;
        build_stmts(body, block, flows, {}, &entries);

        for (size_t e : entries) add_edge(method, flows[e].anchor, EdgeKind::Cfg);
        for (StmtFlow& f : flows) {
            std::sort(f.cfg_succ.begin(), f.cfg_succ.end());
            f.cfg_succ.erase(std::unique(f.cfg_succ.begin(), f.cfg_succ.end()), f.cfg_succ.end());
            for (NodeId succ : f.cfg_succ) add_edge(f.anchor, succ, EdgeKind::Cfg);
        }

        reaching_definitions(flows, entries, entry_defs);
        returns_of_method_[method] = current_returns_;
    }

    // Builds a statement list into parent_block, threading CFG predecessors.
    // Returns the indices whose control flows out of the list; `first` (when
    // given) receives the indices control enters at.
    std::vector<size_t> build_stmts(const std::vector<StmtPtr>& stmts, NodeId parent_block,
                                    std::vector<StmtFlow>& flows, std::vector<size_t> preds,
                                    std::vector<size_t>* first = nullptr) {
        for (const StmtPtr& s : stmts) {
            size_t ix = build_stmt(*s, parent_block, flows);
            if (first) {
                first->push_back(ix);
                first = nullptr;
            }
            for (size_t p : preds) flows[p].cfg_succ.push_back(flows[ix].anchor);
            if (s->kind == StmtKind::Return) {
                preds = {};
            } else if (s->kind == StmtKind::If) {
                preds = flows[ix].branch_exits;
            } else {
                preds = {ix};
            }
        }
        return preds;
    }

    size_t build_stmt(const Stmt& s, NodeId parent_block, std::vector<StmtFlow>& flows) {
        StmtFlow flow;
        switch (s.kind) {
            case StmtKind::Let: {
                NodeId asg = new_node(NodeKind::Call, operator_name("assignment"),
                                      "let " + s.let_name + " = " + expr_code(*s.value), s.line,
                                      s.column, file_);
                add_edge(parent_block, asg, EdgeKind::Ast);
                NodeId lhs = new_node(NodeKind::Identifier, s.let_name, s.let_name, s.line,
                                      s.column, file_);
                add_edge(asg, lhs, EdgeKind::Ast, 1);
                NodeId rhs = build_expr(*s.value, asg, 2, flow);
                flow.anchor = asg;
                flow.gen.insert(Def{s.let_name, rhs});
                flow.strong_kill.insert(s.let_name);
                break;
            }
            case StmtKind::Assign: {
                NodeId asg = new_node(NodeKind::Call, operator_name("assignment"),
                                      expr_code(*s.target) + " = " + expr_code(*s.value), s.line,
                                      s.column, file_);
                add_edge(parent_block, asg, EdgeKind::Ast);
                size_t uses_before = flow.uses.size();
                build_expr(*s.target, asg, 1, flow);
                if (s.target->kind == ExprKind::Ident) {
                    // The lvalue identifier is a definition occurrence, not a read.
                    flow.uses.erase(flow.uses.begin() + uses_before);
                }
                NodeId rhs = build_expr(*s.value, asg, 2, flow);
                flow.anchor = asg;
                if (s.target->kind == ExprKind::Ident) {
                    flow.gen.insert(Def{s.target->text, rhs});
                    flow.strong_kill.insert(s.target->text);
                } else if (const Expr* base = lvalue_base(*s.target)) {
                    // Field-insensitive: a write to obj[k] defines obj, weakly
                    // (prior definitions of obj stay live).
                    flow.gen.insert(Def{base->text, rhs});
                }
                break;
            }
            case StmtKind::If: {
                NodeId blk = new_node(NodeKind::Block, "if", "if (" + expr_code(*s.value) + ")",
                                      s.line, s.column, file_);
                add_edge(parent_block, blk, EdgeKind::Ast);
                build_expr(*s.value, blk, std::nullopt, flow);
                flow.anchor = blk;
                flows.push_back(std::move(flow));
                size_t ix = flows.size() - 1;

                NodeId then_blk = new_node(NodeKind::Block, "<block>", "{ ... }", s.line, s.column, file_);
                add_edge(blk, then_blk, EdgeKind::Ast);
                std::vector<size_t> exits = build_stmts(s.body, then_blk, flows, {ix});
                if (!s.else_body.empty()) {
                    NodeId else_blk =
                        new_node(NodeKind::Block, "<block>", "{ ... }", s.line, s.column, file_);
                    add_edge(blk, else_blk, EdgeKind::Ast);
                    std::vector<size_t> e = build_stmts(s.else_body, else_blk, flows, {ix});
                    exits.insert(exits.end(), e.begin(), e.end());
                } else {
                    exits.push_back(ix);  // condition-false fall-through
                }
                flows[ix].branch_exits = std::move(exits);
                return ix;
            }
            case StmtKind::While: {
                NodeId blk = new_node(NodeKind::Block, "while",
                                      "while (" + expr_code(*s.value) + ")", s.line, s.column, file_);
                add_edge(parent_block, blk, EdgeKind::Ast);
                build_expr(*s.value, blk, std::nullopt, flow);
                flow.anchor = blk;
                flows.push_back(std::move(flow));
                size_t ix = flows.size() - 1;

                NodeId body_blk = new_node(NodeKind::Block, "<block>", "{ ... }", s.line, s.column, file_);
                add_edge(blk, body_blk, EdgeKind::Ast);
                std::vector<size_t> exits = build_stmts(s.body, body_blk, flows, {ix});
                for (size_t e : exits) flows[e].cfg_succ.push_back(flows[ix].anchor);  // back edge
                return ix;
            }
            case StmtKind::Return: {
                std::string code = s.value ? "return " + expr_code(*s.value) : "return";
                NodeId ret = new_node(NodeKind::Return, "return", code, s.line, s.column, file_);
                add_edge(parent_block, ret, EdgeKind::Ast);
                if (s.value) current_returns_.push_back(build_expr(*s.value, ret, std::nullopt, flow));
                flow.anchor = ret;
                break;
            }
            case StmtKind::ExprStmt: {
                flow.anchor = build_expr(*s.value, parent_block, std::nullopt, flow);
                break;
            }
        }
        flows.push_back(std::move(flow));
        return flows.size() - 1;
    }

    static const Expr* lvalue_base(const Expr& e) {
        const Expr* cur = &e;
        while (cur->kind == ExprKind::IndexAccess || cur->kind == ExprKind::FieldAccess)
            cur = cur->children[0].get();
        return cur->kind == ExprKind::Ident ? cur : nullptr;
    }

    NodeId build_expr(const Expr& e, NodeId parent, std::optional<int> label, StmtFlow& flow) {
        NodeId id = -1;
        switch (e.kind) {
            case ExprKind::NumberLit:
            case ExprKind::StringLit:
            case ExprKind::ObjectLit:
                id = new_node(NodeKind::Literal, "<literal>", e.text, e.line, e.column, file_);
                break;
            case ExprKind::Ident:
                id = new_node(NodeKind::Identifier, e.text, e.text, e.line, e.column, file_);
                flow.uses.emplace_back(e.text, id);
                break;
            case ExprKind::Call: {
                id = new_node(NodeKind::Call, e.text, expr_code(e), e.line, e.column, file_);
                std::vector<NodeId> args;
                for (size_t i = 0; i < e.children.size(); ++i)
                    args.push_back(build_expr(*e.children[i], id, static_cast<int>(i + 1), flow));
                bool user_defined = methods_by_name_.count(e.text) != 0;
                bool sanitizer = builtin_sanitizers().count(e.text) != 0;
                if (user_defined) {
                    pending_calls_.push_back(PendingCall{id, e.text, args});
                } else if (!sanitizer) {
                    // Unknown and builtin calls conservatively propagate their
                    // arguments; a sanitizer truncates the chain here.
                    for (NodeId a : args) add_edge(a, id, EdgeKind::ReachingDef);
                }
                break;
            }
            case ExprKind::IndexAccess: {
                id = new_node(NodeKind::Call, operator_name("indexAccess"), expr_code(e), e.line,
                              e.column, file_);
                NodeId recv = build_expr(*e.children[0], id, 1, flow);
                build_expr(*e.children[1], id, 2, flow);
                // The receiver's value flows into the access; the index only selects.
                add_edge(recv, id, EdgeKind::ReachingDef);
                break;
            }
            case ExprKind::FieldAccess: {
                id = new_node(NodeKind::Call, operator_name("fieldAccess"), expr_code(e), e.line,
                              e.column, file_);
                NodeId recv = build_expr(*e.children[0], id, 1, flow);
                NodeId field = new_node(NodeKind::Literal, "<literal>", e.text, e.line, e.column, file_);
                add_edge(id, field, EdgeKind::Ast, 2);
                add_edge(recv, id, EdgeKind::ReachingDef);
                break;
            }
            case ExprKind::Binary: {
                const char* op = e.text == "+" ? "addition" : "equals";
                id = new_node(NodeKind::Call, operator_name(op), expr_code(e), e.line, e.column, file_);
                NodeId lhs = build_expr(*e.children[0], id, 1, flow);
                NodeId rhs = build_expr(*e.children[1], id, 2, flow);
                add_edge(lhs, id, EdgeKind::ReachingDef);
                add_edge(rhs, id, EdgeKind::ReachingDef);
                break;
            }
        }
        if (parent >= 0) add_edge(parent, id, EdgeKind::Ast, label);
        expr_nodes_[&e] = id;
        return id;
    }

    void reaching_definitions(const std::vector<StmtFlow>& flows, const std::vector<size_t>& entries,
                              const std::set<Def>& entry_defs) {
        std::map<NodeId, size_t> by_anchor;
        for (size_t i = 0; i < flows.size(); ++i) by_anchor[flows[i].anchor] = i;
        std::vector<std::vector<size_t>> preds(flows.size());
        for (size_t j = 0; j < flows.size(); ++j)
            for (NodeId succ : flows[j].cfg_succ) preds[by_anchor.at(succ)].push_back(j);

        std::set<size_t> entry_set(entries.begin(), entries.end());
        std::vector<std::set<Def>> in(flows.size()), out(flows.size());
        bool changed = true;
        while (changed) {  // finite lattice, converges
            changed = false;
            for (size_t i = 0; i < flows.size(); ++i) {
                std::set<Def> new_in;
                if (entry_set.count(i)) new_in = entry_defs;
                for (size_t p : preds[i]) new_in.insert(out[p].begin(), out[p].end());
                std::set<Def> new_out;
                for (const Def& d : new_in)
                    if (!flows[i].strong_kill.count(d.var)) new_out.insert(d);
                new_out.insert(flows[i].gen.begin(), flows[i].gen.end());
                if (new_in != in[i] || new_out != out[i]) {
                    in[i] = std::move(new_in);
                    out[i] = std::move(new_out);
                    changed = true;
                }
            }
        }

        // Definition site to use site of the same variable, unkilled on some path.
        for (size_t i = 0; i < flows.size(); ++i)
            for (const auto& [var, use_node] : flows[i].uses)
                for (const Def& d : in[i])
                    if (d.var == var) add_edge(d.site, use_node, EdgeKind::ReachingDef);
    }

    void resolve_pending_calls() {
        for (const PendingCall& pc : pending_calls_) {
            NodeId method = methods_by_name_.at(pc.callee);
            add_edge(pc.call, method, EdgeKind::CallEdge);
            // One level of interprocedural flow, no context sensitivity.
            std::vector<std::pair<int, NodeId>> params;
            for (const Edge& e : g_.edges)
                if (e.kind == EdgeKind::Ast && e.src == method && e.label &&
                    g_.node(e.dst).kind == NodeKind::Param)
                    params.emplace_back(*e.label, e.dst);
            std::sort(params.begin(), params.end());
            for (size_t i = 0; i < pc.args.size() && i < params.size(); ++i)
                add_edge(pc.args[i], params[i].second, EdgeKind::ArgToParam);
            for (NodeId ret : returns_of_method_[method])
                add_edge(ret, pc.call, EdgeKind::ReturnToCall);
        }
    }
};

}  // namespace detail

// Build is total on valid ASTs. The optional expr_map receives the
// one-to-one AST-expression to CPG-node mapping.
inline CodePropertyGraph build_cpg(const std::vector<const MiniLangAst*>& files,
                                   std::map<const Expr*, NodeId>* expr_map = nullptr) {
    detail::Builder b;
    CodePropertyGraph g = b.build(files);
    if (expr_map) *expr_map = b.expr_nodes();
    validate_graph(g);
    return g;
}

inline CodePropertyGraph build_cpg(const MiniLangAst& ast,
                                   std::map<const Expr*, NodeId>* expr_map = nullptr) {
    return build_cpg(std::vector<const MiniLangAst*>{&ast}, expr_map);
}

}  // namespace queryforge::minilang
