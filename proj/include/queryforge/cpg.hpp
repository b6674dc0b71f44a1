#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "queryforge/errors.hpp"

namespace queryforge {

using NodeId = std::int64_t;

enum class NodeKind { Method, Param, Block, Call, Identifier, Literal, Return };

enum class EdgeKind { Ast, Cfg, ReachingDef, CallEdge, ArgToParam, ReturnToCall };

inline const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Method: return "METHOD";
        case NodeKind::Param: return "PARAM";
        case NodeKind::Block: return "BLOCK";
        case NodeKind::Call: return "CALL";
        case NodeKind::Identifier: return "IDENTIFIER";
        case NodeKind::Literal: return "LITERAL";
        case NodeKind::Return: return "RETURN";
    }
    return "?";
}

inline const char* to_string(EdgeKind k) {
    switch (k) {
        case EdgeKind::Ast: return "AST";
        case EdgeKind::Cfg: return "CFG";
        case EdgeKind::ReachingDef: return "REACHING_DEF";
        case EdgeKind::CallEdge: return "CALL_EDGE";
        case EdgeKind::ArgToParam: return "ARG_TO_PARAM";
        case EdgeKind::ReturnToCall: return "RETURN_TO_CALL";
    }
    return "?";
}

inline std::optional<NodeKind> parse_node_kind(const std::string& s) {
    if (s == "METHOD") return NodeKind::Method;
    if (s == "PARAM") return NodeKind::Param;
    if (s == "BLOCK") return NodeKind::Block;
    if (s == "CALL") return NodeKind::Call;
    if (s == "IDENTIFIER") return NodeKind::Identifier;
    if (s == "LITERAL") return NodeKind::Literal;
    if (s == "RETURN") return NodeKind::Return;
    return std::nullopt;
}

inline std::optional<EdgeKind> parse_edge_kind(const std::string& s) {
    if (s == "AST") return EdgeKind::Ast;
    if (s == "CFG") return EdgeKind::Cfg;
    if (s == "REACHING_DEF") return EdgeKind::ReachingDef;
    if (s == "CALL_EDGE") return EdgeKind::CallEdge;
    if (s == "ARG_TO_PARAM") return EdgeKind::ArgToParam;
    if (s == "RETURN_TO_CALL") return EdgeKind::ReturnToCall;
    return std::nullopt;
}

// Canonical name prefix for operator calls ("<operator>.assignment" etc.).
inline constexpr const char* kOperatorPrefix = "<operator>.";

inline std::string operator_name(const std::string& short_name) {
    return std::string(kOperatorPrefix) + short_name;
}

struct Node {
    NodeId id = 0;
    NodeKind kind = NodeKind::Call;
    std::string name;   // CALL: callee or operator name; IDENTIFIER: variable name
    std::string code;   // source excerpt; LITERAL: the lexeme
    int line = 1;
    int column = 0;
    std::string file;

    bool operator==(const Node&) const = default;
};

struct Edge {
    NodeId src = 0;
    NodeId dst = 0;
    EdgeKind kind = EdgeKind::Ast;
    std::optional<int> label;  // AST edges only: 1-based argument index

    bool operator==(const Edge&) const = default;
};

// Immutable after construction; safe to share across concurrent readers.
struct CodePropertyGraph {
    std::map<NodeId, Node> nodes;  // keyed by id, sorted
    std::vector<Edge> edges;
    std::vector<NodeId> roots;  // METHOD node ids
    std::map<std::string, std::string> source_files;  // file -> text

    bool has_node(NodeId id) const { return nodes.count(id) != 0; }

    const Node& node(NodeId id) const {
        auto it = nodes.find(id);
        if (it == nodes.end()) throw InvalidNodeId(id);
        return it->second;
    }
};

// Structural equality covers nodes, edges and roots. Source text is carried
// only for slicing and is not part of the serialized structure.
inline bool structurally_equal(const CodePropertyGraph& a, const CodePropertyGraph& b) {
    if (a.nodes != b.nodes) return false;
    auto edge_key = [](const Edge& e) {
        return std::tuple(e.src, e.dst, static_cast<int>(e.kind), e.label.value_or(-1));
    };
    auto sorted = [&](const std::vector<Edge>& es) {
        std::vector<std::tuple<NodeId, NodeId, int, int>> v;
        for (const Edge& e : es) v.push_back(edge_key(e));
        std::sort(v.begin(), v.end());
        return v;
    };
    if (sorted(a.edges) != sorted(b.edges)) return false;
    std::set<NodeId> ra(a.roots.begin(), a.roots.end()), rb(b.roots.begin(), b.roots.end());
    return ra == rb;
}

// Checks every type invariant; throws InvariantError naming the violation.
inline void validate_graph(const CodePropertyGraph& g) {
    for (const auto& [id, n] : g.nodes) {
        if (n.id != id) throw InvariantError("node map key does not match node id " + std::to_string(id));
        if (n.id < 0) throw InvariantError("negative node id " + std::to_string(n.id));
        if (n.line < 1) throw InvariantError("node " + std::to_string(id) + " line < 1");
        if (n.column < 0) throw InvariantError("node " + std::to_string(id) + " column < 0");
        if (n.kind == NodeKind::Call && n.name.empty())
            throw InvariantError("CALL node " + std::to_string(id) + " has empty name");
    }
    std::map<NodeId, int> ast_parents;
    std::map<NodeId, std::set<int>> call_labels;
    for (const Edge& e : g.edges) {
        if (!g.has_node(e.src)) throw InvariantError("edge src " + std::to_string(e.src));
        if (!g.has_node(e.dst)) throw InvariantError("edge dst " + std::to_string(e.dst));
        if (e.kind == EdgeKind::Ast) {
            if (++ast_parents[e.dst] > 1)
                throw InvariantError("node " + std::to_string(e.dst) + " has multiple AST parents");
            if (e.label && g.node(e.src).kind == NodeKind::Call) {
                if (!call_labels[e.src].insert(*e.label).second)
                    throw InvariantError("duplicate AST label on call " + std::to_string(e.src));
            }
        }
    }
    // Labels out of a CALL form a contiguous 1..k sequence.
    for (const auto& [call, labels] : call_labels) {
        int expect = 1;
        for (int l : labels) {
            if (l != expect++)
                throw InvariantError("call " + std::to_string(call) + " has non-contiguous argument labels");
        }
    }
    for (NodeId r : g.roots) {
        if (!g.has_node(r)) throw InvariantError("root " + std::to_string(r) + " missing");
        if (g.node(r).kind != NodeKind::Method)
            throw InvariantError("root " + std::to_string(r) + " is not a METHOD");
    }
    // Every non-root node is reachable from some root via AST edges.
    std::set<NodeId> reached(g.roots.begin(), g.roots.end());
    std::vector<NodeId> work(g.roots.begin(), g.roots.end());
    std::multimap<NodeId, NodeId> ast_succ;
    for (const Edge& e : g.edges)
        if (e.kind == EdgeKind::Ast) ast_succ.emplace(e.src, e.dst);
    while (!work.empty()) {
        NodeId cur = work.back();
        work.pop_back();
        auto [lo, hi] = ast_succ.equal_range(cur);
        for (auto it = lo; it != hi; ++it) {
            if (reached.insert(it->second).second) work.push_back(it->second);
        }
    }
    for (const auto& [id, n] : g.nodes) {
        if (!reached.count(id))
            throw InvariantError("node " + std::to_string(id) + " unreachable from any METHOD root");
    }
}

}  // namespace queryforge
