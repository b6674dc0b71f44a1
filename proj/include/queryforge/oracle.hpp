#pragma once

#include <deque>
#include <map>
#include <set>
#include <vector>

#include "queryforge/cpg.hpp"

namespace queryforge {

// Brute-force data-flow reachability, the reference the interpreter's
// reachableBy step is tested against. Plain breadth-first transitive
// closure over {REACHING_DEF, ARG_TO_PARAM, RETURN_TO_CALL}, no pruning.
// Zero-length paths count: a node always reaches itself.
inline std::set<NodeId> dataflow_reach_oracle(const CodePropertyGraph& g,
                                              const std::set<NodeId>& sources,
                                              const std::set<NodeId>& targets) {
    for (NodeId id : sources)
        if (!g.has_node(id)) throw InvalidNodeId(id);
    for (NodeId id : targets)
        if (!g.has_node(id)) throw InvalidNodeId(id);

    std::multimap<NodeId, NodeId> succ;
    for (const Edge& e : g.edges) {
        if (e.kind == EdgeKind::ReachingDef || e.kind == EdgeKind::ArgToParam ||
            e.kind == EdgeKind::ReturnToCall) {
            succ.emplace(e.src, e.dst);
        }
    }

    std::set<NodeId> visited(sources.begin(), sources.end());
    std::deque<NodeId> queue(sources.begin(), sources.end());
    while (!queue.empty()) {
        NodeId cur = queue.front();
        queue.pop_front();
        auto [lo, hi] = succ.equal_range(cur);
        for (auto it = lo; it != hi; ++it) {
            if (visited.insert(it->second).second) queue.push_back(it->second);
        }
    }

    std::set<NodeId> out;
    for (NodeId t : targets)
        if (visited.count(t)) out.insert(t);
    return out;
}

}  // namespace queryforge
