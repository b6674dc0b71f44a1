#pragma once

#include <deque>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "queryforge/cpg.hpp"
#include "queryforge/dataset.hpp"

namespace queryforge::minilang {

class NoNodeAtLabel : public Error {
public:
    using Error::Error;
};

// (file, line) pairs of the statement-level backward slice from the
// example's sink lines: the sink statements, every statement with a
// data-flow path into them, and the enclosing function signatures.
inline std::set<std::pair<std::string, int>> slice_lines(const CodePropertyGraph& g,
                                                         const VulnExample& ex) {
    std::set<NodeId> sinks;
    for (const auto& [id, n] : g.nodes) {
        if (n.file == ex.sink_file && n.line >= ex.sink_start && n.line <= ex.sink_end)
            sinks.insert(id);
    }
    if (sinks.empty())
        throw NoNodeAtLabel("no node at " + ex.sink_file + ":" + std::to_string(ex.sink_start) +
                            "-" + std::to_string(ex.sink_end));

    std::multimap<NodeId, NodeId> pred;
    std::map<NodeId, NodeId> ast_parent;
    for (const Edge& e : g.edges) {
        if (e.kind == EdgeKind::ReachingDef || e.kind == EdgeKind::ArgToParam ||
            e.kind == EdgeKind::ReturnToCall)
            pred.emplace(e.dst, e.src);
        if (e.kind == EdgeKind::Ast) ast_parent[e.dst] = e.src;
    }

    std::set<NodeId> reached = sinks;
    std::deque<NodeId> queue(sinks.begin(), sinks.end());
    while (!queue.empty()) {
        NodeId cur = queue.front();
        queue.pop_front();
        auto [lo, hi] = pred.equal_range(cur);
        for (auto it = lo; it != hi; ++it)
            if (reached.insert(it->second).second) queue.push_back(it->second);
    }

    std::set<std::pair<std::string, int>> lines;
    for (NodeId id : reached) {
        const Node& n = g.node(id);
        lines.emplace(n.file, n.line);
        // Enclosing function signature.
        NodeId cur = id;
        while (true) {
            auto it = ast_parent.find(cur);
            if (it == ast_parent.end()) break;
            cur = it->second;
        }
        const Node& root = g.node(cur);
        if (root.kind == NodeKind::Method && root.name != "<global>")
            lines.emplace(root.file, root.line);
    }
    return lines;
}

// Source lines of the backward slice, ordered by (file, line) and annotated
// with the original line numbers.
inline std::string slice_example(const CodePropertyGraph& g, const VulnExample& ex) {
    std::set<std::pair<std::string, int>> lines = slice_lines(g, ex);

    std::map<std::string, std::vector<std::string>> file_lines;
    for (const auto& [file, text] : g.source_files) {
        std::vector<std::string>& v = file_lines[file];
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) v.push_back(line);
    }

    std::ostringstream out;
    for (const auto& [file, line] : lines) {
        out << file << ":" << line << ": ";
        auto it = file_lines.find(file);
        if (it != file_lines.end() && line >= 1 && line <= static_cast<int>(it->second.size()))
            out << it->second[line - 1];
        out << "\n";
    }
    return out.str();
}

}  // namespace queryforge::minilang
