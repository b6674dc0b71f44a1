#pragma once

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "queryforge/base64.hpp"
#include "queryforge/cpg.hpp"

namespace queryforge {

namespace detail {

inline std::string require_token(const std::string& s, const char* what) {
    if (s.empty()) throw InvariantError(std::string(what) + " is empty, not serializable");
    for (char c : s)
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r')
            throw InvariantError(std::string(what) + " contains whitespace, not serializable");
    return s;
}

// Empty code excerpts serialize as "-" so every node line has exactly 8 tokens.
inline std::string encode_code(const std::string& code) {
    return code.empty() ? "-" : base64_encode(code);
}

inline std::string decode_code(const std::string& tok) {
    return tok == "-" ? "" : base64_decode(tok);
}

}  // namespace detail

// Canonical text serialization: header line, node lines sorted by id,
// edge lines sorted lexicographically. Byte-deterministic for a given graph.
inline std::string serialize_cpg(const CodePropertyGraph& g) {
    std::ostringstream out;
    out << "CPG v1\n";
    for (const auto& [id, n] : g.nodes) {
        out << "N " << id << ' ' << to_string(n.kind) << ' '
            << detail::require_token(n.name, "node name") << ' ' << n.line << ' ' << n.column
            << ' ' << detail::require_token(n.file, "node file") << ' '
            << detail::encode_code(n.code) << '\n';
    }
    std::vector<std::string> edge_lines;
    edge_lines.reserve(g.edges.size());
    for (const Edge& e : g.edges) {
        std::ostringstream line;
        line << "E " << e.src << ' ' << e.dst << ' ' << to_string(e.kind);
        if (e.label) line << ' ' << *e.label;
        edge_lines.push_back(line.str());
    }
    std::sort(edge_lines.begin(), edge_lines.end());
    for (const std::string& line : edge_lines) out << line << '\n';
    return out.str();
}

inline void export_cpg(const CodePropertyGraph& g, const std::string& path) {
    std::string text = serialize_cpg(g);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

inline CodePropertyGraph parse_cpg(const std::string& text) {
    CodePropertyGraph g;
    if (text.empty()) return g;  // empty file is the empty graph

    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) return g;
    ++lineno;
    if (line != "CPG v1") throw FormatError("expected header 'CPG v1'", lineno);

    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::vector<std::string> tok;
        std::string t;
        while (ls >> t) tok.push_back(t);
        if (tok[0] == "N") {
            if (tok.size() != 8) throw FormatError("node record needs 8 fields", lineno);
            Node n;
            try {
                n.id = std::stoll(tok[1]);
                n.line = std::stoi(tok[4]);
                n.column = std::stoi(tok[5]);
            } catch (const std::exception&) {
                throw FormatError("bad integer in node record", lineno);
            }
            auto kind = parse_node_kind(tok[2]);
            if (!kind) throw FormatError("unknown node kind '" + tok[2] + "'", lineno);
            n.kind = *kind;
            n.name = tok[3];
            n.file = tok[6];
            try {
                n.code = detail::decode_code(tok[7]);
            } catch (const Error&) {
                throw FormatError("bad base64 code field", lineno);
            }
            if (g.nodes.count(n.id)) throw FormatError("duplicate node id " + tok[1], lineno);
            g.nodes.emplace(n.id, std::move(n));
        } else if (tok[0] == "E") {
            if (tok.size() != 4 && tok.size() != 5) throw FormatError("edge record needs 4 or 5 fields", lineno);
            Edge e;
            try {
                e.src = std::stoll(tok[1]);
                e.dst = std::stoll(tok[2]);
                if (tok.size() == 5) e.label = std::stoi(tok[4]);
            } catch (const std::exception&) {
                throw FormatError("bad integer in edge record", lineno);
            }
            auto kind = parse_edge_kind(tok[3]);
            if (!kind) throw FormatError("unknown edge kind '" + tok[3] + "'", lineno);
            e.kind = *kind;
            g.edges.push_back(e);
        } else {
            throw FormatError("unknown record type '" + tok[0] + "'", lineno);
        }
    }

    // Roots are not serialized: METHOD nodes without an AST parent.
    std::set<NodeId> has_parent;
    for (const Edge& e : g.edges)
        if (e.kind == EdgeKind::Ast) has_parent.insert(e.dst);
    for (const auto& [id, n] : g.nodes)
        if (n.kind == NodeKind::Method && !has_parent.count(id)) g.roots.push_back(id);

    validate_graph(g);  // validation failures are errors, not warnings
    return g;
}

inline CodePropertyGraph import_cpg(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_cpg(buf.str());
}

}  // namespace queryforge
