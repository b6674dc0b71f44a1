#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "queryforge/cpg_builder.hpp"
#include "queryforge/minilang.hpp"

namespace queryforge::minilang {

// One labeled vulnerability example from a dataset manifest.
struct VulnExample {
    std::string id;
    std::string vuln_type;
    std::string project_dir;
    std::string sink_file;
    int sink_start = 1;
    int sink_end = 1;  // inclusive
    std::string description;
};

struct Dataset {
    std::vector<VulnExample> examples;
};

inline Dataset parse_dataset(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    Dataset ds;
    if (!j.is_object() || !j.contains("examples") || !j["examples"].is_array())
        throw ConfigError("dataset manifest: expected object with 'examples' array");
    for (const auto& e : j["examples"]) {
        VulnExample ex;
        try {
            ex.id = e.at("id").get<std::string>();
            ex.vuln_type = e.at("vuln_type").get<std::string>();
            ex.project_dir = (base_dir / e.at("project_dir").get<std::string>()).lexically_normal().string();
            ex.sink_file = e.at("sink_file").get<std::string>();
            const auto& lines = e.at("sink_lines");
            if (!lines.is_array() || lines.size() != 2)
                throw ConfigError("dataset manifest: sink_lines must be [start, end]");
            ex.sink_start = lines[0].get<int>();
            ex.sink_end = lines[1].get<int>();
            ex.description = e.value("description", "");
        } catch (const nlohmann::json::exception& err) {
            throw ConfigError(std::string("dataset manifest: ") + err.what());
        }
        if (ex.sink_start < 1 || ex.sink_end < ex.sink_start)
            throw ConfigError("dataset manifest: empty sink_lines range for example " + ex.id);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

// project_dir entries resolve relative to the manifest's directory.
inline Dataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw IoError("cannot open dataset manifest: " + manifest_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& err) {
        throw ConfigError(std::string("dataset manifest: ") + err.what());
    }
    return parse_dataset(j, std::filesystem::path(manifest_path).parent_path());
}

inline std::vector<MiniLangAst> load_project_asts(const std::string& project_dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(project_dir)) throw IoError("not a directory: " + project_dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(project_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".mini")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("no source files (*.mini) in " + project_dir);
    std::vector<MiniLangAst> asts;
    for (const fs::path& p : files) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        asts.push_back(parse_program(buf.str(), p.filename().string()));
    }
    return asts;
}

inline CodePropertyGraph build_project_cpg(const std::string& project_dir) {
    std::vector<MiniLangAst> asts = load_project_asts(project_dir);
    std::vector<const MiniLangAst*> ptrs;
    for (const MiniLangAst& a : asts) ptrs.push_back(&a);
    return build_cpg(ptrs);
}

}  // namespace queryforge::minilang
