#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "queryforge/dataset.hpp"

namespace queryforge {

// One report row for the evaluation harness.
struct Finding {
    std::string query_id;
    NodeId node = -1;
    std::string file;
    int line = 1;
    std::string code;
    std::string vuln_type;
};

struct MetricsRow {
    std::string vuln_type;
    int tp = 0;
    int fp = 0;
    int fn = 0;
    int tp_total = 0;
    double recall = 0.0;     // TP / TP_total, 0 when TP_total = 0
    double precision = 0.0;  // TP / (TP + FP), 0 when both 0
    double f1 = 0.0;         // 2PR / (P + R), 0 when P + R = 0
};

inline void finish_row(MetricsRow& r) {
    r.recall = r.tp_total > 0 ? static_cast<double>(r.tp) / r.tp_total : 0.0;
    r.precision = (r.tp + r.fp) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fp) : 0.0;
    r.f1 = (r.precision + r.recall) > 0
               ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
               : 0.0;
}

// A finding is a true positive iff it lies within some labeled sink range of
// its vulnerability type; multiple findings on one label count once;
// unmatched labels are false negatives, unmatched findings false positives.
// Rows per type, then a micro-aggregated overall row (sums before ratios)
// and a macro-averaged one (mean of per-type ratios).
inline std::vector<MetricsRow> compute_metrics(const std::vector<Finding>& findings,
                                               const minilang::Dataset& dataset) {
    std::set<std::string> types;
    for (const auto& ex : dataset.examples) types.insert(ex.vuln_type);
    for (const auto& f : findings) types.insert(f.vuln_type);

    std::vector<MetricsRow> rows;
    MetricsRow micro;
    micro.vuln_type = "overall";
    double macro_r = 0, macro_p = 0, macro_f = 0;

    for (const std::string& type : types) {
        MetricsRow row;
        row.vuln_type = type;
        std::vector<const minilang::VulnExample*> labels;
        for (const auto& ex : dataset.examples)
            if (ex.vuln_type == type) labels.push_back(&ex);
        row.tp_total = static_cast<int>(labels.size());

        std::set<const minilang::VulnExample*> hit;
        for (const Finding& f : findings) {
            if (f.vuln_type != type) continue;
            const minilang::VulnExample* match = nullptr;
            for (const minilang::VulnExample* ex : labels) {
                if (f.file == ex->sink_file && f.line >= ex->sink_start && f.line <= ex->sink_end) {
                    match = ex;
                    break;
                }
            }
            if (match)
                hit.insert(match);  // repeated findings on one label count once
            else
                row.fp += 1;
        }
        row.tp = static_cast<int>(hit.size());
        row.fn = row.tp_total - row.tp;
        finish_row(row);
        micro.tp += row.tp;
        micro.fp += row.fp;
        micro.fn += row.fn;
        micro.tp_total += row.tp_total;
        macro_r += row.recall;
        macro_p += row.precision;
        macro_f += row.f1;
        rows.push_back(row);
    }

    finish_row(micro);
    rows.push_back(micro);
    MetricsRow macro;
    macro.vuln_type = "overall-macro";
    macro.tp = micro.tp;
    macro.fp = micro.fp;
    macro.fn = micro.fn;
    macro.tp_total = micro.tp_total;
    size_t n = types.size();
    macro.recall = n ? macro_r / n : 0.0;
    macro.precision = n ? macro_p / n : 0.0;
    macro.f1 = n ? macro_f / n : 0.0;
    rows.push_back(macro);
    return rows;
}

inline nlohmann::json to_json(const Finding& f) {
    return {{"query", f.query_id}, {"file", f.file},           {"line", f.line},
            {"code", f.code},      {"vuln_type", f.vuln_type}};
}

inline nlohmann::json findings_to_json(const std::vector<Finding>& findings) {
    nlohmann::json j = nlohmann::json::array();
    for (const Finding& f : findings) j.push_back(to_json(f));
    return j;
}

inline std::vector<Finding> findings_from_json(const nlohmann::json& j) {
    std::vector<Finding> out;
    if (!j.is_array()) throw ConfigError("findings: expected a JSON array");
    for (const auto& e : j) {
        Finding f;
        try {
            f.query_id = e.at("query").get<std::string>();
            f.file = e.at("file").get<std::string>();
            f.line = e.at("line").get<int>();
            f.code = e.value("code", "");
            f.vuln_type = e.at("vuln_type").get<std::string>();
        } catch (const nlohmann::json::exception& err) {
            throw ConfigError(std::string("findings: ") + err.what());
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline nlohmann::json to_json(const std::vector<MetricsRow>& rows) {
    nlohmann::json j = nlohmann::json::array();
    for (const MetricsRow& r : rows)
        j.push_back({{"vuln_type", r.vuln_type},
                     {"tp", r.tp},
                     {"fp", r.fp},
                     {"fn", r.fn},
                     {"tp_total", r.tp_total},
                     {"recall", r.recall},
                     {"precision", r.precision},
                     {"f1", r.f1}});
    return j;
}

inline std::string render_metrics_table(const std::vector<MetricsRow>& rows) {
    std::ostringstream out;
    out << "vuln_type TP FP FN TP_total recall precision f1\n";
    char buf[64];
    for (const MetricsRow& r : rows) {
        out << r.vuln_type << " " << r.tp << " " << r.fp << " " << r.fn << " " << r.tp_total;
        std::snprintf(buf, sizeof(buf), " %.4f %.4f %.4f", r.recall, r.precision, r.f1);
        out << buf << "\n";
    }
    return out.str();
}

}  // namespace queryforge
