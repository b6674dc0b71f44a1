#pragma once

#include <chrono>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "queryforge/dataset.hpp"
#include "queryforge/provider.hpp"
#include "queryforge/validator.hpp"

namespace queryforge::gen {

using dsl::QueryAst;
using dsl::ValidationReport;
using dsl::Verdict;
using minilang::VulnExample;

class BudgetExhausted : public Error {
public:
    BudgetExhausted(int max_attempts_, const std::string& last_verdict_)
        : Error("attempt budget " + std::to_string(max_attempts_) +
                " exhausted, last verdict " + last_verdict_),
          max_attempts(max_attempts_),
          last_verdict(last_verdict_) {}
    int max_attempts;
    std::string last_verdict;
};

struct GenerationTask {
    std::string vuln_type;            // t
    std::string description;          // D^t
    std::vector<VulnExample> examples;  // E^t
    int max_attempts = 50;            // MaxN; 1000 matches the paper's setting
    std::vector<std::string> subtasks;
};

struct IterationLog {
    std::string example_id;  // request key slot
    int attempt = 1;
    std::string phase;  // decompose | generate | fp | generalize | merge
    std::string prompt;
    std::string response;
    std::string verdict;
    std::string pstate_digest;
};

struct Session {
    GenerationTask task;
    std::vector<IterationLog> log;
    std::vector<std::pair<std::string, std::string>> produced;  // (example id, query text)
    std::string merged;                                         // empty until merge succeeds
    bool merged_is_fallback = false;
    long long elapsed_ms = 0;
    long long prompt_chars = 0;
    long long response_chars = 0;
    int provider_calls = 0;
    std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const Session& s) {
    nlohmann::json j;
    j["task"] = {{"vuln_type", s.task.vuln_type},
                 {"description", s.task.description},
                 {"max_attempts", s.task.max_attempts},
                 {"subtasks", s.task.subtasks}};
    nlohmann::json log = nlohmann::json::array();
    for (const IterationLog& e : s.log)
        log.push_back({{"example_id", e.example_id},
                       {"attempt", e.attempt},
                       {"phase", e.phase},
                       {"prompt", e.prompt},
                       {"response", e.response},
                       {"verdict", e.verdict},
                       {"pstate_digest", e.pstate_digest}});
    j["log"] = log;
    nlohmann::json produced = nlohmann::json::array();
    for (const auto& [id, text] : s.produced) produced.push_back({{"example_id", id}, {"query", text}});
    j["produced"] = produced;
    j["merged"] = s.merged;
    j["merged_is_fallback"] = s.merged_is_fallback;
    j["accounting"] = {{"elapsed_ms", s.elapsed_ms},
                       {"prompt_chars", s.prompt_chars},
                       {"response_chars", s.response_chars},
                       {"provider_calls", s.provider_calls}};
    j["warnings"] = s.warnings;
    return j;
}

// First fenced code block wins; otherwise the whole reply.
inline std::string extract_query_text(const std::string& reply) {
    auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return std::string();
        size_t b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    };
    size_t open = reply.find("```");
    if (open == std::string::npos) return trim(reply);
    size_t start = open + 3;
    size_t close = reply.find("```", start);
    if (close == std::string::npos) return trim(reply);
    std::string content = reply.substr(start, close - start);
    // Drop a bare language tag on the fence line.
    size_t nl = content.find('\n');
    if (nl != std::string::npos) {
        std::string first = trim(content.substr(0, nl));
        if (!first.empty() && first.find_first_of(" .(\"") == std::string::npos &&
            first.size() < 20)
            content = content.substr(nl + 1);
    }
    return trim(content);
}

// Renames every binding (definitions and references) with a prefix, so
// queries can be concatenated without collisions.
namespace detail {
inline void rename_in_chain(dsl::Chain& c, const std::string& prefix);

inline void rename_in_predicate(dsl::Predicate& p, const std::string& prefix) {
    using dsl::Predicate;
    switch (p.kind) {
        case Predicate::Kind::Chain:
            for (dsl::StepCall& s : p.steps)
                for (dsl::StepArg& a : s.args) {
                    if (a.kind == dsl::StepArg::Kind::Predicate) {
                        auto copy = std::make_shared<Predicate>(*a.predicate);
                        rename_in_predicate(*copy, prefix);
                        a.predicate = copy;
                    }
                    if (a.kind == dsl::StepArg::Kind::Traversal) {
                        auto copy = std::make_shared<dsl::Chain>(*a.traversal);
                        rename_in_chain(*copy, prefix);
                        a.traversal = copy;
                    }
                }
            break;
        case Predicate::Kind::Not:
            p.lhs = std::make_shared<Predicate>(*p.lhs);
            rename_in_predicate(*p.lhs, prefix);
            break;
        case Predicate::Kind::And:
        case Predicate::Kind::Or:
            p.lhs = std::make_shared<Predicate>(*p.lhs);
            p.rhs = std::make_shared<Predicate>(*p.rhs);
            rename_in_predicate(*p.lhs, prefix);
            rename_in_predicate(*p.rhs, prefix);
            break;
        case Predicate::Kind::Placeholder:
            break;
    }
}

inline void rename_in_chain(dsl::Chain& c, const std::string& prefix) {
    if (c.root == dsl::Chain::Root::Binding) c.binding = prefix + c.binding;
    for (dsl::StepCall& s : c.steps)
        for (dsl::StepArg& a : s.args) {
            if (a.kind == dsl::StepArg::Kind::Predicate) {
                auto copy = std::make_shared<dsl::Predicate>(*a.predicate);
                rename_in_predicate(*copy, prefix);
                a.predicate = copy;
            }
            if (a.kind == dsl::StepArg::Kind::Traversal) {
                auto copy = std::make_shared<dsl::Chain>(*a.traversal);
                rename_in_chain(*copy, prefix);
                a.traversal = copy;
            }
        }
}
}  // namespace detail

inline QueryAst rename_bindings(const QueryAst& q, const std::string& prefix) {
    QueryAst out = q;
    for (dsl::BindingDef& b : out.bindings) {
        b.name = prefix + b.name;
        detail::rename_in_chain(b.chain, prefix);
    }
    for (dsl::Chain& arm : out.result_arms) detail::rename_in_chain(arm, prefix);
    dsl::compute_blocks(out);
    out.source = dsl::to_text(out);
    return out;
}

// Syntactic disjunction: evaluate each input query, union the result sets.
inline QueryAst or_union(const std::vector<QueryAst>& queries) {
    QueryAst out;
    for (size_t i = 0; i < queries.size(); ++i) {
        QueryAst renamed = rename_bindings(queries[i], "q" + std::to_string(i) + "_");
        for (dsl::BindingDef& b : renamed.bindings) out.bindings.push_back(std::move(b));
        for (dsl::Chain& arm : renamed.result_arms) out.result_arms.push_back(std::move(arm));
    }
    dsl::compute_blocks(out);
    out.source = dsl::to_text(out);
    return out;
}

// Per-example evaluation context for validation during generation.
struct ExampleContext {
    VulnExample example;
    const CodePropertyGraph* graph = nullptr;
    std::vector<dsl::LabelRange> labels;  // all labeled sinks of the project
    std::string slice;
};

inline constexpr int kOptimizationPassBudget = 5;

// Algorithm: per-example iterative generation with validator feedback, then
// FP elimination, generalization, and merging.
class Generator {
public:
    Generator(Provider& provider, const dsl::DslSpec& full_spec, std::string system_prompt,
              std::string session_log_path = "")
        : provider_(provider), spec_(full_spec), system_prompt_(std::move(system_prompt)) {
        if (!session_log_path.empty()) {
            log_stream_.open(session_log_path, std::ios::app);
            if (!log_stream_) throw IoError("cannot open session log: " + session_log_path);
        }
    }

    // --- subtask decomposition (one provider call) --------------------------

    std::vector<std::string> decompose_task(GenerationTask& task, Session& session) {
        std::ostringstream prompt;
        prompt << "Vulnerability type: " << task.vuln_type << "\n"
               << "Description: " << task.description << "\n"
               << "Decompose the detection task into 3 to 6 ordered subtasks, one per line, "
                  "numbered like '1. ...'.\n";
        std::string reply = call(session, {task.vuln_type + ":decompose", 1}, "decompose",
                                 prompt.str(), /*system=*/false);
        std::vector<std::string> subtasks;
        std::istringstream in(reply);
        std::string line;
        while (std::getline(in, line)) {
            size_t i = line.find_first_not_of(" \t");
            if (i == std::string::npos || !isdigit(static_cast<unsigned char>(line[i]))) continue;
            while (i < line.size() && isdigit(static_cast<unsigned char>(line[i]))) ++i;
            if (i < line.size() && (line[i] == '.' || line[i] == ')')) ++i;
            size_t j = line.find_first_not_of(" \t", i);
            if (j == std::string::npos) continue;
            std::string text = line.substr(j);
            while (!text.empty() && (text.back() == '\r' || text.back() == ' ')) text.pop_back();
            if (!text.empty()) subtasks.push_back(text);
        }
        if (subtasks.size() < 3 || subtasks.size() > 6) {
            session.warnings.push_back("decomposition unparseable, falling back to the raw description");
            subtasks = {task.description};
        }
        task.subtasks = subtasks;
        set_last_verdict(session, subtasks.size() == 1 ? "fallback" : "ok");
        return subtasks;
    }

    // --- per-example feedback loop ------------------------------------------

    QueryAst gen_per_example(const GenerationTask& task, const ExampleContext& ctx,
                             Session& session) {
        std::string last_verdict = "none";
        std::optional<ValidationReport> feedback;
        std::string prior_query;
        for (int attempt = 1; attempt <= task.max_attempts; ++attempt) {
            std::string prompt = generation_prompt(task, ctx, prior_query, feedback);
            std::string reply =
                call(session, {ctx.example.id, attempt}, "generate", prompt, /*system=*/true);
            std::string q_text = extract_query_text(reply);
            ValidationReport report =
                dsl::validate(q_text, *ctx.graph, ctx.example, ctx.labels, &spec_);
            set_last_verdict(session, dsl::to_string(report.verdict),
                             report.pstate ? dsl::render_pstate(*report.pstate) : "");
            last_verdict = dsl::to_string(report.verdict);

            if (report.verdict == Verdict::Pass || report.verdict == Verdict::FalsePositives) {
                QueryAst accepted = *report.query;
                if (report.verdict == Verdict::FalsePositives)
                    accepted = eliminate_fps(accepted, report, ctx, session);
                std::vector<dsl::OverfitFlag> flags = dsl::detect_overfit(accepted, ctx.slice);
                if (!flags.empty()) accepted = generalize(accepted, flags, ctx, session);
                return accepted;
            }
            prior_query = q_text;
            feedback = std::move(report);
        }
        throw BudgetExhausted(task.max_attempts, last_verdict);
    }

    // --- FP elimination -------------------------------------------------------

    // Revisions are accepted only when they remove at least one false positive
    // and still retrieve the example; the example is never traded away.
    QueryAst eliminate_fps(const QueryAst& q, const ValidationReport& initial,
                           const ExampleContext& ctx, Session& session) {
        if (initial.verdict == Verdict::Pass) return q;
        QueryAst current = q;
        ValidationReport current_report = initial;
        QueryAst best = q;
        size_t best_fps = initial.fp_nodes.size();
        std::string rejection;

        for (int k = 1; k <= kOptimizationPassBudget; ++k) {
            NodeId fp = current_report.fp_nodes.front();
            const Node& fp_node = ctx.graph->node(fp);
            int block = 1;
            try {
                block = dsl::localize_fp(current, *current_report.trace, fp);
            } catch (const dsl::NotAnFp&) {
            }
            std::ostringstream prompt;
            prompt << "This query retrieves the vulnerability example but reports false positives.\n"
                   << "Query:\n" << query_text(current) << "\n"
                   << "False positive: node " << fp << " at " << fp_node.file << ":" << fp_node.line
                   << " code: " << fp_node.code << "\n"
                   << "It enters the chain at block " << block << ". Program state there:\n"
                   << state_at_block(*current_report.trace, block, *ctx.graph)
                   << (rejection.empty() ? "" : "Previous revision rejected: " + rejection + "\n")
                   << "Revise the query to exclude the false positive while still retrieving the "
                      "example. Reply with the query in a fenced code block.\n";
            std::string reply =
                call(session, {ctx.example.id + ":fp", k}, "fp", prompt.str(), /*system=*/true);
            std::string q_text = extract_query_text(reply);
            ValidationReport report =
                dsl::validate(q_text, *ctx.graph, ctx.example, ctx.labels, &spec_);
            set_last_verdict(session, dsl::to_string(report.verdict));

            if (report.verdict == Verdict::Pass) return *report.query;
            if (report.verdict == Verdict::FalsePositives &&
                report.fp_nodes.size() < current_report.fp_nodes.size()) {
                current = *report.query;
                current_report = std::move(report);
                rejection.clear();
                if (current_report.fp_nodes.size() < best_fps) {
                    best = current;
                    best_fps = current_report.fp_nodes.size();
                }
                continue;
            }
            rejection = report.verdict == Verdict::SemanticMiss
                            ? "it no longer retrieves the example"
                            : std::string("verdict ") + dsl::to_string(report.verdict) +
                                  ", false positives not reduced";
        }
        session.warnings.push_back("fp elimination budget exhausted for " + ctx.example.id +
                                   ", keeping best query with " + std::to_string(best_fps) +
                                   " false positive(s)");
        return best;
    }

    // --- generalization ---------------------------------------------------------

    // Accepts a revision only when it clears every overfitting flag and still
    // validates Pass; best-effort on budget exhaustion.
    QueryAst generalize(const QueryAst& q, const std::vector<dsl::OverfitFlag>& flags,
                        const ExampleContext& ctx, Session& session) {
        if (flags.empty()) return q;
        std::string rejection;
        for (int k = 1; k <= kOptimizationPassBudget; ++k) {
            std::ostringstream prompt;
            prompt << "This query retrieves the example but overfits it.\n"
                   << "Query:\n" << query_text(q) << "\nFlags:\n";
            for (const dsl::OverfitFlag& f : flags)
                prompt << "- " << dsl::to_string(f.kind) << " at block " << f.block << ": "
                       << f.detail << "\n";
            prompt << (rejection.empty() ? "" : "Previous revision rejected: " + rejection + "\n")
                   << "Express the query in a more general form that avoids these specifics and "
                      "still retrieves the example. Reply with the query in a fenced code block.\n";
            std::string reply = call(session, {ctx.example.id + ":gen", k}, "generalize",
                                     prompt.str(), /*system=*/true);
            std::string q_text = extract_query_text(reply);
            ValidationReport report =
                dsl::validate(q_text, *ctx.graph, ctx.example, ctx.labels, &spec_);
            std::vector<dsl::OverfitFlag> new_flags;
            if (report.verdict == Verdict::Pass)
                new_flags = dsl::detect_overfit(*report.query, ctx.slice);
            set_last_verdict(session, dsl::to_string(report.verdict));

            if (report.verdict == Verdict::Pass && new_flags.empty()) return *report.query;
            rejection = report.verdict != Verdict::Pass
                            ? std::string("verdict ") + dsl::to_string(report.verdict)
                            : "overfitting flags remain";
        }
        session.warnings.push_back("generalization budget exhausted for " + ctx.example.id +
                                   ", keeping the flagged query");
        return q;
    }

    // --- merging -----------------------------------------------------------------

    // The merged query must validate Pass on every example; after the attempt
    // budget the OR-union fallback is used, which is correct by construction.
    QueryAst merge_queries(const std::vector<QueryAst>& queries,
                           const std::vector<ExampleContext>& contexts, Session& session) {
        if (queries.size() == 1) return queries.front();
        std::string failing;
        for (int k = 1; k <= kOptimizationPassBudget; ++k) {
            std::ostringstream prompt;
            prompt << "Merge these per-example detection queries into a single query that "
                      "retrieves every example.\n";
            for (size_t i = 0; i < queries.size(); ++i)
                prompt << "Query " << (i + 1) << ":\n" << query_text(queries[i]) << "\n";
            prompt << (failing.empty() ? "" : "Previous merge failed on: " + failing + "\n")
                   << "Reply with the merged query in a fenced code block.\n";
            std::string reply = call(session, {session.task.vuln_type + ":merge", k}, "merge",
                                     prompt.str(), /*system=*/true);
            std::string q_text = extract_query_text(reply);

            failing.clear();
            std::optional<QueryAst> parsed;
            for (const ExampleContext& ctx : contexts) {
                ValidationReport report =
                    dsl::validate(q_text, *ctx.graph, ctx.example, ctx.labels, &spec_);
                if (report.verdict != Verdict::Pass) {
                    failing += (failing.empty() ? "" : ", ") + ctx.example.id + " (" +
                               dsl::to_string(report.verdict) + ")";
                } else if (!parsed) {
                    parsed = *report.query;
                }
            }
            set_last_verdict(session, failing.empty() ? "Pass" : "failed: " + failing);
            if (failing.empty() && parsed) return *parsed;
        }
        session.warnings.push_back("merge budget exhausted, using the OR-union fallback");
        session.merged_is_fallback = true;
        return or_union(queries);
    }

    // --- whole-task pipeline --------------------------------------------------------

    Session run(GenerationTask task) {
        auto t0 = std::chrono::steady_clock::now();
        Session session;
        session.task = task;
        decompose_task(task, session);
        session.task = task;  // capture subtasks

        std::vector<ExampleContext> contexts = build_contexts(task);
        std::vector<QueryAst> produced;
        bool all_pass = true;
        for (const ExampleContext& ctx : contexts) {
            QueryAst q = gen_per_example(task, ctx, session);
            ValidationReport final_report =
                dsl::validate(query_text(q), *ctx.graph, ctx.example, ctx.labels, &spec_);
            if (final_report.verdict != Verdict::Pass) {
                all_pass = false;
                session.warnings.push_back("final query for " + ctx.example.id + " is " +
                                           dsl::to_string(final_report.verdict));
            }
            session.produced.emplace_back(ctx.example.id, query_text(q));
            produced.push_back(std::move(q));
        }
        if (all_pass && !produced.empty()) {
            QueryAst merged = merge_queries(produced, contexts, session);
            session.merged = query_text(merged);
        }
        session.elapsed_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - t0)
                                 .count();
        return session;
    }

    std::vector<ExampleContext> build_contexts(const GenerationTask& task) {
        std::vector<ExampleContext> contexts;
        for (const VulnExample& ex : task.examples) {
            ExampleContext ctx;
            ctx.example = ex;
            ctx.graph = &graph_for(ex.project_dir);
            for (const VulnExample& other : task.examples)
                if (other.project_dir == ex.project_dir)
                    ctx.labels.push_back({other.sink_file, other.sink_start, other.sink_end});
            ctx.slice = minilang::slice_example(*ctx.graph, ex);
            contexts.push_back(std::move(ctx));
        }
        return contexts;
    }

    const CodePropertyGraph& graph_for(const std::string& project_dir) {
        auto it = graphs_.find(project_dir);
        if (it != graphs_.end()) return *it->second;
        auto g = std::make_unique<CodePropertyGraph>(minilang::build_project_cpg(project_dir));
        return *graphs_.emplace(project_dir, std::move(g)).first->second;
    }

private:
    Provider& provider_;
    dsl::DslSpec spec_;
    std::string system_prompt_;
    std::ofstream log_stream_;
    std::map<std::string, std::unique_ptr<CodePropertyGraph>> graphs_;

    static std::string query_text(const QueryAst& q) {
        return q.source.empty() ? dsl::to_text(q) : q.source;
    }

    static std::string state_at_block(const dsl::ExecutionTrace& trace, int block,
                                      const CodePropertyGraph& g) {
        for (const dsl::BlockState& bs : trace.states) {
            if (bs.index != block) continue;
            dsl::ExecutionTrace one;
            one.states.push_back(bs);
            return dsl::render_pstate(dsl::pstate_from_trace(one, g));
        }
        return "";
    }

    std::string generation_prompt(const GenerationTask& task, const ExampleContext& ctx,
                                  const std::string& prior_query,
                                  const std::optional<ValidationReport>& feedback) {
        std::ostringstream p;
        p << "Vulnerability type: " << task.vuln_type << "\n"
          << "Task description: " << task.description << "\n";
        if (!task.subtasks.empty()) {
            p << "Subtasks:\n";
            for (size_t i = 0; i < task.subtasks.size(); ++i)
                p << (i + 1) << ". " << task.subtasks[i] << "\n";
        }
        p << "Vulnerability example (program slice, file:line annotated):\n" << ctx.slice;
        if (feedback) {
            p << "Previous query:\n" << prior_query << "\n"
              << "Verdict: " << dsl::to_string(feedback->verdict) << "\n";
            if (!feedback->message.empty()) p << "Detail: " << feedback->message << "\n";
            if (feedback->verdict == Verdict::SyntaxError)
                p << "Violated grammar rule: <" << feedback->grammar_rule << "> at line "
                  << feedback->err_line << ", expected " << feedback->expected << "\n";
            if (feedback->verdict == Verdict::ExecError)
                p << "Execution error at block " << feedback->exec_block << ": "
                  << feedback->exec_kind << "\n";
            if (feedback->pstate)
                p << "Program states (PState):\n" << dsl::render_pstate(*feedback->pstate);
            if (feedback->example_states && !feedback->example_states->states.empty())
                p << "States restricted to the example:\n"
                  << dsl::render_pstate(*feedback->example_states);
            for (const dsl::FixSuggestion& fix : feedback->suggestions) {
                p << "Suggestion (" << dsl::to_string(fix.kind) << ") for '" << fix.original
                  << "':";
                for (const auto& [name, dist] : fix.candidates)
                    p << " " << name << " (distance " << dist << ")";
                p << "\n";
            }
            p << "Revise the query.";
        } else {
            p << "Write one detection query in the DSL that retrieves this example.";
        }
        p << " Reply with the query in a fenced code block.\n";
        return p.str();
    }

    std::string call(Session& session, const RequestKey& key, const std::string& phase,
                     const std::string& user_prompt, bool system) {
        std::vector<Message> messages;
        if (system) messages.push_back({"system", system_prompt_});
        messages.push_back({"user", user_prompt});
        std::string reply;
        try {
            reply = provider_.complete(key, messages);
        } catch (const Error& e) {
            session.warnings.push_back("provider failure at (" + key.example_id + ", " +
                                       std::to_string(key.attempt) + "): " + e.what());
            append_log(session, IterationLog{key.example_id, key.attempt, phase, user_prompt, "",
                                             "provider-error", ""});
            throw;
        }
        session.provider_calls += 1;
        for (const Message& m : messages) session.prompt_chars += m.content.size();
        session.response_chars += reply.size();
        append_log(session, IterationLog{key.example_id, key.attempt, phase, user_prompt, reply,
                                         "", ""});
        return reply;
    }

    void set_last_verdict(Session& session, const std::string& verdict,
                          const std::string& pstate_text = "") {
        if (session.log.empty()) return;
        session.log.back().verdict = verdict;
        if (!pstate_text.empty()) session.log.back().pstate_digest = fnv1a_hex(pstate_text);
        flush_log(session.log.back());
    }

    void append_log(Session& session, IterationLog entry) {
        session.log.push_back(std::move(entry));
        if (session.log.back().verdict == "provider-error") flush_log(session.log.back());
    }

    // Append-only session log, flushed per call, so interrupted runs replay.
    void flush_log(const IterationLog& e) {
        if (!log_stream_.is_open()) return;
        nlohmann::json j = {{"example_id", e.example_id}, {"attempt", e.attempt},
                            {"phase", e.phase},           {"verdict", e.verdict},
                            {"prompt_digest", fnv1a_hex(e.prompt)},
                            {"pstate_digest", e.pstate_digest}};
        log_stream_ << j.dump() << "\n";
        log_stream_.flush();
    }
};

}  // namespace queryforge::gen
