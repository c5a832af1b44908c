#include "mcpforge/bench.hpp"

#include <algorithm>
#include <atomic>
#include <thread>

#include "mcpforge/errors.hpp"
#include "mcpforge/pipeline.hpp"

namespace mcpforge {

namespace {

bool traceback_names_resolution_failure(const std::string& traceback) {
    return traceback.find("ModuleNotFoundError") != std::string::npos ||
           traceback.find("ImportError") != std::string::npos ||
           traceback.find("ImportValidationError") != std::string::npos;
}

bool traceback_names_signature_mismatch(const std::string& traceback) {
    if (traceback.find("TypeError") == std::string::npos) return false;
    return traceback.find("unexpected keyword argument") != std::string::npos ||
           traceback.find("required positional argument") != std::string::npos ||
           traceback.find("required keyword-only argument") != std::string::npos ||
           traceback.find("positional arguments but") != std::string::npos;
}

// Deepest stack frame that sits under the cloned source tree. Result
// envelopes embed repository frames as escaped text inside assertion
// messages, so escapes are unfolded before frame parsing.
bool traceback_roots_in_source(const std::string& traceback) {
    std::string text = replace_all(traceback, "\\n", "\n");
    std::string deepest;
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        if (!starts_with(t, "File \"")) continue;
        auto quote_end = t.find('"', 6);
        if (quote_end == std::string::npos) continue;
        deepest = t.substr(6, quote_end - 6);
    }
    return deepest.find("/source/") != std::string::npos;
}

}  // namespace

bool judge_success(const ConversionRecord& record) {
    return record.final_status == "success" && record.validated_endpoints >= 3;
}

std::string classify_failure(const ConversionRecord& record) {
    if (judge_success(record)) throw make_error("invalid-argument", "record is a success");

    // Rule order is fixed; the first match wins. env_status is empty when
    // the pipeline never reached the env node.
    if (record.env_status == "failed" || !record.env_failure_kind.empty())
        return "environment-setup";

    bool last_pass = !record.outcomes.empty() && record.outcomes.back().status == "pass";
    if (record.untoolable || (last_pass && record.validated_endpoints < 3))
        return "untoolable-structure";

    std::string last_traceback;
    if (!record.outcomes.empty() && record.outcomes.back().traceback)
        last_traceback = *record.outcomes.back().traceback;

    if (!record.last_import_findings.empty() || traceback_names_resolution_failure(last_traceback))
        return "import-error";
    if (traceback_roots_in_source(last_traceback)) return "repository-bug";
    if (record.signature_mismatch || traceback_names_signature_mismatch(last_traceback))
        return "api-inference-error";
    if (!record.last_shape_findings.empty()) return "mcp-spec-violation";
    throw make_error("unclassifiable", "no failure rule matches the record for " +
                                           record.repo_full_name);
}

std::vector<CorpusCase> load_corpus_manifest(const fs::path& path) {
    std::vector<CorpusCase> corpus;
    json manifest = read_json_file(path);
    for (const auto& entry : manifest.at("cases")) {
        CorpusCase c;
        c.name = entry.at("name").get<std::string>();
        c.repo_url = entry.at("repo_url").get<std::string>();
        c.intended_status = entry.value("intended_status", "success");
        c.intended_rounds = entry.value("intended_rounds", 0);
        c.intended_category = entry.value("intended_category", "");
        corpus.push_back(std::move(c));
    }
    return corpus;
}

void save_corpus_manifest(const std::vector<CorpusCase>& corpus, const fs::path& path) {
    json cases = json::array();
    for (const auto& c : corpus) {
        json entry = {{"name", c.name},
                      {"repo_url", c.repo_url},
                      {"intended_status", c.intended_status}};
        if (c.intended_status == "success")
            entry["intended_rounds"] = c.intended_rounds;
        else
            entry["intended_category"] = c.intended_category;
        cases.push_back(std::move(entry));
    }
    write_json_file(path, json{{"schema_version", 1}, {"cases", cases}});
}

json BenchReport::to_json() const {
    return json{{"schema_version", 1}, {"cases", per_case}, {"aggregates", aggregates}};
}

std::string BenchReport::summary_table() const {
    std::string out;
    out += "case                          status    rounds  category\n";
    out += "----------------------------  --------  ------  ------------------------\n";
    for (const auto& c : per_case) {
        char line[160];
        std::snprintf(line, sizeof(line), "%-28s  %-8s  %6d  %s\n",
                      c.value("repo", "").c_str(), c.value("final_status", "").c_str(),
                      c.value("rounds_used", 0),
                      c["failure_category"].is_null()
                          ? "-"
                          : c["failure_category"].get<std::string>().c_str());
        out += line;
    }
    out += "\nsuccess rate: " + std::to_string(aggregates.value("success_rate", 0.0));
    out += "\nper-round cumulative successes: " + aggregates["per_round_cumulative_successes"].dump();
    out += "\ncategory histogram: " + aggregates["category_histogram"].dump() + "\n";
    return out;
}

BenchReport run_bench(const std::vector<CorpusCase>& corpus, const RunConfig& config,
                      Gateway& gateway) {
    if (corpus.empty()) throw make_error("invalid-argument", "bench corpus is empty");

    std::vector<ConversionRecord> records(corpus.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        while (true) {
            size_t index = next.fetch_add(1);
            if (index >= corpus.size()) return;
            RepoCandidate candidate;
            candidate.full_name = corpus[index].name;
            candidate.url = corpus[index].repo_url;
            records[index] = convert_repository(candidate, config, gateway,
                                                "bench-" + corpus[index].name);
        }
    };
    int threads = std::max(1, config.parallelism);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    BenchReport report;
    int successes = 0;
    double total_time = 0.0;
    json histogram = json::object();
    for (const auto& category : kFailureCategories) histogram[category] = 0;

    int max_rounds_seen = config.max_rounds;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& record = records[i];
        bool success = judge_success(record);
        if (success) ++successes;
        total_time += record.wall_time_seconds;
        if (!success && record.failure_category)
            histogram[*record.failure_category] = histogram[*record.failure_category].get<int>() + 1;
        json entry = {
            {"repo", corpus[i].name},
            {"final_status", record.final_status},
            {"rounds_used", record.rounds_used},
            {"validated_endpoints", record.validated_endpoints},
            {"generate_invocations", record.generate_invocations},
            {"wall_time_seconds", config.zero_timings ? 0.0 : record.wall_time_seconds},
            {"first_pass", success && record.rounds_used == 0},
        };
        entry["failure_category"] =
            record.failure_category ? json(*record.failure_category) : json(nullptr);
        report.per_case.push_back(std::move(entry));
        max_rounds_seen = std::max(max_rounds_seen, record.rounds_used);
    }

    // Cumulative successes by repair round: round r counts conversions that
    // succeeded using at most r rounds.
    std::vector<int> cumulative(static_cast<size_t>(max_rounds_seen) + 1, 0);
    for (const auto& record : records) {
        if (!judge_success(record)) continue;
        for (int r = record.rounds_used; r <= max_rounds_seen; ++r) cumulative[r] += 1;
    }
    json rates = json::array();
    for (int count : cumulative)
        rates.push_back(static_cast<double>(count) / static_cast<double>(corpus.size()));

    report.aggregates = {
        {"total", corpus.size()},
        {"successes", successes},
        {"success_rate", static_cast<double>(successes) / static_cast<double>(corpus.size())},
        {"mean_wall_time_seconds",
         config.zero_timings ? 0.0 : total_time / static_cast<double>(corpus.size())},
        {"per_round_cumulative_successes", cumulative},
        {"per_round_cumulative_rates", rates},
        {"category_histogram", histogram},
    };
    return report;
}

}  // namespace mcpforge
