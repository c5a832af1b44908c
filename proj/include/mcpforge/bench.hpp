#pragma once

#include <string>
#include <vector>

#include "mcpforge/config.hpp"
#include "mcpforge/verify.hpp"

namespace mcpforge {

// Closed six-way failure taxonomy.
inline const std::vector<std::string> kFailureCategories = {
    "environment-setup",  "untoolable-structure", "import-error",
    "repository-bug",     "api-inference-error",  "mcp-spec-violation"};

struct CorpusCase {
    std::string name;
    std::string repo_url;
    // intended outcome, for manifest comparison
    std::string intended_status;             // success | failure
    int intended_rounds = 0;                 // for successes
    std::string intended_category;           // for failures
};

struct BenchReport {
    json per_case = json::array();
    json aggregates = json::object();

    json to_json() const;
    std::string summary_table() const;
};

bool judge_success(const ConversionRecord& record);

// Deterministic first-match rule table over the record evidence.
std::string classify_failure(const ConversionRecord& record);

std::vector<CorpusCase> load_corpus_manifest(const fs::path& path);
void save_corpus_manifest(const std::vector<CorpusCase>& corpus, const fs::path& path);

BenchReport run_bench(const std::vector<CorpusCase>& corpus, const RunConfig& config,
                      Gateway& gateway);

}  // namespace mcpforge
