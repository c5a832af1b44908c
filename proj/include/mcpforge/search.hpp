#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcpforge/gateway.hpp"
#include "mcpforge/util.hpp"

namespace mcpforge {

struct UserQuery {
    std::string text;
    std::string explicit_repo_link;  // empty when absent
};

struct TopicKeywords {
    std::vector<std::string> keywords;
    int cap = 5;
};

struct RepoCandidate {
    std::string full_name;  // owner/name
    std::string url;        // clone URL
    long stars = 0;
    std::string description;
    int rank = 0;  // 1-based position in the result set
};

struct EvaluationReport {
    std::string candidate;
    std::string core_functionality;
    bool has_complete_structure = false;
    bool fulfills_query = false;
    std::string reason;
};

// Repository-hosting search behind an interface so tests run on a stub index.
class RepoSearchClient {
public:
    virtual ~RepoSearchClient() = default;
    // Raw results for a keyword set; unranked and unsorted.
    virtual std::vector<RepoCandidate> search(const std::vector<std::string>& keywords) = 0;
    virtual std::string readme_excerpt(const RepoCandidate& candidate) = 0;
};

// Stub backed by an index file: [{full_name, url?, stars, description, readme}].
class StubSearchClient : public RepoSearchClient {
public:
    explicit StubSearchClient(const fs::path& index_file);
    explicit StubSearchClient(json index);
    std::vector<RepoCandidate> search(const std::vector<std::string>& keywords) override;
    std::string readme_excerpt(const RepoCandidate& candidate) override;
    int search_calls() const { return search_calls_; }

private:
    json index_;
    int search_calls_ = 0;
};

// GitHub-style REST client; retries rate limits with exponential backoff
// (max 3 attempts) and serializes requests per credential.
std::unique_ptr<RepoSearchClient> make_live_search_client(const std::string& api_base,
                                                          const std::string& token);

TopicKeywords extract_topics(const UserQuery& query, int m, Gateway& gateway);

std::vector<RepoCandidate> search_repositories(const TopicKeywords& keywords, int k,
                                               RepoSearchClient& client);

UserQuery refine_query(const UserQuery& query, const TopicKeywords& prior, Gateway& gateway);

EvaluationReport evaluate_repository(const RepoCandidate& candidate, const UserQuery& query,
                                     const std::string& readme_excerpt, Gateway& gateway);

// Full Tool-search pass: explicit-link bypass, topic extraction, ranked
// retrieval, one refinement round on empty results, then first-qualifying
// evaluation scan.
std::optional<RepoCandidate> select_repository(const UserQuery& query, int k, int m,
                                               RepoSearchClient& client, Gateway& gateway);

}  // namespace mcpforge
