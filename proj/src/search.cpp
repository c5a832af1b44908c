#include "mcpforge/search.hpp"

#include <httplib.h>

#include <algorithm>
#include <mutex>
#include <set>
#include <thread>

#include "mcpforge/errors.hpp"

namespace mcpforge {

namespace {

const char* kTopicSystem =
    "You extract search topics. Given a task description, reply with JSON "
    "{\"keywords\": [..]} listing short code-search phrases, most salient first.";

const char* kEvalSystem =
    "You evaluate whether a code repository fits a task. Reply with JSON "
    "{\"core_functionality\", \"has_complete_structure\", \"fulfills_query\", \"reason\"}. "
    "A complete structure means dependency declarations, importable modules, and entry "
    "points are present. Give a reason whenever a criterion is false.";

const char* kRefineSystem =
    "You broaden over-specific code search queries while keeping their meaning. "
    "Reply with JSON {\"query\": \"...\"}.";

std::vector<std::string> dedupe_casefold(const std::vector<std::string>& words) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& w : words) {
        std::string t = trim(w);
        if (t.empty()) continue;
        if (seen.insert(to_lower(t)).second) out.push_back(t);
    }
    return out;
}

}  // namespace

StubSearchClient::StubSearchClient(const fs::path& index_file)
    : index_(read_json_file(index_file)) {}

StubSearchClient::StubSearchClient(json index) : index_(std::move(index)) {}

std::vector<RepoCandidate> StubSearchClient::search(const std::vector<std::string>& keywords) {
    ++search_calls_;
    std::vector<RepoCandidate> hits;
    for (const auto& entry : index_) {
        std::string haystack = to_lower(entry.value("full_name", "") + " " +
                                        entry.value("description", "") + " " +
                                        entry.value("readme", ""));
        bool match = false;
        for (const auto& kw : keywords)
            if (!kw.empty() && haystack.find(to_lower(kw)) != std::string::npos) match = true;
        if (!match) continue;
        RepoCandidate c;
        c.full_name = entry.value("full_name", "");
        c.url = entry.value("url", "https://example.invalid/" + c.full_name + ".git");
        c.stars = entry.value("stars", 0L);
        c.description = entry.value("description", "");
        hits.push_back(std::move(c));
    }
    return hits;
}

std::string StubSearchClient::readme_excerpt(const RepoCandidate& candidate) {
    for (const auto& entry : index_)
        if (entry.value("full_name", "") == candidate.full_name) return entry.value("readme", "");
    return "";
}

namespace {

class LiveSearchClient : public RepoSearchClient {
public:
    LiveSearchClient(std::string api_base, std::string token)
        : api_base_(std::move(api_base)), token_(std::move(token)) {}

    std::vector<RepoCandidate> search(const std::vector<std::string>& keywords) override {
        std::lock_guard<std::mutex> lock(mutex_);  // one request at a time per credential
        std::string q;
        for (const auto& k : keywords) {
            if (!q.empty()) q += "+";
            q += httplib::detail::encode_url(k);
        }
        std::string path = "/search/repositories?q=" + q + "&sort=stars&order=desc&per_page=100";
        json body = request_json(path);
        std::vector<RepoCandidate> out;
        for (const auto& item : body.value("items", json::array())) {
            RepoCandidate c;
            c.full_name = item.value("full_name", "");
            c.url = item.value("clone_url", "");
            c.stars = item.value("stargazers_count", 0L);
            c.description = item.is_object() && item.contains("description") &&
                                    item["description"].is_string()
                                ? item["description"].get<std::string>()
                                : "";
            out.push_back(std::move(c));
        }
        return out;
    }

    std::string readme_excerpt(const RepoCandidate& candidate) override {
        std::lock_guard<std::mutex> lock(mutex_);
        try {
            json body = request_json("/repos/" + candidate.full_name + "/readme");
            // API returns base64; an excerpt of the decoded head is enough.
            std::string encoded = body.value("content", "");
            std::string decoded;
            decoded.reserve(encoded.size());
            int val = 0, bits = -8;
            for (char ch : encoded) {
                static const std::string alphabet =
                    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
                auto idx = alphabet.find(ch);
                if (idx == std::string::npos) continue;
                val = (val << 6) + static_cast<int>(idx);
                bits += 6;
                if (bits >= 0) {
                    decoded.push_back(static_cast<char>((val >> bits) & 0xFF));
                    bits -= 8;
                }
            }
            return decoded.substr(0, 4000);
        } catch (const Error&) {
            return "";
        }
    }

private:
    json request_json(const std::string& path) {
        httplib::Client client(api_base_);
        client.set_connection_timeout(10);
        client.set_read_timeout(30);
        httplib::Headers headers{{"Accept", "application/vnd.github+json"},
                                 {"User-Agent", "mcpforge"}};
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        int backoff_seconds = 1;
        for (int attempt = 0; attempt < 3; ++attempt) {
            auto res = client.Get(path, headers);
            if (!res) throw make_error("api-unreachable", "no response from " + api_base_);
            if (res->status == 403 || res->status == 429) {
                int wait = backoff_seconds;
                if (res->has_header("Retry-After"))
                    wait = std::max(wait, std::stoi(res->get_header_value("Retry-After")));
                std::this_thread::sleep_for(std::chrono::seconds(wait));
                backoff_seconds *= 2;
                continue;
            }
            if (res->status != 200)
                throw make_error("api-unreachable", "status " + std::to_string(res->status));
            return json::parse(res->body);
        }
        throw make_error("rate-limited", "search API rate limit persisted after 3 attempts");
    }

    std::string api_base_;
    std::string token_;
    std::mutex mutex_;
};

}  // namespace

std::unique_ptr<RepoSearchClient> make_live_search_client(const std::string& api_base,
                                                          const std::string& token) {
    return std::make_unique<LiveSearchClient>(api_base.empty() ? "https://api.github.com" : api_base,
                                              token);
}

TopicKeywords extract_topics(const UserQuery& query, int m, Gateway& gateway) {
    if (trim(query.text).empty()) throw make_error("empty-query", "query text is empty");
    if (m < 1) throw make_error("invalid-argument", "m must be positive");

    PromptRequest request;
    request.purpose = Purpose::TopicExtraction;
    request.system_text = kTopicSystem;
    request.user_text = "Extract at most " + std::to_string(m) +
                        " topic keywords for searching code repositories.\nQuery:\n" + query.text;
    request.schema_id = "topic-keywords";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);

    TopicKeywords topics;
    topics.cap = m;
    topics.keywords = dedupe_casefold(parsed["keywords"].get<std::vector<std::string>>());
    if (static_cast<int>(topics.keywords.size()) > m) topics.keywords.resize(m);
    if (topics.keywords.empty()) throw make_error("schema-violation", "no usable keywords extracted");
    return topics;
}

std::vector<RepoCandidate> search_repositories(const TopicKeywords& keywords, int k,
                                               RepoSearchClient& client) {
    if (keywords.keywords.empty()) throw make_error("invalid-argument", "at least one keyword required");
    if (k < 1) throw make_error("invalid-argument", "K must be positive");

    auto hits = client.search(keywords.keywords);
    std::sort(hits.begin(), hits.end(), [](const RepoCandidate& a, const RepoCandidate& b) {
        if (a.stars != b.stars) return a.stars > b.stars;
        return a.full_name < b.full_name;  // deterministic tie-break
    });
    if (static_cast<int>(hits.size()) > k) hits.resize(k);
    for (size_t i = 0; i < hits.size(); ++i) hits[i].rank = static_cast<int>(i) + 1;
    return hits;
}

UserQuery refine_query(const UserQuery& query, const TopicKeywords& prior, Gateway& gateway) {
    if (prior.keywords.empty())
        throw make_error("invalid-argument", "refinement requires the keywords of the failed search");

    PromptRequest request;
    request.purpose = Purpose::TopicExtraction;
    request.system_text = kRefineSystem;
    request.user_text = "The search for these keywords returned no repositories: " +
                        join(prior.keywords, ", ") +
                        "\nRewrite the query below so a broader search succeeds while keeping its "
                        "meaning.\nQuery:\n" + query.text;
    request.schema_id = "query-rewrite";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);

    UserQuery refined = query;  // explicit link passes through untouched
    refined.text = parsed["query"].get<std::string>();
    return refined;
}

EvaluationReport evaluate_repository(const RepoCandidate& candidate, const UserQuery& query,
                                     const std::string& readme_excerpt, Gateway& gateway) {
    PromptRequest request;
    request.purpose = Purpose::RepoEvaluation;
    request.system_text = kEvalSystem;
    request.user_text = "Repository: " + candidate.full_name + "\nStars: " +
                        std::to_string(candidate.stars) + "\nDescription: " + candidate.description +
                        "\nReadme excerpt:\n" + readme_excerpt + "\n\nUser query:\n" + query.text;
    request.schema_id = "repo-evaluation";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);

    EvaluationReport report;
    report.candidate = candidate.full_name;
    report.core_functionality = parsed["core_functionality"].get<std::string>();
    report.has_complete_structure = parsed["has_complete_structure"].get<bool>();
    report.fulfills_query = parsed["fulfills_query"].get<bool>();
    report.reason = parsed["reason"].get<std::string>();
    if ((!report.has_complete_structure || !report.fulfills_query) && trim(report.reason).empty())
        throw make_error("schema-violation", "evaluation report lacks a reason for a negative verdict");
    return report;
}

std::optional<RepoCandidate> select_repository(const UserQuery& query, int k, int m,
                                               RepoSearchClient& client, Gateway& gateway) {
    if (!query.explicit_repo_link.empty()) {
        // The user already named the tool; skip search entirely.
        RepoCandidate direct;
        direct.url = query.explicit_repo_link;
        std::string tail = query.explicit_repo_link;
        auto scheme = tail.find("://");
        if (scheme != std::string::npos) tail = tail.substr(scheme + 3);
        auto slash = tail.find('/');
        if (slash != std::string::npos) tail = tail.substr(slash + 1);
        if (ends_with(tail, ".git")) tail = tail.substr(0, tail.size() - 4);
        direct.full_name = tail.empty() ? query.explicit_repo_link : tail;
        direct.rank = 1;
        return direct;
    }

    TopicKeywords topics = extract_topics(query, m, gateway);
    auto candidates = search_repositories(topics, k, client);
    if (candidates.empty()) {
        // Exactly one refinement round before giving up.
        UserQuery refined = refine_query(query, topics, gateway);
        TopicKeywords refined_topics = extract_topics(refined, m, gateway);
        candidates = search_repositories(refined_topics, k, client);
        if (candidates.empty())
            throw make_error("refinement-exhausted", "both search rounds returned no repositories");
    }

    for (const auto& candidate : candidates) {
        auto report = evaluate_repository(candidate, query, client.readme_excerpt(candidate), gateway);
        if (report.has_complete_structure && report.fulfills_query) return candidate;
    }
    return std::nullopt;
}

}  // namespace mcpforge
