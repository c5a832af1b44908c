#include "mcpforge/gateway.hpp"

#include <httplib.h>

#include <fstream>

#include "mcpforge/errors.hpp"
#include "mcpforge/schemas.hpp"

namespace mcpforge {

std::string purpose_name(Purpose p) {
    switch (p) {
        case Purpose::TopicExtraction: return "topic-extraction";
        case Purpose::RepoEvaluation: return "repo-evaluation";
        case Purpose::CodeReport: return "code-report";
        case Purpose::BundleGeneration: return "bundle-generation";
        case Purpose::ImportRepair: return "import-repair";
        case Purpose::FailureReview: return "failure-review";
        case Purpose::Planning: return "planning";
    }
    return "unknown";
}

std::optional<Purpose> purpose_from_name(const std::string& name) {
    static const std::map<std::string, Purpose> table = {
        {"topic-extraction", Purpose::TopicExtraction},
        {"repo-evaluation", Purpose::RepoEvaluation},
        {"code-report", Purpose::CodeReport},
        {"bundle-generation", Purpose::BundleGeneration},
        {"import-repair", Purpose::ImportRepair},
        {"failure-review", Purpose::FailureReview},
        {"planning", Purpose::Planning},
    };
    auto it = table.find(name);
    if (it == table.end()) return std::nullopt;
    return it->second;
}

namespace {

void validate_request(const PromptRequest& request) {
    if (trim(request.user_text).empty()) throw make_error("empty-prompt", "request user text is empty");
    if (!schemas::is_registered(request.schema_id))
        throw make_error("unregistered-schema", "schema '" + request.schema_id + "' is not registered");
    if (request.temperature < 0.0 || request.temperature > 1.0)
        throw make_error("invalid-request", "temperature outside [0,1]");
}

class HttpBackend : public ModelBackend {
public:
    HttpBackend(std::string endpoint, std::string api_key, std::string model)
        : endpoint_(std::move(endpoint)), api_key_(std::move(api_key)), model_(std::move(model)) {}

    std::string complete_text(const PromptRequest& request) override {
        auto scheme_end = endpoint_.find("://");
        if (scheme_end == std::string::npos)
            throw make_error("backend-unreachable", "malformed endpoint " + endpoint_);
        auto path_start = endpoint_.find('/', scheme_end + 3);
        std::string host = endpoint_.substr(0, path_start == std::string::npos ? endpoint_.size() : path_start);
        std::string path = path_start == std::string::npos ? "/v1/chat/completions"
                                                           : endpoint_.substr(path_start);
        httplib::Client client(host);
        client.set_connection_timeout(15);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        json body = {
            {"model", model_},
            {"temperature", request.temperature},
            {"messages",
             json::array({json{{"role", "system"}, {"content", request.system_text}},
                          json{{"role", "user"}, {"content", request.user_text}}})},
        };
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) throw make_error("backend-unreachable", "no response from " + endpoint_);
        if (res->status != 200)
            throw make_error("backend-unreachable",
                             "status " + std::to_string(res->status) + " from " + endpoint_);
        json reply = json::parse(res->body);
        return reply.at("choices").at(0).at("message").at("content").get<std::string>();
    }

    std::string model_name() const override { return model_; }

private:
    std::string endpoint_;
    std::string api_key_;
    std::string model_;
};

}  // namespace

std::shared_ptr<ModelBackend> make_http_backend(const std::string& endpoint,
                                                const std::string& api_key,
                                                const std::string& model) {
    return std::make_shared<HttpBackend>(endpoint, api_key, model);
}

Transcript Transcript::load(const fs::path& path) {
    Transcript t;
    std::ifstream in(path);
    if (!in) throw make_error("io-error", "cannot read transcript " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        json record = json::parse(line);
        if (record.contains("provenance")) {
            t.provenance = record["provenance"];
            continue;
        }
        t.entries[record.at("key").get<std::string>()] = record.at("text").get<std::string>();
    }
    return t;
}

void Transcript::save(const fs::path& path) const {
    std::string out;
    out += json{{"provenance", provenance}}.dump() + "\n";
    for (const auto& [key, text] : entries)
        out += json{{"key", key}, {"text", text}}.dump() + "\n";
    write_file(path, out);
}

Gateway::Gateway(GatewayMode mode, Transcript transcript)
    : mode_(mode), transcript_(std::move(transcript)) {
    if (mode_ != GatewayMode::Replay)
        throw make_error("invalid-config", "transcript-only gateway must be in replay mode");
}

Gateway::Gateway(GatewayMode mode, std::shared_ptr<ModelBackend> backend)
    : mode_(mode), backend_(std::move(backend)) {
    if (mode_ == GatewayMode::Replay)
        throw make_error("invalid-config", "replay gateway needs a transcript, not a backend");
    if (!backend_) throw make_error("invalid-config", "live gateway needs a backend");
    transcript_.provenance = {{"model", backend_->model_name()}};
}

std::string Gateway::transcript_key(const PromptRequest& request) {
    // Temperature is deliberately excluded so replay is insensitive to
    // sampling settings. json object keys are sorted, so the dump is
    // canonical.
    json canonical = {
        {"purpose", purpose_name(request.purpose)},
        {"schema", request.schema_id},
        {"system", request.system_text},
        {"user", request.user_text},
    };
    return sha256_hex(canonical.dump());
}

std::vector<Purpose> Gateway::call_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return call_log_;
}

CompletionResult Gateway::complete(const PromptRequest& request) {
    validate_request(request);
    {
        std::lock_guard<std::mutex> lock(mutex_);
        call_log_.push_back(request.purpose);
    }
    return complete_internal(request);
}

CompletionResult Gateway::complete_internal(const PromptRequest& request) {
    CompletionResult result;
    result.purpose = request.purpose;
    result.transcript_key = transcript_key(request);
    if (mode_ == GatewayMode::Replay) {
        auto it = transcript_.entries.find(result.transcript_key);
        if (it == transcript_.entries.end())
            throw make_error("replay-miss", "transcript has no entry for key " + result.transcript_key +
                                                " (purpose " + purpose_name(request.purpose) + ")");
        result.raw_text = it->second;
        result.backend = "replay";
        return result;
    }
    result.raw_text = backend_->complete_text(request);
    result.backend = "live";
    if (mode_ == GatewayMode::Record) {
        std::lock_guard<std::mutex> lock(mutex_);
        transcript_.entries[result.transcript_key] = result.raw_text;
    }
    return result;
}

void Gateway::save_transcript(const fs::path& path) const {
    std::lock_guard<std::mutex> lock(mutex_);
    transcript_.save(path);
}

json Gateway::parse_structured(const CompletionResult& result, const std::string& schema_id) {
    if (!schemas::is_registered(schema_id))
        throw make_error("unregistered-schema", "schema '" + schema_id + "' is not registered");

    auto attempt = [&](const std::string& text) -> std::optional<json> {
        auto value = extract_json(text);
        if (!value) return std::nullopt;
        if (!schemas::conforms(schema_id, *value)) return std::nullopt;
        return value;
    };

    if (auto value = attempt(result.raw_text)) return *value;

    // One bounded reformat retry, then a hard error. The retry prompt is a
    // pure function of the failed text so replay stays deterministic.
    PromptRequest retry;
    retry.purpose = result.purpose;
    retry.schema_id = schema_id;
    retry.system_text = "You repair malformed structured output.";
    retry.user_text = "The reply below was not valid for schema '" + schema_id +
                      "'. Respond with only the corrected JSON value and nothing else.\n---\n" +
                      result.raw_text;
    {
        std::lock_guard<std::mutex> lock(mutex_);
        call_log_.push_back(retry.purpose);
    }
    CompletionResult second = complete_internal(retry);
    if (auto value = attempt(second.raw_text)) return *value;
    auto recovered = extract_json(second.raw_text);
    auto problems = recovered ? schemas::validate(schema_id, *recovered)
                              : std::vector<std::string>{"no JSON value found in reply"};
    throw make_error("schema-violation",
                     "reply does not satisfy schema '" + schema_id + "': " + join(problems, "; "));
}

std::optional<json> extract_json(const std::string& text) {
    auto try_parse = [](const std::string& candidate) -> std::optional<json> {
        json value = json::parse(candidate, nullptr, false);
        if (value.is_discarded()) return std::nullopt;
        return value;
    };

    if (auto v = try_parse(trim(text))) return v;

    // fenced blocks ``` ... ```
    size_t pos = 0;
    while ((pos = text.find("```", pos)) != std::string::npos) {
        size_t body_start = text.find('\n', pos);
        if (body_start == std::string::npos) break;
        size_t end = text.find("```", body_start);
        if (end == std::string::npos) break;
        if (auto v = try_parse(trim(text.substr(body_start, end - body_start)))) return v;
        pos = end + 3;
    }

    // first balanced top-level {...} or [...]
    for (size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '{' && text[i] != '[') continue;
        char open = text[i];
        char close = open == '{' ? '}' : ']';
        int depth = 0;
        char in_string = 0;
        for (size_t j = i; j < text.size(); ++j) {
            char c = text[j];
            if (in_string) {
                if (c == '\\')
                    ++j;
                else if (c == '"')
                    in_string = 0;
                continue;
            }
            if (c == '"') in_string = '"';
            if (c == open) ++depth;
            if (c == close) {
                --depth;
                if (depth == 0) {
                    if (auto v = try_parse(text.substr(i, j - i + 1))) return v;
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

}  // namespace mcpforge
