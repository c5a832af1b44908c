#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mcpforge/util.hpp"

namespace mcpforge {

enum class Purpose {
    TopicExtraction,
    RepoEvaluation,
    CodeReport,
    BundleGeneration,
    ImportRepair,
    FailureReview,
    Planning,
};

std::string purpose_name(Purpose p);
std::optional<Purpose> purpose_from_name(const std::string& name);

struct PromptRequest {
    Purpose purpose = Purpose::TopicExtraction;
    std::string system_text;
    std::string user_text;
    std::string schema_id;
    double temperature = 0.0;
};

struct CompletionResult {
    std::string raw_text;
    std::optional<json> parsed;
    std::string backend;  // "live" | "replay"
    std::string transcript_key;
    Purpose purpose = Purpose::TopicExtraction;
};

// Model backends produce raw text for a request. The HTTP backend talks to a
// chat-completions endpoint; tests plug in deterministic scripted backends.
class ModelBackend {
public:
    virtual ~ModelBackend() = default;
    virtual std::string complete_text(const PromptRequest& request) = 0;
    virtual std::string model_name() const = 0;
};

std::shared_ptr<ModelBackend> make_http_backend(const std::string& endpoint,
                                                const std::string& api_key,
                                                const std::string& model);

// Frozen mapping from request content hashes to recorded raw completions.
struct Transcript {
    std::map<std::string, std::string> entries;
    json provenance = json::object();

    static Transcript load(const fs::path& path);
    void save(const fs::path& path) const;
};

enum class GatewayMode { Live, Replay, Record };

class Gateway {
public:
    // Replay gateway over a frozen transcript.
    Gateway(GatewayMode mode, Transcript transcript);
    // Live or record gateway over a backend; record mode appends to the
    // in-memory transcript (persist with save_transcript).
    Gateway(GatewayMode mode, std::shared_ptr<ModelBackend> backend);

    CompletionResult complete(const PromptRequest& request);
    json parse_structured(const CompletionResult& result, const std::string& schema_id);

    static std::string transcript_key(const PromptRequest& request);

    const Transcript& transcript() const { return transcript_; }
    void save_transcript(const fs::path& path) const;
    GatewayMode mode() const { return mode_; }

    // Purposes of every complete() call, for bypass-purity assertions.
    std::vector<Purpose> call_log() const;

private:
    CompletionResult complete_internal(const PromptRequest& request);

    GatewayMode mode_;
    std::shared_ptr<ModelBackend> backend_;
    Transcript transcript_;
    mutable std::mutex mutex_;  // serializes recording appends and the call log
    std::vector<Purpose> call_log_;
};

// Pulls a JSON value out of model text: the whole text, a fenced block, or
// the first balanced object/array.
std::optional<json> extract_json(const std::string& text);

}  // namespace mcpforge
