#pragma once

#include <deque>
#include <functional>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "mcpforge/config.hpp"
#include "mcpforge/generator.hpp"
#include "mcpforge/util.hpp"

namespace mcpforge {

struct PathPolicy {
    std::vector<std::string> whitelist_roots;  // absolute directories
    std::vector<std::string> deny_overrides;   // substring patterns denied even under a root
};

struct SecurityFinding {
    std::string axis;      // confidentiality | integrity | availability
    std::string rule_id;   // path-escape | path-unproven | command-injection | shell-true-dynamic | unbounded-loop
    std::string file;
    int line = 0;
    std::string severity;  // advisory | blocking
    std::string detail;
};

struct SecurityReport {
    std::vector<SecurityFinding> findings;

    bool has_blocking(const std::set<std::string>& waived_rules = {}) const;
    json to_json() const;  // findings grouped by axis
    static SecurityReport from_json(const json& value);
};

std::vector<SecurityFinding> scan_confidentiality(const ServiceBundle& bundle,
                                                  const PathPolicy& policy);
std::vector<SecurityFinding> scan_integrity(const ServiceBundle& bundle);
std::vector<SecurityFinding> scan_availability(const ServiceBundle& bundle);  // advisory only
SecurityReport scan_bundle(const ServiceBundle& bundle, const PathPolicy& policy);

// ---- run-time governance ----

struct EndpointProfile {
    std::string tool_name;
    std::vector<std::string> risk_annotations;  // from the bundle manifest
    bool writes_outside_workspace = false;      // from scan results when known
    json parameters = json::array();
};

struct RiskTier {
    std::string tier;  // low | medium | high
    std::string rationale;
};

RiskTier classify_risk(const EndpointProfile& endpoint);

struct CostEstimate {
    double predicted_cpu_seconds = 0.0;
    double predicted_memory_bytes = 0.0;
    int predicted_call_count = 1;
    std::string basis;  // static-heuristic | historical
    std::string note;

    json to_json() const;
};

struct ExecutionPreview {
    std::string endpoint;
    std::string tier;
    std::string expected_scope;
    std::vector<std::string> affected_objects;
    bool reversible = false;
    std::vector<std::string> side_effects;
    CostEstimate estimated_cost;
    uint64_t seq = 0;  // persisted-order stamp assigned by the governor

    json to_json() const;
};

enum class Confirmation { Granted, Withheld };

struct Decision {
    bool allow = false;
    std::string reason;  // allowed | breaker-tripped | quota-exceeded | confirmation-required | preview-required
    uint64_t seq = 0;
};

// Serialized authority over previews, authorization decisions, and the
// behavioural circuit breaker. All events append to one decision log.
class Governor {
public:
    Governor(SecurityConfig config, fs::path decision_log_path,
             std::function<double()> clock = nullptr);

    CostEstimate estimate_cost(const EndpointProfile& endpoint, const json& arguments);
    ExecutionPreview build_preview(const EndpointProfile& endpoint, const json& arguments);
    Decision authorize(const ExecutionPreview& preview, Confirmation confirmation);

    void record_execution(const std::string& tool_name, double cpu_seconds, bool ok);
    void register_undo(const std::string& tool_name);
    void reset_breaker();

    bool breaker_tripped() const;
    std::string trip_reason() const;
    std::vector<json> decision_log() const;
    const SecurityConfig& config() const { return config_; }

private:
    void append_log(json event);  // caller holds the mutex
    void prune_window(double now);
    void maybe_trip(double now);

    SecurityConfig config_;
    fs::path log_path_;
    std::function<double()> clock_;
    mutable std::mutex mutex_;
    std::deque<std::pair<double, std::string>> window_;  // (time, event kind)
    bool tripped_ = false;
    std::string trip_reason_;
    std::map<std::string, std::vector<double>> run_history_;
    std::set<std::string> undo_registry_;
    std::vector<json> log_;
    uint64_t seq_ = 0;
};

}  // namespace mcpforge
