#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "mcpforge/util.hpp"

namespace mcpforge {

struct QuotaConfig {
    double max_cpu_seconds = 60.0;
    double max_memory_bytes = 1.0e9;
    int max_calls = 100;
};

struct BreakerConfig {
    int max_quota_denials = 3;
    int max_high_attempts = 5;
    double window_seconds = 600.0;
};

struct SecurityConfig {
    std::vector<std::string> whitelist_roots;  // defaults to the workspace root
    std::vector<std::string> deny_overrides;
    QuotaConfig quota;
    BreakerConfig breaker;
    std::set<std::string> waived_rules;       // rule ids waived by explicit config
    std::map<std::string, std::string> waiver_justifications;
    std::set<std::string> pre_granted_tools;  // confirmation pre-granted per endpoint
};

struct RunConfig {
    std::string workspace_root;
    std::string output_root;

    std::string gateway_mode = "replay";  // live | replay | record
    std::string transcript_path;
    std::string gateway_endpoint;  // env MCPFORGE_GATEWAY_URL
    std::string gateway_key;       // env MCPFORGE_GATEWAY_KEY
    std::string gateway_model = "gpt-4o";

    int search_k = 50;
    int topic_m = 5;
    int max_rounds = 3;

    std::string search_index_path;  // stub index; empty selects the live client
    std::string search_token;       // env MCPFORGE_SEARCH_TOKEN

    std::map<std::string, std::string> runtime_paths;  // version -> interpreter
    std::string package_index;                         // local dir, or "live"
    double install_timeout_seconds = 300.0;
    double test_timeout_seconds = 120.0;
    bool verify_imports = true;

    SecurityConfig security;
    int parallelism = 1;
    bool zero_timings = false;

    json to_json() const;
    static RunConfig from_json(const json& value);
};

// Precedence: command-line flag overrides > environment > config file > defaults.
// `flag_overrides` holds dotted keys ("search_k", "security.quota.max_calls").
RunConfig load_config(const std::string& config_file,
                      const std::map<std::string, std::string>& env,
                      const std::map<std::string, std::string>& flag_overrides);

void validate_config(const RunConfig& config);

}  // namespace mcpforge
