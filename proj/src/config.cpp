#include "mcpforge/config.hpp"

#include "mcpforge/errors.hpp"

namespace mcpforge {

json RunConfig::to_json() const {
    json security_json = {
        {"whitelist_roots", security.whitelist_roots},
        {"deny_overrides", security.deny_overrides},
        {"quota",
         {{"max_cpu_seconds", security.quota.max_cpu_seconds},
          {"max_memory_bytes", security.quota.max_memory_bytes},
          {"max_calls", security.quota.max_calls}}},
        {"breaker",
         {{"max_quota_denials", security.breaker.max_quota_denials},
          {"max_high_attempts", security.breaker.max_high_attempts},
          {"window_seconds", security.breaker.window_seconds}}},
        {"waived_rules", security.waived_rules},
        {"waiver_justifications", security.waiver_justifications},
        {"pre_granted_tools", security.pre_granted_tools},
    };
    return json{
        {"workspace_root", workspace_root},
        {"output_root", output_root},
        {"gateway_mode", gateway_mode},
        {"transcript_path", transcript_path},
        {"gateway_endpoint", gateway_endpoint},
        {"gateway_model", gateway_model},
        {"search_k", search_k},
        {"topic_m", topic_m},
        {"max_rounds", max_rounds},
        {"search_index_path", search_index_path},
        {"runtime_paths", runtime_paths},
        {"package_index", package_index},
        {"install_timeout_seconds", install_timeout_seconds},
        {"test_timeout_seconds", test_timeout_seconds},
        {"verify_imports", verify_imports},
        {"security", security_json},
        {"parallelism", parallelism},
        {"zero_timings", zero_timings},
    };
}

namespace {

template <typename T>
void take(const json& v, const std::string& key, T& out) {
    if (v.contains(key)) out = v[key].get<T>();
}

}  // namespace

RunConfig RunConfig::from_json(const json& v) {
    RunConfig c;
    take(v, "workspace_root", c.workspace_root);
    take(v, "output_root", c.output_root);
    take(v, "gateway_mode", c.gateway_mode);
    take(v, "transcript_path", c.transcript_path);
    take(v, "gateway_endpoint", c.gateway_endpoint);
    take(v, "gateway_model", c.gateway_model);
    take(v, "search_k", c.search_k);
    take(v, "topic_m", c.topic_m);
    take(v, "max_rounds", c.max_rounds);
    take(v, "search_index_path", c.search_index_path);
    take(v, "runtime_paths", c.runtime_paths);
    take(v, "package_index", c.package_index);
    take(v, "install_timeout_seconds", c.install_timeout_seconds);
    take(v, "test_timeout_seconds", c.test_timeout_seconds);
    take(v, "verify_imports", c.verify_imports);
    take(v, "parallelism", c.parallelism);
    take(v, "zero_timings", c.zero_timings);
    if (v.contains("security")) {
        const json& s = v["security"];
        take(s, "whitelist_roots", c.security.whitelist_roots);
        take(s, "deny_overrides", c.security.deny_overrides);
        if (s.contains("quota")) {
            take(s["quota"], "max_cpu_seconds", c.security.quota.max_cpu_seconds);
            take(s["quota"], "max_memory_bytes", c.security.quota.max_memory_bytes);
            take(s["quota"], "max_calls", c.security.quota.max_calls);
        }
        if (s.contains("breaker")) {
            take(s["breaker"], "max_quota_denials", c.security.breaker.max_quota_denials);
            take(s["breaker"], "max_high_attempts", c.security.breaker.max_high_attempts);
            take(s["breaker"], "window_seconds", c.security.breaker.window_seconds);
        }
        take(s, "waived_rules", c.security.waived_rules);
        take(s, "waiver_justifications", c.security.waiver_justifications);
        take(s, "pre_granted_tools", c.security.pre_granted_tools);
    }
    return c;
}

RunConfig load_config(const std::string& config_file,
                      const std::map<std::string, std::string>& env,
                      const std::map<std::string, std::string>& flag_overrides) {
    json merged = RunConfig{}.to_json();

    if (!config_file.empty()) {
        json from_file = read_json_file(config_file);
        for (auto& [key, value] : from_file.items()) merged[key] = value;
    }

    auto env_lookup = [&](const char* name) -> std::string {
        auto it = env.find(name);
        return it == env.end() ? "" : it->second;
    };
    if (auto v = env_lookup("MCPFORGE_GATEWAY_URL"); !v.empty()) merged["gateway_endpoint"] = v;
    if (auto v = env_lookup("MCPFORGE_GATEWAY_KEY"); !v.empty()) merged["__gateway_key"] = v;
    if (auto v = env_lookup("MCPFORGE_GATEWAY_MODEL"); !v.empty()) merged["gateway_model"] = v;
    if (auto v = env_lookup("MCPFORGE_SEARCH_TOKEN"); !v.empty()) merged["__search_token"] = v;
    if (auto v = env_lookup("MCPFORGE_WORKSPACE"); !v.empty()) merged["workspace_root"] = v;
    if (auto v = env_lookup("MCPFORGE_OUTPUT"); !v.empty()) merged["output_root"] = v;
    if (auto v = env_lookup("MCPFORGE_MODE"); !v.empty()) merged["gateway_mode"] = v;

    for (const auto& [dotted, raw] : flag_overrides) {
        // Flags land on top of everything else. Values arrive as strings;
        // coerce against the default's type when the key is known.
        json* slot = &merged;
        std::string key = dotted;
        size_t dot;
        while ((dot = key.find('.')) != std::string::npos) {
            slot = &((*slot)[key.substr(0, dot)]);
            key = key.substr(dot + 1);
        }
        json& target = (*slot)[key];
        if (target.is_number_integer())
            target = std::stoll(raw);
        else if (target.is_number())
            target = std::stod(raw);
        else if (target.is_boolean())
            target = (raw == "1" || raw == "true" || raw == "yes");
        else
            target = raw;
    }

    RunConfig config = RunConfig::from_json(merged);
    if (merged.contains("__gateway_key")) config.gateway_key = merged["__gateway_key"].get<std::string>();
    if (merged.contains("__search_token")) config.search_token = merged["__search_token"].get<std::string>();
    validate_config(config);
    return config;
}

void validate_config(const RunConfig& config) {
    if (config.search_k < 1) throw make_error("invalid-config", "search_k must be >= 1");
    if (config.topic_m < 1) throw make_error("invalid-config", "topic_m must be >= 1");
    if (config.max_rounds < 0) throw make_error("invalid-config", "max_rounds must be >= 0");
    if (config.parallelism < 1) throw make_error("invalid-config", "parallelism must be >= 1");
    if (config.gateway_mode != "live" && config.gateway_mode != "replay" &&
        config.gateway_mode != "record")
        throw make_error("invalid-config", "gateway_mode must be live, replay, or record");
}

}  // namespace mcpforge
