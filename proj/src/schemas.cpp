#include "mcpforge/schemas.hpp"

#include <functional>
#include <map>

namespace mcpforge::schemas {

namespace {

using Problems = std::vector<std::string>;

void need(bool condition, const std::string& message, Problems& out) {
    if (!condition) out.push_back(message);
}

void need_string(const json& v, const std::string& key, Problems& out, bool nonempty = true) {
    if (!v.contains(key) || !v[key].is_string()) {
        out.push_back("missing string field '" + key + "'");
        return;
    }
    if (nonempty && trim(v[key].get<std::string>()).empty())
        out.push_back("field '" + key + "' must be non-empty");
}

void need_bool(const json& v, const std::string& key, Problems& out) {
    if (!v.contains(key) || !v[key].is_boolean()) out.push_back("missing boolean field '" + key + "'");
}

void need_array(const json& v, const std::string& key, Problems& out, size_t min_items = 0) {
    if (!v.contains(key) || !v[key].is_array()) {
        out.push_back("missing array field '" + key + "'");
        return;
    }
    if (v[key].size() < min_items)
        out.push_back("field '" + key + "' needs at least " + std::to_string(min_items) + " items");
}

const std::vector<std::string> kWireTypes = {"text",    "integer",      "real",
                                             "boolean", "list-of-text", "opaque-file-path"};

bool valid_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

Problems check_topic_keywords(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_array(v, "keywords", p, 1);
    if (!p.empty()) return p;
    for (const auto& k : v["keywords"]) {
        need(k.is_string() && !trim(k.get<std::string>()).empty(), "keywords must be non-empty strings", p);
        if (!p.empty()) break;
    }
    return p;
}

Problems check_repo_evaluation(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_string(v, "core_functionality", p);
    need_bool(v, "has_complete_structure", p);
    need_bool(v, "fulfills_query", p);
    need_string(v, "reason", p, /*nonempty=*/false);
    if (!p.empty()) return p;
    bool both_true = v["has_complete_structure"].get<bool>() && v["fulfills_query"].get<bool>();
    need(both_true || !trim(v["reason"].get<std::string>()).empty(),
         "reason must be non-empty when a criterion is false", p);
    return p;
}

Problems check_query_rewrite(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_string(v, "query", p);
    return p;
}

Problems check_code_report(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_array(v, "core_capabilities", p, 1);
    if (!v.contains("module_summaries") || !v["module_summaries"].is_object())
        p.push_back("missing object field 'module_summaries'");
    need_array(v, "dependency_edges", p);
    need_array(v, "doc_links", p);
    need_array(v, "candidate_endpoints", p);
    if (!p.empty()) return p;
    for (const auto& e : v["candidate_endpoints"]) {
        if (!e.is_object()) {
            p.push_back("candidate endpoint must be object");
            break;
        }
        need_string(e, "module", p);
        need_string(e, "symbol", p);
        need_string(e, "tool_name", p);
        need_string(e, "description", p);
        if (!p.empty()) break;
    }
    return p;
}

Problems check_bundle_spec(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_string(v, "service_name", p);
    need_array(v, "endpoints", p, 1);
    if (!p.empty()) return p;
    need(valid_identifier(v["service_name"].get<std::string>()), "service_name must be an identifier", p);
    for (const auto& e : v["endpoints"]) {
        if (!e.is_object()) return {"endpoint must be object"};
        need_string(e, "tool_name", p);
        need_string(e, "description", p);
        need_string(e, "target_module", p);
        need_string(e, "target_symbol", p);
        need_array(e, "params", p);
        if (!e.contains("example_args") || !e["example_args"].is_object())
            p.push_back("endpoint missing object field 'example_args'");
        if (!p.empty()) return p;
        need(valid_identifier(e["tool_name"].get<std::string>()), "tool_name must be an identifier", p);
        for (const auto& param : e["params"]) {
            if (!param.is_object()) return {"param must be object"};
            need_string(param, "name", p);
            need_string(param, "type", p);
            if (!p.empty()) return p;
            std::string t = param["type"].get<std::string>();
            bool known = false;
            for (const auto& w : kWireTypes) known = known || w == t;
            need(known, "unknown wire type '" + t + "'", p);
            if (param.contains("required")) need(param["required"].is_boolean(), "required must be boolean", p);
        }
        if (e.contains("call_args")) need(e["call_args"].is_string(), "call_args must be string", p);
        if (e.contains("service_body")) {
            need(e["service_body"].is_array(), "service_body must be array of lines", p);
        }
        if (!p.empty()) return p;
    }
    return p;
}

Problems check_repair_plan(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_string(v, "root_cause", p);
    need_array(v, "steps", p, 1);
    if (!p.empty()) return p;
    for (const auto& s : v["steps"]) {
        if (!s.is_object()) return {"step must be object"};
        need_string(s, "file", p);
        need(s.contains("start_line") && s["start_line"].is_number_integer(), "step needs integer start_line", p);
        need(s.contains("end_line") && s["end_line"].is_number_integer(), "step needs integer end_line", p);
        need(s.contains("replacement") && s["replacement"].is_string(), "step needs string replacement", p);
        need_string(s, "explanation", p);
        if (!p.empty()) return p;
        need(s["start_line"].get<int>() >= 1, "start_line must be >= 1", p);
        need(s["end_line"].get<int>() >= s["start_line"].get<int>(), "end_line must be >= start_line", p);
    }
    return p;
}

Problems check_invocation_plan(const json& v) {
    Problems p;
    if (!v.is_object()) return {"expected object"};
    need_string(v, "goal_summary", p);
    need_array(v, "steps", p);
    if (!p.empty()) return p;
    for (const auto& s : v["steps"]) {
        if (!s.is_object()) return {"step must be object"};
        need_string(s, "tool", p);
        if (!s.contains("args") || !s["args"].is_object()) p.push_back("step needs object field 'args'");
        if (s.contains("bind") && !s["bind"].is_null())
            need(s["bind"].is_string() && valid_identifier(s["bind"].get<std::string>()),
                 "bind must be an identifier", p);
        if (!p.empty()) return p;
    }
    return p;
}

const std::map<std::string, std::function<Problems(const json&)>>& registry() {
    static const std::map<std::string, std::function<Problems(const json&)>> reg = {
        {"topic-keywords", check_topic_keywords}, {"repo-evaluation", check_repo_evaluation},
        {"query-rewrite", check_query_rewrite},   {"code-report", check_code_report},
        {"bundle-spec", check_bundle_spec},       {"repair-plan", check_repair_plan},
        {"invocation-plan", check_invocation_plan},
    };
    return reg;
}

}  // namespace

bool is_registered(const std::string& schema_id) { return registry().count(schema_id) > 0; }

std::vector<std::string> registered_ids() {
    std::vector<std::string> ids;
    for (const auto& [id, _] : registry()) ids.push_back(id);
    return ids;
}

std::vector<std::string> validate(const std::string& schema_id, const json& value) {
    auto it = registry().find(schema_id);
    if (it == registry().end()) return {"unregistered schema '" + schema_id + "'"};
    return it->second(value);
}

}  // namespace mcpforge::schemas
