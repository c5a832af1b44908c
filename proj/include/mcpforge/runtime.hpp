#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mcpforge/config.hpp"
#include "mcpforge/search.hpp"
#include "mcpforge/security.hpp"

namespace mcpforge {

struct ToolDescriptor {
    std::string tool_name;  // globally unique in the registry
    std::string description;
    json parameters = json::array();  // wire-typed parameter list
    std::string service_ref;          // service directory name
    RiskTier tier;
    std::string endpoint_name;  // name inside the service (pre-prefixing)

    json input_schema() const;  // JSON-schema object for the wire listing
};

struct RegisteredService {
    std::string name;
    fs::path service_dir;
    fs::path python;
    json manifest;
};

class ToolRegistry {
public:
    // Registers a finalized, security-scanned bundle; refuses bundles whose
    // scan is missing or carries unwaived blocking findings. Name collisions
    // resolve by service-name prefixing.
    std::vector<ToolDescriptor> register_bundle(const fs::path& service_dir,
                                                const fs::path& security_report,
                                                const SecurityConfig& security);

    const std::map<std::string, ToolDescriptor>& descriptors() const { return descriptors_; }
    const ToolDescriptor* find(const std::string& tool_name) const;
    const RegisteredService* service_of(const ToolDescriptor& descriptor) const;
    bool empty() const { return descriptors_.empty(); }

    std::string digest() const;  // compact listing for planning prompts
    json to_json() const;
    void save(const fs::path& path) const;
    static ToolRegistry load(const fs::path& path);

private:
    std::map<std::string, ToolDescriptor> descriptors_;
    std::map<std::string, RegisteredService> services_;
};

struct PlanStep {
    std::string tool;
    json arguments = json::object();  // string values starting with '$' reference variables
    std::string bind;                 // output variable name, empty = unbound
};

struct InvocationPlan {
    std::string goal_summary;
    std::vector<PlanStep> steps;

    json to_json() const;
};

struct SessionEntry {
    std::string sub_request;
    InvocationPlan plan;
    json results = json::array();
};

struct SessionState {
    UserQuery original_query;
    std::vector<SessionEntry> history;  // append-only
    json active_variables = json::object();
};

// Runs one tool call of a registered service through its packaged entry
// point, parameterized argv only.
class ServiceExecutor {
public:
    explicit ServiceExecutor(double timeout_seconds = 60.0) : timeout_(timeout_seconds) {}
    virtual ~ServiceExecutor() = default;
    // Returns the service's result envelope {"ok": .., "result"/"error": ..}.
    virtual json call(const RegisteredService& service, const std::string& endpoint_name,
                      const json& arguments) const;

private:
    double timeout_;
};

InvocationPlan plan_invocation(const UserQuery& query, const ToolRegistry& registry,
                               Gateway& gateway);

InvocationPlan replan(const SessionState& session, const UserQuery& sub_request,
                      const ToolRegistry& registry, Gateway& gateway);

struct ExecutionOutcome {
    bool completed = false;
    std::string denial_reason;  // set when governance aborted the plan
    std::string failed_step;    // tool name of a failed step, when any
    json step_results = json::array();
    std::string answer_text;
};

using ConfirmationSource = std::function<Confirmation(const ExecutionPreview&)>;

ExecutionOutcome execute_plan(const InvocationPlan& plan, SessionState& session,
                              const ToolRegistry& registry, Governor& governor,
                              const ServiceExecutor& executor,
                              const ConfirmationSource& confirm = nullptr);

// Newline-delimited JSON-RPC server speaking MCP tool semantics;
// handle_line is a pure request->response map so any transport can drive it.
class McpServer {
public:
    McpServer(const ToolRegistry& registry, Governor& governor, const ServiceExecutor& executor,
              std::set<std::string> pre_granted = {});

    std::optional<std::string> handle_line(const std::string& line);
    bool shutdown_requested() const { return shutdown_; }

    // Blocks serving stdin/stdout until EOF.
    void serve_stdio(std::istream& in, std::ostream& out);

private:
    json handle_request(const json& request);

    const ToolRegistry& registry_;
    Governor& governor_;
    const ServiceExecutor& executor_;
    std::set<std::string> pre_granted_;
    bool shutdown_ = false;
};

}  // namespace mcpforge
