#include "mcpforge/runtime.hpp"

#include <algorithm>
#include <chrono>
#include <istream>
#include <ostream>

#include "mcpforge/errors.hpp"
#include "mcpforge/subprocess.hpp"

namespace mcpforge {

namespace {

const char* kPlanningSystem =
    "You plan tool invocations for a user request against a registry of MCP tools. Reply with "
    "JSON {\"goal_summary\", \"steps\": [{\"tool\", \"args\", \"bind\"}..]}. Steps run in "
    "order; bind names a variable holding the step result, and later args may reference bound "
    "variables as \"$name\". Use only registered tools and keep plans straight-line.";

bool is_variable_ref(const json& value) {
    return value.is_string() && !value.get<std::string>().empty() &&
           value.get<std::string>()[0] == '$';
}

void validate_plan(const InvocationPlan& plan, const ToolRegistry& registry,
                   const std::set<std::string>& pre_bound = {}) {
    std::set<std::string> bound = pre_bound;
    for (const auto& step : plan.steps) {
        if (registry.find(step.tool) == nullptr)
            throw make_error("unknown-tool", "plan names an unregistered tool: " + step.tool);
        for (const auto& [name, value] : step.arguments.items()) {
            (void)name;
            if (is_variable_ref(value)) {
                std::string var = value.get<std::string>().substr(1);
                if (bound.count(var) == 0)
                    throw make_error("unbound-variable",
                                     "step references $" + var + " before it is bound");
            }
        }
        if (!step.bind.empty()) bound.insert(step.bind);
    }
}

InvocationPlan parse_plan_json(const json& parsed, const ToolRegistry& registry,
                               const std::set<std::string>& pre_bound = {}) {
    InvocationPlan plan;
    plan.goal_summary = parsed.at("goal_summary").get<std::string>();
    for (const auto& s : parsed.at("steps")) {
        PlanStep step;
        step.tool = s.at("tool").get<std::string>();
        step.arguments = s.value("args", json::object());
        if (s.contains("bind") && s["bind"].is_string()) step.bind = s["bind"].get<std::string>();
        plan.steps.push_back(std::move(step));
    }
    validate_plan(plan, registry, pre_bound);
    return plan;
}

}  // namespace

json ToolDescriptor::input_schema() const {
    json properties = json::object();
    json required = json::array();
    for (const auto& param : parameters) {
        std::string type = param.value("type", "text");
        json schema;
        if (type == "integer")
            schema = {{"type", "integer"}};
        else if (type == "real")
            schema = {{"type", "number"}};
        else if (type == "boolean")
            schema = {{"type", "boolean"}};
        else if (type == "list-of-text")
            schema = {{"type", "array"}, {"items", {{"type", "string"}}}};
        else
            schema = {{"type", "string"}};
        properties[param.value("name", "")] = schema;
        if (param.value("required", false)) required.push_back(param.value("name", ""));
    }
    return json{{"type", "object"}, {"properties", properties}, {"required", required}};
}

std::vector<ToolDescriptor> ToolRegistry::register_bundle(const fs::path& service_dir,
                                                          const fs::path& security_report,
                                                          const SecurityConfig& security) {
    if (!fs::exists(security_report))
        throw make_error("unscanned-bundle",
                         "no security report for " + service_dir.string() + "; refusing to register");
    SecurityReport report = SecurityReport::from_json(read_json_file(security_report));
    if (report.has_blocking(security.waived_rules))
        throw make_error("unscanned-bundle",
                         "security scan has unwaived blocking findings; refusing to register");

    json manifest = read_json_file(service_dir / "manifest.json");
    RegisteredService service;
    service.name = manifest.value("service_name", service_dir.filename().string());
    service.service_dir = service_dir;
    service.python = fs::path(manifest.value("python", "python3"));
    service.manifest = manifest;
    services_[service.name] = service;

    std::vector<ToolDescriptor> registered;
    for (const auto& endpoint : manifest.value("endpoints", json::array())) {
        ToolDescriptor descriptor;
        descriptor.endpoint_name = endpoint.value("tool_name", "");
        descriptor.tool_name = descriptor.endpoint_name;
        descriptor.description = endpoint.value("description", "");
        descriptor.parameters = endpoint.value("parameters", json::array());
        descriptor.service_ref = service.name;

        EndpointProfile profile;
        profile.tool_name = descriptor.endpoint_name;
        profile.risk_annotations =
            endpoint.value("risk_annotations", std::vector<std::string>{"none"});
        descriptor.tier = classify_risk(profile);

        if (descriptors_.count(descriptor.tool_name) > 0) {
            // collision: prefix with the service name
            descriptor.tool_name = service.name + "__" + descriptor.endpoint_name;
            if (descriptors_.count(descriptor.tool_name) > 0)
                throw make_error("collision-unresolvable",
                                 "tool name collision persists after prefixing: " +
                                     descriptor.tool_name);
        }
        descriptors_[descriptor.tool_name] = descriptor;
        registered.push_back(descriptor);
    }
    return registered;
}

const ToolDescriptor* ToolRegistry::find(const std::string& tool_name) const {
    auto it = descriptors_.find(tool_name);
    return it == descriptors_.end() ? nullptr : &it->second;
}

const RegisteredService* ToolRegistry::service_of(const ToolDescriptor& descriptor) const {
    auto it = services_.find(descriptor.service_ref);
    return it == services_.end() ? nullptr : &it->second;
}

std::string ToolRegistry::digest() const {
    std::string out;
    for (const auto& [name, d] : descriptors_) {
        std::vector<std::string> params;
        for (const auto& p : d.parameters)
            params.push_back(p.value("name", "") + ": " + p.value("type", "text"));
        out += name + "(" + join(params, ", ") + ") [" + d.tier.tier + "] - " + d.description + "\n";
    }
    return out;
}

json ToolRegistry::to_json() const {
    json services = json::object();
    for (const auto& [name, s] : services_)
        services[name] = {{"service_dir", s.service_dir.string()},
                          {"python", s.python.string()},
                          {"manifest", s.manifest}};
    json tools = json::array();
    for (const auto& [name, d] : descriptors_)
        tools.push_back({{"tool_name", name},
                         {"endpoint_name", d.endpoint_name},
                         {"description", d.description},
                         {"parameters", d.parameters},
                         {"service_ref", d.service_ref},
                         {"tier", d.tier.tier},
                         {"tier_rationale", d.tier.rationale}});
    return json{{"schema_version", 1}, {"services", services}, {"tools", tools}};
}

void ToolRegistry::save(const fs::path& path) const { write_json_file(path, to_json()); }

ToolRegistry ToolRegistry::load(const fs::path& path) {
    ToolRegistry registry;
    json value = read_json_file(path);
    for (auto& [name, s] : value.at("services").items()) {
        RegisteredService service;
        service.name = name;
        service.service_dir = fs::path(s.value("service_dir", ""));
        service.python = fs::path(s.value("python", "python3"));
        service.manifest = s.value("manifest", json::object());
        registry.services_[name] = std::move(service);
    }
    for (const auto& t : value.at("tools")) {
        ToolDescriptor d;
        d.tool_name = t.value("tool_name", "");
        d.endpoint_name = t.value("endpoint_name", "");
        d.description = t.value("description", "");
        d.parameters = t.value("parameters", json::array());
        d.service_ref = t.value("service_ref", "");
        d.tier = {t.value("tier", "low"), t.value("tier_rationale", "")};
        registry.descriptors_[d.tool_name] = std::move(d);
    }
    return registry;
}

json InvocationPlan::to_json() const {
    json step_list = json::array();
    for (const auto& s : steps)
        step_list.push_back({{"tool", s.tool},
                             {"args", s.arguments},
                             {"bind", s.bind.empty() ? json(nullptr) : json(s.bind)}});
    return json{{"goal_summary", goal_summary}, {"steps", step_list}};
}

json ServiceExecutor::call(const RegisteredService& service, const std::string& endpoint_name,
                           const json& arguments) const {
    RunSpec spec;
    spec.argv = {service.python.string(), (service.service_dir / "main.py").string(), "--call",
                 endpoint_name, "--args-json", arguments.dump()};
    spec.cwd = service.service_dir.string();
    std::string pythonpath = (service.service_dir / service.manifest.value("lib_path", "lib")).string() +
                             ":" + service.service_dir.string();
    spec.env = {{"PATH", "/usr/local/bin:/usr/bin:/bin"},
                {"HOME", service.service_dir.string()},
                {"LC_ALL", "C"},
                {"PYTHONDONTWRITEBYTECODE", "1"},
                {"PYTHONPATH", pythonpath}};
    spec.timeout_seconds = timeout_;
    auto run = run_process(spec);
    if (run.timed_out)
        return json{{"ok", false},
                    {"error", {{"type", "Timeout"}, {"message", "tool call timed out"}}}};
    auto lines = split_lines(run.out);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        json parsed = json::parse(*it, nullptr, false);
        if (!parsed.is_discarded() && parsed.is_object() && parsed.contains("ok")) return parsed;
    }
    return json{{"ok", false},
                {"error", {{"type", "ServiceError"},
                           {"message", trim(run.err).substr(0, 400)}}}};
}

InvocationPlan plan_invocation(const UserQuery& query, const ToolRegistry& registry,
                               Gateway& gateway) {
    if (registry.empty()) throw make_error("invalid-argument", "registry has no tools to plan with");

    PromptRequest request;
    request.purpose = Purpose::Planning;
    request.system_text = kPlanningSystem;
    request.user_text = "Registered tools:\n" + registry.digest() + "\nUser query:\n" + query.text;
    request.schema_id = "invocation-plan";
    auto completion = gateway.complete(request);
    return parse_plan_json(gateway.parse_structured(completion, request.schema_id), registry);
}

InvocationPlan replan(const SessionState& session, const UserQuery& sub_request,
                      const ToolRegistry& registry, Gateway& gateway) {
    if (session.history.empty())
        throw make_error("invalid-argument", "replanning requires at least one session entry");

    std::string history_digest;
    for (size_t i = 0; i < session.history.size(); ++i) {
        const auto& entry = session.history[i];
        history_digest += std::to_string(i + 1) + ". request: " + entry.sub_request + "\n   tools: ";
        for (const auto& step : entry.plan.steps) history_digest += step.tool + " ";
        history_digest += "\n";
    }
    std::set<std::string> bound;
    std::string bound_list;
    for (const auto& [name, _] : session.active_variables.items()) {
        bound.insert(name);
        bound_list += "$" + name + " ";
    }

    PromptRequest request;
    request.purpose = Purpose::Planning;
    request.system_text = kPlanningSystem;
    request.user_text = "Registered tools:\n" + registry.digest() + "\nSession so far:\n" +
                        history_digest + "Bound variables: " +
                        (bound_list.empty() ? "(none)" : bound_list) + "\nOriginal query:\n" +
                        session.original_query.text + "\nNew sub-request:\n" + sub_request.text;
    request.schema_id = "invocation-plan";
    auto completion = gateway.complete(request);
    return parse_plan_json(gateway.parse_structured(completion, request.schema_id), registry, bound);
}

ExecutionOutcome execute_plan(const InvocationPlan& plan, SessionState& session,
                              const ToolRegistry& registry, Governor& governor,
                              const ServiceExecutor& executor,
                              const ConfirmationSource& confirm) {
    std::set<std::string> pre_bound;
    for (const auto& [name, _] : session.active_variables.items()) pre_bound.insert(name);
    validate_plan(plan, registry, pre_bound);

    ExecutionOutcome outcome;
    json variables = session.active_variables;
    std::vector<std::string> answer_lines;

    for (const auto& step : plan.steps) {
        const ToolDescriptor* descriptor = registry.find(step.tool);
        const RegisteredService* service = registry.service_of(*descriptor);
        if (service == nullptr) throw make_error("unknown-tool", "service missing for " + step.tool);

        json arguments = json::object();
        for (const auto& [name, value] : step.arguments.items()) {
            if (is_variable_ref(value)) {
                std::string var = value.get<std::string>().substr(1);
                arguments[name] = variables.contains(var) ? variables[var] : json(nullptr);
            } else {
                arguments[name] = value;
            }
        }

        EndpointProfile profile;
        profile.tool_name = descriptor->tool_name;
        profile.parameters = descriptor->parameters;
        for (const auto& endpoint :
             service->manifest.value("endpoints", json::array()))
            if (endpoint.value("tool_name", "") == descriptor->endpoint_name)
                profile.risk_annotations =
                    endpoint.value("risk_annotations", std::vector<std::string>{"none"});
        if (profile.risk_annotations.empty()) profile.risk_annotations = {"none"};

        ExecutionPreview preview = governor.build_preview(profile, arguments);
        Confirmation confirmation =
            confirm ? confirm(preview) : Confirmation::Withheld;
        Decision decision = governor.authorize(preview, confirmation);
        if (!decision.allow) {
            // One deny aborts the remaining steps.
            outcome.denial_reason = step.tool + ": " + decision.reason;
            answer_lines.push_back("denied " + step.tool + " (" + decision.reason + ")");
            break;
        }

        auto call_started = std::chrono::steady_clock::now();
        json envelope = executor.call(*service, descriptor->endpoint_name, arguments);
        double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - call_started).count();
        governor.record_execution(descriptor->tool_name, elapsed, envelope.value("ok", false));

        json step_record = {{"tool", step.tool}, {"arguments", arguments}, {"envelope", envelope}};
        outcome.step_results.push_back(step_record);

        if (!envelope.value("ok", false)) {
            outcome.failed_step = step.tool;
            answer_lines.push_back(step.tool + " failed: " +
                                   envelope.value("error", json::object()).value("message", ""));
            break;
        }
        if (!step.bind.empty()) variables[step.bind] = envelope["result"];
        answer_lines.push_back(step.tool + " -> " + envelope["result"].dump());
    }

    outcome.completed = outcome.denial_reason.empty() && outcome.failed_step.empty();
    if (outcome.completed && !outcome.step_results.empty()) {
        answer_lines.push_back(
            "answer: " + outcome.step_results.back()["envelope"]["result"].dump());
    }
    outcome.answer_text = join(answer_lines, "\n");

    SessionEntry entry;
    entry.sub_request = plan.goal_summary;
    entry.plan = plan;
    entry.results = outcome.step_results;
    session.history.push_back(std::move(entry));
    session.active_variables = variables;
    return outcome;
}

McpServer::McpServer(const ToolRegistry& registry, Governor& governor,
                     const ServiceExecutor& executor, std::set<std::string> pre_granted)
    : registry_(registry), governor_(governor), executor_(executor),
      pre_granted_(std::move(pre_granted)) {}

json McpServer::handle_request(const json& request) {
    std::string method = request.value("method", "");
    json id = request.contains("id") ? request["id"] : json(nullptr);
    json params = request.value("params", json::object());

    auto result = [&](json value) {
        return json{{"jsonrpc", "2.0"}, {"id", id}, {"result", std::move(value)}};
    };
    auto error = [&](int code, const std::string& message) {
        return json{{"jsonrpc", "2.0"}, {"id", id},
                    {"error", {{"code", code}, {"message", message}}}};
    };

    if (method == "initialize") {
        return result(json{{"protocolVersion", "2024-11-05"},
                           {"capabilities", {{"tools", json::object()}}},
                           {"serverInfo", {{"name", "mcpforge"}, {"version", "0.1.0"}}}});
    }
    if (method == "tools/list") {
        json tools = json::array();
        for (const auto& [name, descriptor] : registry_.descriptors())
            tools.push_back({{"name", name},
                             {"description", descriptor.description},
                             {"inputSchema", descriptor.input_schema()}});
        return result(json{{"tools", tools}});
    }
    if (method == "tools/call") {
        std::string name = params.value("name", "");
        json arguments = params.value("arguments", json::object());
        const ToolDescriptor* descriptor = registry_.find(name);
        if (descriptor == nullptr) return error(-32602, "unknown tool: " + name);

        // Wire-level schema gate before any execution.
        std::vector<std::string> problems;
        std::set<std::string> known;
        for (const auto& p : descriptor->parameters) known.insert(p.value("name", ""));
        for (const auto& [arg_name, _] : arguments.items())
            if (known.count(arg_name) == 0) problems.push_back("unknown parameter: " + arg_name);
        for (const auto& p : descriptor->parameters)
            if (p.value("required", false) && !arguments.contains(p.value("name", "")))
                problems.push_back("missing required parameter: " + p.value("name", ""));
        if (!problems.empty()) {
            json envelope = {{"ok", false},
                             {"error", {{"type", "ParameterError"}, {"message", join(problems, "; ")}}}};
            return result(json{{"content", json::array({json{{"type", "text"},
                                                             {"text", envelope.dump()}}})},
                               {"isError", true}});
        }

        const RegisteredService* service = registry_.service_of(*descriptor);
        EndpointProfile profile;
        profile.tool_name = descriptor->tool_name;
        profile.parameters = descriptor->parameters;
        profile.risk_annotations = {"none"};
        for (const auto& endpoint : service->manifest.value("endpoints", json::array()))
            if (endpoint.value("tool_name", "") == descriptor->endpoint_name)
                profile.risk_annotations =
                    endpoint.value("risk_annotations", std::vector<std::string>{"none"});

        ExecutionPreview preview = governor_.build_preview(profile, arguments);
        Confirmation confirmation = pre_granted_.count(name) > 0 ? Confirmation::Granted
                                                                 : Confirmation::Withheld;
        Decision decision = governor_.authorize(preview, confirmation);
        json envelope;
        if (!decision.allow) {
            envelope = {{"ok", false},
                        {"error", {{"type", "GovernanceDenied"}, {"message", decision.reason}}}};
        } else {
            auto started = std::chrono::steady_clock::now();
            envelope = executor_.call(*service, descriptor->endpoint_name, arguments);
            governor_.record_execution(
                name,
                std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count(),
                envelope.value("ok", false));
        }
        return result(json{{"content", json::array({json{{"type", "text"},
                                                         {"text", envelope.dump()}}})},
                           {"isError", !envelope.value("ok", false)}});
    }
    if (method == "ping") return result(json::object());
    if (method == "shutdown") {
        shutdown_ = true;
        return result(json::object());
    }
    if (starts_with(method, "notifications/")) return json();  // no reply
    return error(-32601, "unknown method: " + method);
}

std::optional<std::string> McpServer::handle_line(const std::string& line) {
    if (trim(line).empty()) return std::nullopt;
    json request = json::parse(line, nullptr, false);
    if (request.is_discarded()) {
        return json{{"jsonrpc", "2.0"}, {"id", nullptr},
                    {"error", {{"code", -32700}, {"message", "parse error"}}}}.dump();
    }
    json reply = handle_request(request);
    if (reply.is_null() || reply.empty()) return std::nullopt;
    return reply.dump();
}

void McpServer::serve_stdio(std::istream& in, std::ostream& out) {
    std::string line;
    while (!shutdown_ && std::getline(in, line)) {
        auto reply = handle_line(line);
        if (reply) {
            out << *reply << "\n";
            out.flush();
        }
    }
}

}  // namespace mcpforge
