#include "mcpforge/generator.hpp"

#include <algorithm>
#include <set>

#include "mcpforge/pysrc.hpp"

namespace mcpforge {

namespace {

const char* kGenerateSystem =
    "You turn a repository functionality report into an MCP service bundle plan. Reply with JSON "
    "{\"service_name\", \"endpoints\": [{\"tool_name\", \"description\", \"target_module\", "
    "\"target_symbol\", \"params\": [{\"name\", \"type\", \"required\"}], \"call_args\", "
    "\"example_args\", \"service_body\"}..]}. Wire types: text, integer, real, boolean, "
    "list-of-text, opaque-file-path. call_args is the Python argument text used to invoke the "
    "target symbol. service_body is the forwarding stub body, normally a single "
    "'return await adapter.<op>(...)' line. example_args must make the target succeed.";

std::string indent_lines(const std::vector<std::string>& lines, const std::string& pad) {
    std::string out;
    for (const auto& line : lines) out += pad + line + "\n";
    return out;
}

bool is_identifier(const std::string& s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    for (char c : s)
        if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
    return true;
}

std::string def_parameter_list(const json& params) {
    std::vector<std::string> rendered;
    for (const auto& p : params) {
        std::string item = p["name"].get<std::string>();
        if (!p.value("required", true)) item += "=None";
        rendered.push_back(item);
    }
    return join(rendered, ", ");
}

std::string forward_argument_list(const json& params) {
    std::vector<std::string> rendered;
    for (const auto& p : params) {
        std::string name = p["name"].get<std::string>();
        rendered.push_back(name + "=" + name);
    }
    return join(rendered, ", ");
}

std::string render_adapter(const std::string& service_name,
                           const std::vector<EndpointDef>& endpoints) {
    std::string out;
    out += "\"\"\"Async adapter layer for the " + service_name + " MCP service.\n\n";
    out += "Wraps repository callables behind non-blocking operations returning a\n";
    out += "structured result envelope.\n\"\"\"\n\n";
    out += "import asyncio\n";
    out += "import sys\n";
    out += "import traceback\n\n";
    for (const auto& e : endpoints)
        out += "from " + e.target_module + " import " + e.target_symbol + " as _target_" +
               e.tool_name + "\n";
    out += "\n\n";
    out += "def _jsonable(value):\n";
    out += "    if value is None or isinstance(value, (bool, int, float, str)):\n";
    out += "        return value\n";
    out += "    if isinstance(value, (list, tuple, set)):\n";
    out += "        return [_jsonable(item) for item in value]\n";
    out += "    if isinstance(value, dict):\n";
    out += "        return {str(key): _jsonable(item) for key, item in value.items()}\n";
    out += "    return repr(value)\n\n\n";
    out += "def _ok(result):\n";
    out += "    return {\"ok\": True, \"result\": _jsonable(result)}\n\n\n";
    out += "def _error(exc):\n";
    out += "    frames = [\n";
    out += "        frame\n";
    out += "        for frame in traceback.extract_tb(exc.__traceback__)\n";
    out += "        if not frame.filename.startswith(sys.base_prefix)\n";
    out += "    ]\n";
    out += "    return {\n";
    out += "        \"ok\": False,\n";
    out += "        \"error\": {\n";
    out += "            \"type\": type(exc).__name__,\n";
    out += "            \"message\": str(exc),\n";
    out += "            \"trace\": \"\".join(traceback.format_list(frames)),\n";
    out += "        },\n";
    out += "    }\n";
    for (const auto& e : endpoints) {
        std::string call = "_target_" + e.tool_name;
        std::string args = e.call_args;
        out += "\n\n";
        out += "async def " + e.tool_name + "(" + def_parameter_list(e.params) + "):\n";
        out += "    \"\"\"" + replace_all(e.description, "\"\"\"", "'''") + "\"\"\"\n";
        out += "    try:\n";
        out += "        result = await asyncio.to_thread(" + call;
        if (!trim(args).empty()) out += ", " + args;
        out += ")\n";
        out += "        return _ok(result)\n";
        out += "    except Exception as exc:\n";
        out += "        return _error(exc)\n";
    }
    return out;
}

std::string render_service(const std::string& service_name,
                           const std::vector<EndpointDef>& endpoints) {
    std::string out;
    out += "\"\"\"MCP tool layer for " + service_name + ": @tool registration and parameter "
           "forwarding only.\"\"\"\n\n";
    out += "import adapter\n\n";
    out += "TOOLS = {}\n\n\n";
    out += "def tool(name, description, parameters):\n";
    out += "    def _register(handler):\n";
    out += "        TOOLS[name] = {\n";
    out += "            \"name\": name,\n";
    out += "            \"description\": description,\n";
    out += "            \"parameters\": parameters,\n";
    out += "            \"handler\": handler,\n";
    out += "        }\n";
    out += "        return handler\n";
    out += "    return _register\n";
    for (const auto& e : endpoints) {
        out += "\n\n";
        out += "@tool(\n";
        out += "    " + python_literal(json(e.tool_name)) + ",\n";
        out += "    " + python_literal(json(e.description)) + ",\n";
        out += "    " + python_literal(e.params) + ",\n";
        out += ")\n";
        out += "async def " + e.tool_name + "(" + def_parameter_list(e.params) + "):\n";
        out += indent_lines(e.service_body, "    ");
    }
    return out;
}

std::string render_tests(const std::string& service_name,
                         const std::vector<EndpointDef>& endpoints) {
    std::string out;
    out += "\"\"\"Generated endpoint tests for the " + service_name + " MCP service.\"\"\"\n\n";
    out += "import asyncio\n\n";
    out += "import adapter\n";
    for (const auto& e : endpoints) {
        out += "\n\n";
        out += "def test_" + e.tool_name + "():\n";
        out += "    result = asyncio.run(adapter." + e.tool_name + "(**" +
               python_literal(e.example_args) + "))\n";
        out += "    assert result[\"ok\"] is True, result\n";
    }
    return out;
}

std::string render_main(const std::string& service_name,
                        const std::vector<std::string>& required_modules) {
    json modules = json::array();
    for (const auto& m : required_modules) modules.push_back(m);
    std::string out;
    out += "\"\"\"Entry point for the " + service_name + " MCP service.\"\"\"\n\n";
    out += "import argparse\n";
    out += "import asyncio\n";
    out += "import importlib\n";
    out += "import json\n";
    out += "import sys\n\n";
    out += "import mcp_service\n\n";
    out += "SERVICE_NAME = " + python_literal(json(service_name)) + "\n";
    out += "SERVICE_VERSION = \"0.1.0\"\n";
    out += "PROTOCOL_VERSION = \"2024-11-05\"\n";
    out += "REQUIRED_MODULES = " + python_literal(modules) + "\n\n";
    out += R"PY(WIRE_TYPES = {
    "text": str,
    "integer": int,
    "real": (int, float),
    "boolean": bool,
    "list-of-text": list,
    "opaque-file-path": str,
}


def check_dependencies():
    missing = []
    for module in REQUIRED_MODULES:
        try:
            importlib.import_module(module)
        except Exception as exc:
            missing.append({"module": module, "error": str(exc)})
    return missing


def tool_listing():
    tools = []
    for name in sorted(mcp_service.TOOLS):
        entry = mcp_service.TOOLS[name]
        properties = {}
        required = []
        for param in entry["parameters"]:
            schema = {"type": "string"}
            if param["type"] == "integer":
                schema = {"type": "integer"}
            elif param["type"] == "real":
                schema = {"type": "number"}
            elif param["type"] == "boolean":
                schema = {"type": "boolean"}
            elif param["type"] == "list-of-text":
                schema = {"type": "array", "items": {"type": "string"}}
            properties[param["name"]] = schema
            if param.get("required"):
                required.append(param["name"])
        tools.append(
            {
                "name": name,
                "description": entry["description"],
                "inputSchema": {
                    "type": "object",
                    "properties": properties,
                    "required": required,
                },
            }
        )
    return tools


def check_arguments(entry, arguments):
    problems = []
    known = {param["name"] for param in entry["parameters"]}
    for name in sorted(arguments):
        if name not in known:
            problems.append("unknown parameter: %s" % name)
    for param in entry["parameters"]:
        name = param["name"]
        if name not in arguments:
            if param.get("required"):
                problems.append("missing required parameter: %s" % name)
            continue
        value = arguments[name]
        if isinstance(value, bool) and param["type"] in ("integer", "real"):
            problems.append("parameter %s has wrong type" % name)
        elif not isinstance(value, WIRE_TYPES[param["type"]]):
            problems.append("parameter %s has wrong type" % name)
        elif param["type"] == "list-of-text" and not all(
            isinstance(item, str) for item in value
        ):
            problems.append("parameter %s must contain only strings" % name)
    return problems


def call_tool(name, arguments):
    entry = mcp_service.TOOLS.get(name)
    if entry is None:
        return {"ok": False, "error": {"type": "UnknownTool", "message": str(name)}}
    problems = check_arguments(entry, arguments)
    if problems:
        return {"ok": False, "error": {"type": "ParameterError", "message": "; ".join(problems)}}
    return asyncio.run(entry["handler"](**arguments))


def _result(request_id, result):
    return {"jsonrpc": "2.0", "id": request_id, "result": result}


def _error(request_id, code, message):
    return {"jsonrpc": "2.0", "id": request_id, "error": {"code": code, "message": message}}


def handle_request(message):
    method = message.get("method")
    request_id = message.get("id")
    params = message.get("params") or {}
    if method == "initialize":
        return _result(
            request_id,
            {
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {"tools": {}},
                "serverInfo": {"name": SERVICE_NAME, "version": SERVICE_VERSION},
            },
        )
    if method == "tools/list":
        return _result(request_id, {"tools": tool_listing()})
    if method == "tools/call":
        envelope = call_tool(params.get("name"), params.get("arguments") or {})
        return _result(
            request_id,
            {
                "content": [{"type": "text", "text": json.dumps(envelope, sort_keys=True)}],
                "isError": not envelope.get("ok", False),
            },
        )
    if method == "ping":
        return _result(request_id, {})
    if isinstance(method, str) and method.startswith("notifications/"):
        return None
    return _error(request_id, -32601, "unknown method: %s" % method)


def serve_stdio():
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except ValueError:
            reply = _error(None, -32700, "parse error")
        else:
            reply = handle_request(message)
        if reply is not None:
            sys.stdout.write(json.dumps(reply, sort_keys=True) + "\n")
            sys.stdout.flush()


def main(argv=None):
    parser = argparse.ArgumentParser(prog=SERVICE_NAME)
    parser.add_argument("--list", action="store_true", help="print the tool listing and exit")
    parser.add_argument("--call", metavar="TOOL", help="invoke one tool and exit")
    parser.add_argument("--args-json", default="{}", help="JSON object of tool arguments")
    args = parser.parse_args(argv)

    missing = check_dependencies()
    if missing:
        sys.stderr.write(json.dumps({"missing_dependencies": missing}) + "\n")
        return 3

    if args.list:
        print(json.dumps({"tools": tool_listing()}, sort_keys=True))
        return 0
    if args.call:
        envelope = call_tool(args.call, json.loads(args.args_json))
        print(json.dumps(envelope, sort_keys=True))
        return 0 if envelope.get("ok") else 1
    serve_stdio()
    return 0


if __name__ == "__main__":
    sys.exit(main())
)PY";
    return out;
}

std::string render_launcher(const std::string& service_name) {
    std::string out;
    out += "\"\"\"Launcher for the " + service_name + " MCP service.\"\"\"\n\n";
    out += "import os\n";
    out += "import sys\n\n\n";
    out += "def main():\n";
    out += "    here = os.path.dirname(os.path.abspath(__file__))\n";
    out += "    os.chdir(here)\n";
    out += "    os.execv(sys.executable, [sys.executable, os.path.join(here, \"main.py\")] + sys.argv[1:])\n\n\n";
    out += "if __name__ == \"__main__\":\n";
    out += "    main()\n";
    return out;
}

json build_manifest(const std::string& service_name, const std::vector<EndpointDef>& endpoints,
                    const std::vector<std::string>& dependencies) {
    json endpoint_list = json::array();
    for (const auto& e : endpoints) {
        endpoint_list.push_back({
            {"tool_name", e.tool_name},
            {"description", e.description},
            {"parameters", e.params},
            {"target", {{"module", e.target_module}, {"symbol", e.target_symbol}}},
            {"risk_annotations", e.risk_annotations},
            {"example_call", {{"tool", e.tool_name}, {"arguments", e.example_args}}},
        });
    }
    return json{
        {"schema_version", 1},
        {"service_name", service_name},
        {"endpoints", endpoint_list},
        {"dependencies", dependencies},
        {"usage",
         "Start the service with `python start_mcp.py` (newline-delimited JSON-RPC on stdio); "
         "one-shot calls: `python main.py --call <tool> --args-json '<json>'`."},
    };
}

// Accepts only forwarding stubs: optional docstring, then exactly one
// `return await adapter.<op>(<forwarded args>)`.
bool forwarding_only(const pysrc::Function& fn, std::string& detail) {
    std::vector<std::string> statements;
    for (size_t i = 0; i < fn.body.size(); ++i) {
        std::string text = trim(fn.body[i].text);
        if (i == 0 && (starts_with(text, "\"\"\"") || starts_with(text, "'''") ||
                       starts_with(text, "\"") || starts_with(text, "'")))
            continue;  // docstring
        statements.push_back(text);
    }
    if (statements.size() != 1) {
        detail = "endpoint body must be a single forwarding statement, found " +
                 std::to_string(statements.size());
        return false;
    }
    const std::string& stmt = statements.front();
    if (!starts_with(stmt, "return await adapter.")) {
        detail = "endpoint body does not forward to the adapter: " + stmt;
        return false;
    }
    auto open = stmt.find('(');
    auto close = stmt.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close != stmt.size() - 1) {
        detail = "malformed forwarding call: " + stmt;
        return false;
    }
    std::string op = stmt.substr(21, open - 21);
    if (!is_identifier(op)) {
        detail = "forwarding target is not a plain adapter operation: " + op;
        return false;
    }
    std::set<std::string> params;
    for (const auto& p : fn.params) params.insert(p.name);
    for (const auto& arg : pysrc::split_call_args(stmt.substr(open + 1, close - open - 1))) {
        std::string value = arg;
        auto eq = arg.find('=');
        if (eq != std::string::npos) value = trim(arg.substr(eq + 1));
        if (!is_identifier(value) || params.count(value) == 0) {
            detail = "forwarding argument is not a plain parameter: " + arg;
            return false;
        }
    }
    return true;
}

}  // namespace

std::string GenerationRules::digest() const {
    std::vector<std::string> rows;
    for (const auto& [wire, py] : wire_to_python) rows.push_back(wire + " -> " + py);
    return "type conversion: " + join(rows, ", ") +
           "; exceptions: catch-all at the adapter boundary returning "
           "{\"ok\": false, \"error\": {...}}; dependency check at service start: " +
           (dependency_check_at_start ? std::string("on") : std::string("off"));
}

std::string python_literal(const json& value) {
    switch (value.type()) {
        case json::value_t::null: return "None";
        case json::value_t::boolean: return value.get<bool>() ? "True" : "False";
        case json::value_t::array: {
            std::vector<std::string> items;
            for (const auto& item : value) items.push_back(python_literal(item));
            return "[" + join(items, ", ") + "]";
        }
        case json::value_t::object: {
            std::vector<std::string> items;
            for (auto& [key, item] : value.items())
                items.push_back(python_literal(json(key)) + ": " + python_literal(item));
            return "{" + join(items, ", ") + "}";
        }
        default: return value.dump();  // numbers and strings share JSON syntax
    }
}

void ServiceBundle::write_to(const fs::path& dir) const {
    fs::create_directories(dir);
    for (const auto& [name, content] : files) write_file(dir / name, content);
    write_json_file(dir / "manifest.json", manifest);
}

ServiceBundle ServiceBundle::load_from(const fs::path& dir) {
    ServiceBundle bundle;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".py")
            bundle.files[entry.path().filename().string()] = read_file(entry.path());
    }
    bundle.manifest = read_json_file(dir / "manifest.json");
    bundle.service_name = bundle.manifest.value("service_name", "");
    return bundle;
}

json RepairPlan::to_json() const {
    json step_list = json::array();
    for (const auto& s : steps)
        step_list.push_back({{"file", s.file},
                             {"start_line", s.start_line},
                             {"end_line", s.end_line},
                             {"replacement", s.replacement},
                             {"explanation", s.explanation}});
    return json{{"root_cause", root_cause}, {"steps", step_list}};
}

RepairPlan RepairPlan::from_json(const json& value) {
    RepairPlan plan;
    plan.root_cause = value.at("root_cause").get<std::string>();
    for (const auto& s : value.at("steps")) {
        RepairStep step;
        step.file = s.at("file").get<std::string>();
        step.start_line = s.at("start_line").get<int>();
        step.end_line = s.at("end_line").get<int>();
        step.replacement = s.at("replacement").get<std::string>();
        step.explanation = s.at("explanation").get<std::string>();
        plan.steps.push_back(std::move(step));
    }
    return plan;
}

std::vector<std::string> infer_risk_annotations(const RepositoryWorkspace& workspace,
                                                const SymbolTable& table,
                                                const std::string& module_path,
                                                const std::string& symbol) {
    const SymbolRecord* record = table.find(module_path, symbol);
    if (record == nullptr) return {"none"};
    fs::path file = workspace.source_dir / record->defined_in;
    if (!fs::exists(file)) return {"none"};
    auto module = pysrc::scan_module(read_file(file));

    std::set<std::string> tags;
    for (const auto& call : module.calls) {
        if (call.enclosing_function != symbol) continue;
        const std::string& callee = call.callee;
        if (callee == "open") {
            auto args = pysrc::split_call_args(call.args);
            std::string mode;
            if (args.size() > 1) {
                if (auto lit = pysrc::string_literal_value(args[1])) mode = *lit;
            }
            if (auto kw = pysrc::keyword_argument(call.args, "mode")) {
                if (auto lit = pysrc::string_literal_value(*kw)) mode = *lit;
            }
            bool writes = mode.find_first_of("wax+") != std::string::npos;
            tags.insert(writes ? "writes-fs" : "reads-fs");
        } else if (callee == "os.remove" || callee == "os.unlink" || callee == "os.rmdir" ||
                   callee == "shutil.rmtree" || callee == "shutil.move" || callee == "shutil.copy" ||
                   callee == "os.makedirs" || callee == "os.mkdir" || callee == "os.rename" ||
                   ends_with(callee, ".write_text") || ends_with(callee, ".write_bytes")) {
            tags.insert("writes-fs");
        } else if (callee == "os.listdir" || callee == "os.walk" || callee == "glob.glob" ||
                   ends_with(callee, ".read_text") || ends_with(callee, ".read_bytes")) {
            tags.insert("reads-fs");
        } else if (starts_with(callee, "requests.") || starts_with(callee, "urllib.") ||
                   starts_with(callee, "socket.") || starts_with(callee, "http.client")) {
            tags.insert("network");
        } else if (starts_with(callee, "subprocess.") || callee == "os.system" ||
                   callee == "os.popen" || starts_with(callee, "os.exec") ||
                   callee == "os.spawnl") {
            tags.insert("executes-subprocess");
        }
    }
    if (tags.empty()) return {"none"};
    return {tags.begin(), tags.end()};
}

ServiceBundle generate_bundle(const CodeReport& report, const SymbolTable& table,
                              const GenerationRules& rules, const RepositoryWorkspace& workspace,
                              const std::vector<std::string>& dependencies, Gateway& gateway) {
    if (report.candidate_endpoints.empty())
        throw make_error("untoolable", "report carries no resolvable candidate endpoints");

    std::string readme = workspace.readme_text.value_or("(no README present)");
    if (readme.size() > 4000) readme = readme.substr(0, 4000);

    PromptRequest request;
    request.purpose = Purpose::BundleGeneration;
    request.system_text = kGenerateSystem;
    request.user_text = "Repository report:\n" + report.to_json().dump(2) +
                        "\n\nPublic symbols by module:\n" + table.digest() + "\nREADME excerpt:\n" +
                        readme + "\n\nGeneration rules: " + rules.digest();
    request.schema_id = "bundle-spec";
    auto completion = gateway.complete(request);
    json spec = gateway.parse_structured(completion, request.schema_id);

    ServiceBundle bundle;
    bundle.service_name = spec["service_name"].get<std::string>();
    bundle.workspace_ref = workspace.run_id;

    std::vector<EndpointDef> endpoints;
    std::set<std::string> names;
    std::set<std::string> modules;
    for (const auto& e : spec["endpoints"]) {
        EndpointDef def;
        def.tool_name = e["tool_name"].get<std::string>();
        if (!names.insert(def.tool_name).second)
            throw make_error("schema-violation", "duplicate tool name " + def.tool_name);
        def.description = e["description"].get<std::string>();
        def.target_module = e["target_module"].get<std::string>();
        def.target_symbol = e["target_symbol"].get<std::string>();
        def.params = e["params"];
        def.example_args = e["example_args"];
        def.call_args = e.value("call_args", forward_argument_list(def.params));
        if (e.contains("service_body") && e["service_body"].is_array() && !e["service_body"].empty())
            def.service_body = e["service_body"].get<std::vector<std::string>>();
        else
            def.service_body = {"return await adapter." + def.tool_name + "(" +
                                forward_argument_list(def.params) + ")"};
        def.risk_annotations =
            infer_risk_annotations(workspace, table, def.target_module, def.target_symbol);
        modules.insert(def.target_module);
        endpoints.push_back(std::move(def));
    }

    bundle.files["adapter.py"] = render_adapter(bundle.service_name, endpoints);
    bundle.files["mcp_service.py"] = render_service(bundle.service_name, endpoints);
    bundle.files["test_adapter.py"] = render_tests(bundle.service_name, endpoints);
    bundle.files["main.py"] =
        render_main(bundle.service_name, std::vector<std::string>(modules.begin(), modules.end()));
    bundle.files["start_mcp.py"] = render_launcher(bundle.service_name);
    bundle.manifest = build_manifest(bundle.service_name, endpoints, dependencies);

    auto findings = check_bundle_shape(bundle);
    if (!findings.empty()) throw TemplateViolation(std::move(bundle), std::move(findings));
    return bundle;
}

ServiceBundle regenerate_with_plan(const ServiceBundle& bundle, const RepairPlan& plan,
                                   std::string* diff_out) {
    if (plan.steps.empty()) throw make_error("invalid-plan", "repair plan has no steps");
    for (const auto& step : plan.steps)
        if (trim(step.explanation).empty())
            throw make_error("invalid-plan", "repair step lacks an explanation");

    // Reject overlapping spans within one file up front.
    std::map<std::string, std::vector<const RepairStep*>> by_file;
    for (const auto& step : plan.steps) by_file[step.file].push_back(&step);
    for (auto& [file, steps] : by_file) {
        std::sort(steps.begin(), steps.end(),
                  [](const RepairStep* a, const RepairStep* b) { return a->start_line < b->start_line; });
        for (size_t i = 1; i < steps.size(); ++i)
            if (steps[i]->start_line <= steps[i - 1]->end_line)
                throw make_error("invalid-plan", "overlapping repair spans in " + file);
    }

    ServiceBundle repaired = bundle;
    std::string diff;
    for (auto& [file, steps] : by_file) {
        auto it = repaired.files.find(file);
        if (it == repaired.files.end())
            throw make_error("plan-out-of-range", "plan names a file not in the bundle: " + file);
        auto lines = split_lines(it->second);
        // Apply bottom-up so earlier spans keep their numbering.
        for (auto step_it = steps.rbegin(); step_it != steps.rend(); ++step_it) {
            const RepairStep& step = **step_it;
            if (step.start_line < 1 || step.end_line > static_cast<int>(lines.size()))
                throw make_error("plan-out-of-range",
                                 file + " has " + std::to_string(lines.size()) + " lines; step wants " +
                                     std::to_string(step.start_line) + ".." +
                                     std::to_string(step.end_line));
            diff += "--- " + file + ":" + std::to_string(step.start_line) + "-" +
                    std::to_string(step.end_line) + "\n";
            for (int i = step.start_line; i <= step.end_line; ++i) diff += "-" + lines[i - 1] + "\n";
            auto replacement_lines = split_lines(step.replacement);
            for (const auto& line : replacement_lines) diff += "+" + line + "\n";
            lines.erase(lines.begin() + (step.start_line - 1), lines.begin() + step.end_line);
            lines.insert(lines.begin() + (step.start_line - 1), replacement_lines.begin(),
                         replacement_lines.end());
        }
        it->second = join(lines, "\n") + "\n";
    }
    if (diff_out) *diff_out = diff;

    auto findings = check_bundle_shape(repaired);
    if (!findings.empty()) throw TemplateViolation(std::move(repaired), std::move(findings));
    return repaired;
}

std::vector<ShapeFinding> check_bundle_shape(const ServiceBundle& bundle) {
    std::vector<ShapeFinding> findings;

    for (const auto& required : kBundleFiles)
        if (bundle.files.count(required) == 0)
            findings.push_back({"missing-file", required, "bundle lacks required file " + required});
    for (const auto& [name, _] : bundle.files) {
        bool known = std::find(kBundleFiles.begin(), kBundleFiles.end(), name) != kBundleFiles.end();
        if (!known)
            findings.push_back({"extra-file", name, "bundle carries unexpected file " + name});
    }
    if (!findings.empty()) return findings;

    auto service = pysrc::scan_module(bundle.files.at("mcp_service.py"));
    auto adapter = pysrc::scan_module(bundle.files.at("adapter.py"));
    if (!service.ok())
        findings.push_back({"scan-error", "mcp_service.py", join(service.errors, "; ")});
    if (!adapter.ok()) findings.push_back({"scan-error", "adapter.py", join(adapter.errors, "; ")});
    if (!findings.empty()) return findings;

    // Service layer: decorated async forwarding stubs and the fixed registrar.
    std::set<std::string> service_tools;
    for (const auto& fn : service.functions) {
        if (fn.name == "tool") continue;  // registrar from the fixed skeleton
        bool decorated = false;
        for (const auto& d : fn.decorators) decorated = decorated || starts_with(d, "tool(");
        if (!decorated) {
            findings.push_back({"non-forwarding-service", "mcp_service.py",
                                "undecorated function " + fn.name + " in the tool layer"});
            continue;
        }
        if (!fn.is_async)
            findings.push_back({"non-forwarding-service", "mcp_service.py",
                                "endpoint " + fn.name + " must be asynchronous"});
        std::string detail;
        if (!forwarding_only(fn, detail))
            findings.push_back({"non-forwarding-service", "mcp_service.py", fn.name + ": " + detail});
        service_tools.insert(fn.name);
    }
    // No stray top-level statements besides the known skeleton pieces.
    for (const auto& line : service.lines) {
        if (line.indent != 0) continue;
        const std::string& t = line.text;
        if (starts_with(t, "import adapter") || starts_with(t, "TOOLS = {}") ||
            starts_with(t, "def tool(") || starts_with(t, "async def ") || starts_with(t, "@tool(") ||
            starts_with(t, "\"\"\"") || starts_with(t, "'''"))
            continue;
        findings.push_back(
            {"non-forwarding-service", "mcp_service.py", "unexpected top-level statement: " + t});
    }

    // Adapter: every public operation is async.
    std::set<std::string> adapter_ops;
    for (const auto& fn : adapter.functions) {
        if (starts_with(fn.name, "_")) continue;
        adapter_ops.insert(fn.name);
        if (!fn.is_async)
            findings.push_back(
                {"sync-adapter", "adapter.py", "operation " + fn.name + " is not asynchronous"});
    }

    // Manifest endpoints and service registrations agree one-to-one.
    std::set<std::string> manifest_tools;
    for (const auto& e : bundle.manifest.value("endpoints", json::array()))
        manifest_tools.insert(e.value("tool_name", ""));
    for (const auto& name : manifest_tools)
        if (service_tools.count(name) == 0)
            findings.push_back({"manifest-mismatch", "mcp_service.py",
                                "manifest endpoint " + name + " missing from the tool layer"});
    for (const auto& name : service_tools)
        if (manifest_tools.count(name) == 0)
            findings.push_back({"manifest-mismatch", "manifest.json",
                                "tool layer endpoint " + name + " missing from the manifest"});

    // Tests exist for each endpoint.
    auto tests = pysrc::scan_module(bundle.files.at("test_adapter.py"));
    if (tests.ok()) {
        std::set<std::string> test_names;
        for (const auto& fn : tests.functions)
            if (starts_with(fn.name, "test_")) test_names.insert(fn.name.substr(5));
        for (const auto& name : manifest_tools)
            if (test_names.count(name) == 0)
                findings.push_back({"manifest-mismatch", "test_adapter.py",
                                    "endpoint " + name + " has no generated test"});
    } else {
        findings.push_back({"scan-error", "test_adapter.py", join(tests.errors, "; ")});
    }
    return findings;
}

}  // namespace mcpforge
