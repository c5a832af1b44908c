#include "support/scenarios.hpp"

#include "mcpforge/errors.hpp"
#include "mcpforge/subprocess.hpp"
#include "support/fixture_model.hpp"

#ifndef MCPFORGE_SOURCE_DIR
#define MCPFORGE_SOURCE_DIR "."
#endif

namespace mcpforge::testsupport {

fs::path committed_transcript_path() {
    return fs::path(MCPFORGE_SOURCE_DIR) / "tests" / "fixtures" / "transcripts.jsonl";
}

Gateway replay_gateway() {
    return Gateway(GatewayMode::Replay, Transcript::load(committed_transcript_path()));
}

const FixtureWorld& shared_world() {
    static TempDir scratch("sharedworld");
    static FixtureWorld world = build_world(scratch.path() / "fixtures");
    return world;
}

RuntimeWorld& shared_runtime() {
    static TempDir scratch("sharedruntime");
    static RuntimeWorld runtime_world = [] {
        Gateway gateway = replay_gateway();
        return convert_strokekit(gateway, shared_world(), scratch.path() / "ws",
                                 scratch.path() / "out");
    }();
    return runtime_world;
}

RunConfig base_config(const FixtureWorld& world, const fs::path& workspace_root,
                      const fs::path& output_root) {
    RunConfig config;
    config.workspace_root = workspace_root.string();
    config.output_root = output_root.string();
    config.gateway_mode = "replay";
    config.transcript_path = committed_transcript_path().string();
    config.runtime_paths = {{"3.10", host_python()}};
    config.package_index = world.package_index.string();
    config.search_index_path = world.stub_index_file.string();
    config.install_timeout_seconds = 120.0;
    config.test_timeout_seconds = 60.0;
    config.zero_timings = true;
    return config;
}

std::vector<CorpusCase> corpus_cases(const FixtureWorld& world) {
    auto success = [&](const std::string& name, int rounds) {
        return CorpusCase{name, repo_url(world, name), "success", rounds, ""};
    };
    auto failure = [&](const std::string& name, const std::string& category) {
        return CorpusCase{name, repo_url(world, name), "failure", 0, category};
    };
    return {
        success("calctool", 0),
        success("fixkit", 0),  // recovered inside code_check, before any review round
        success("textkit", 1),
        success("statkit", 2),
        success("matkit", 3),
        failure("envbad", "environment-setup"),
        failure("envpin", "environment-setup"),
        failure("guionly", "untoolable-structure"),
        failure("datasheets", "untoolable-structure"),
        failure("ghostm", "import-error"),
        failure("ghosts", "import-error"),
        failure("buggy", "repository-bug"),
        failure("brittle", "repository-bug"),
        failure("apikit", "api-inference-error"),
        failure("apikit2", "api-inference-error"),
        failure("vizkit", "mcp-spec-violation"),
        failure("vizlite", "mcp-spec-violation"),
    };
}

void run_gateway_scenarios(Gateway& gateway) {
    extract_topics({kStrokeQuery, ""}, 5, gateway);
    extract_topics({kVerboseQuery, ""}, 5, gateway);
    extract_topics({kFencedQuery, ""}, 5, gateway);
    try {
        extract_topics({kUnparseableQuery, ""}, 5, gateway);
    } catch (const Error&) {
        // schema-violation after the bounded retry: expected
    }
}

void run_search_scenarios(Gateway& gateway, const FixtureWorld& world) {
    {
        StubSearchClient client(world.stub_index_file);
        select_repository({kStrokeQuery, ""}, 50, 5, client, gateway);
    }
    {
        StubSearchClient client(world.stub_index_file);
        select_repository({kDashboardQuery, ""}, 50, 5, client, gateway);
    }
    {
        StubSearchClient client(world.refine_index_file);
        select_repository({kOverSpecificQuery, ""}, 50, 5, client, gateway);
    }
    {
        StubSearchClient client(world.empty_index_file);
        try {
            select_repository({kHopelessQuery, ""}, 50, 5, client, gateway);
        } catch (const Error&) {
            // refinement-exhausted: expected
        }
    }
}

BenchReport run_corpus(Gateway& gateway, const FixtureWorld& world, const fs::path& workspace_root,
                       const fs::path& output_root, int parallelism) {
    RunConfig config = base_config(world, workspace_root, output_root);
    config.parallelism = parallelism;
    return run_bench(corpus_cases(world), config, gateway);
}

RuntimeWorld convert_strokekit(Gateway& gateway, const FixtureWorld& world,
                               const fs::path& workspace_root, const fs::path& output_root) {
    RunConfig config = base_config(world, workspace_root, output_root);
    RepoCandidate candidate;
    candidate.full_name = "strokekit";
    candidate.url = repo_url(world, "strokekit");

    RuntimeWorld runtime_world;
    runtime_world.record = convert_repository(candidate, config, gateway, "strokekit-run");
    if (runtime_world.record.final_status != "success")
        throw make_error("fixture-error",
                         "strokekit conversion failed: " + runtime_world.record.error);
    runtime_world.service_dir = fs::path(runtime_world.record.output_path);
    runtime_world.registry.register_bundle(runtime_world.service_dir,
                                           runtime_world.service_dir / "security_report.json",
                                           config.security);
    return runtime_world;
}

void run_planning_scenarios(Gateway& gateway, RuntimeWorld& runtime_world,
                            const fs::path& scratch_dir) {
    SecurityConfig security;
    security.whitelist_roots = {scratch_dir.string()};
    Governor governor(security, scratch_dir / "decision_log.jsonl");
    ServiceExecutor executor(60.0);

    InvocationPlan plan = plan_invocation({kPlanQuery, ""}, runtime_world.registry, gateway);
    SessionState session;
    session.original_query = {kPlanQuery, ""};
    execute_plan(plan, session, runtime_world.registry, governor, executor,
                 [](const ExecutionPreview&) { return Confirmation::Granted; });

    replan(session, {kCausalFollowup, ""}, runtime_world.registry, gateway);
    replan(session, {kPlanQuery, ""}, runtime_world.registry, gateway);

    try {
        plan_invocation({kGhostPlanQuery, ""}, runtime_world.registry, gateway);
    } catch (const Error&) {
        // unknown-tool: expected
    }
}

namespace {

ServiceBundle skeleton_bundle(const std::string& adapter_body) {
    ServiceBundle bundle;
    bundle.service_name = "seeded_service";
    bundle.files["adapter.py"] = adapter_body;
    bundle.files["mcp_service.py"] =
        "\"\"\"MCP tool layer for seeded_service: @tool registration and parameter forwarding "
        "only.\"\"\"\n\nimport adapter\n\nTOOLS = {}\n\n\ndef tool(name, description, parameters):\n"
        "    def _register(handler):\n        TOOLS[name] = {\"handler\": handler}\n"
        "        return handler\n    return _register\n";
    bundle.files["main.py"] = "\"\"\"Entry point.\"\"\"\n";
    bundle.files["start_mcp.py"] = "\"\"\"Launcher.\"\"\"\n";
    bundle.files["test_adapter.py"] = "\"\"\"Tests.\"\"\"\n";
    bundle.manifest = {{"service_name", "seeded_service"},
                       {"endpoints", json::array()},
                       {"dependencies", json::array()}};
    return bundle;
}

}  // namespace

ServiceBundle seeded_bundle(const std::string& kind) {
    if (kind == "traversal") {
        return skeleton_bundle(
            "\"\"\"Adapter with a path traversal escape.\"\"\"\n\nimport os\n\n\n"
            "async def grab_secrets(name):\n"
            "    with open(\"../../etc/passwd\") as handle:\n"
            "        return handle.read()\n");
    }
    if (kind == "absolute-escape") {
        return skeleton_bundle(
            "\"\"\"Adapter writing outside every whitelist root.\"\"\"\n\n\n"
            "async def leak(payload):\n"
            "    with open(\"/var/tmp/exfil.txt\", \"w\") as handle:\n"
            "        handle.write(payload)\n"
            "    return True\n");
    }
    if (kind == "injection-concat") {
        return skeleton_bundle(
            "\"\"\"Adapter that builds a shell command by concatenation.\"\"\"\n\nimport os\n\n\n"
            "async def archive(target):\n"
            "    command = \"tar czf backup.tgz \" + target\n"
            "    os.system(command)\n"
            "    return True\n");
    }
    if (kind == "injection-fstring") {
        return skeleton_bundle(
            "\"\"\"Adapter that interpolates a parameter into a command.\"\"\"\n\nimport os\n\n\n"
            "async def convert(path):\n"
            "    os.system(f\"convert {path} out.png\")\n"
            "    return True\n");
    }
    if (kind == "shell-true") {
        return skeleton_bundle(
            "\"\"\"Adapter invoking the shell with dynamic content.\"\"\"\n\nimport subprocess\n\n\n"
            "async def run_query(query):\n"
            "    subprocess.run(\"grep \" + query + \" data.txt\", shell=True)\n"
            "    return True\n");
    }
    if (kind == "path-unproven") {
        return skeleton_bundle(
            "\"\"\"Adapter whose write target is caller-controlled.\"\"\"\n\n\n"
            "async def save(destination, payload):\n"
            "    with open(destination, \"w\") as handle:\n"
            "        handle.write(payload)\n"
            "    return True\n");
    }
    if (kind == "clean-literal") {
        return skeleton_bundle(
            "\"\"\"Adapter writing inside the workspace only.\"\"\"\n\n\n"
            "async def save_report(payload):\n"
            "    with open(\"reports/out.txt\", \"w\") as handle:\n"
            "        handle.write(payload)\n"
            "    return True\n");
    }
    if (kind == "clean-argv") {
        return skeleton_bundle(
            "\"\"\"Adapter invoking a subprocess with a fixed argument list.\"\"\"\n\n"
            "import subprocess\n\n\n"
            "async def version():\n"
            "    result = subprocess.run([\"git\", \"--version\"], capture_output=True)\n"
            "    return result.returncode\n");
    }
    if (kind == "clean-log-concat") {
        return skeleton_bundle(
            "\"\"\"Adapter concatenating a parameter into a log line only.\"\"\"\n\n"
            "import logging\n\n\n"
            "async def describe(target):\n"
            "    message = \"processing \" + target\n"
            "    logging.info(message)\n"
            "    return message\n");
    }
    throw make_error("fixture-error", "unknown seeded bundle kind: " + kind);
}

std::vector<std::string> seeded_vulnerable_kinds() {
    return {"traversal", "absolute-escape", "injection-concat", "injection-fstring", "shell-true",
            "path-unproven"};
}

std::vector<std::string> clean_twin_kinds() {
    return {"clean-literal", "clean-argv", "clean-log-concat"};
}

namespace {

const char* kReflectScript = R"PY(import importlib
import json
import pathlib
import sys

source = pathlib.Path(sys.argv[1])
sys.path.insert(0, str(source))
modules = {}
failed = []
for path in sorted(source.rglob("*.py")):
    rel = path.relative_to(source)
    if any(part.startswith(".") for part in rel.parts):
        continue
    name = ".".join(rel.with_suffix("").parts)
    if name.endswith(".__init__"):
        name = name[: -len(".__init__")]
    try:
        module = importlib.import_module(name)
    except BaseException:
        failed.append(str(rel))
        continue
    exported = getattr(module, "__all__", None)
    names = []
    if exported is not None:
        for symbol in exported:
            if callable(getattr(module, symbol, None)):
                names.append(symbol)
    else:
        for symbol, value in vars(module).items():
            if symbol.startswith("_") or not callable(value):
                continue
            if getattr(value, "__module__", None) != name:
                continue
            names.append(symbol)
    modules[name] = sorted(set(names))
print(json.dumps({"modules": modules, "failed": sorted(failed)}))
)PY";

const char* kImportOracleScript = R"PY(import importlib
import json
import sys

sys.path.insert(0, sys.argv[1])
bindings = json.loads(sys.argv[2])
results = []
for binding in bindings:
    module_name = binding["module"]
    symbol = binding.get("symbol") or ""
    ok = True
    try:
        module = importlib.import_module(module_name)
        if symbol and not hasattr(module, symbol):
            try:
                importlib.import_module(module_name + "." + symbol)
            except BaseException:
                ok = False
    except BaseException:
        ok = False
    results.append(ok)
print(json.dumps(results))
)PY";

json run_python_json(const std::vector<std::string>& argv) {
    RunSpec spec;
    spec.argv = argv;
    spec.env = {{"PATH", "/usr/local/bin:/usr/bin:/bin"}, {"HOME", "/tmp"}, {"LC_ALL", "C"},
                {"PYTHONDONTWRITEBYTECODE", "1"}};
    spec.timeout_seconds = 60.0;
    auto result = run_process(spec);
    if (!result.ok())
        throw make_error("oracle-error", "python oracle failed: " + result.err.substr(0, 400));
    auto lines = split_lines(result.out);
    return json::parse(lines.back());
}

}  // namespace

json reflect_public_symbols(const fs::path& source_dir) {
    return run_python_json({host_python(), "-c", kReflectScript, source_dir.string()});
}

std::vector<bool> import_attempt_oracle(const fs::path& source_dir, const json& bindings) {
    json result = run_python_json(
        {host_python(), "-c", kImportOracleScript, source_dir.string(), bindings.dump()});
    return result.get<std::vector<bool>>();
}

}  // namespace mcpforge::testsupport
