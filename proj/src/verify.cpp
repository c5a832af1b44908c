#include "mcpforge/verify.hpp"

#include <algorithm>
#include <mutex>
#include <set>

#include "mcpforge/errors.hpp"
#include "mcpforge/pysrc.hpp"
#include "mcpforge/subprocess.hpp"

namespace mcpforge {

namespace {

const char* kRepairSystem =
    "You fix import statements in generated MCP service code. Using the available symbols, "
    "reply with JSON {\"root_cause\", \"steps\": [{\"file\", \"start_line\", \"end_line\", "
    "\"replacement\", \"explanation\"}..]} that rewrites the broken imports (and any call sites "
    "that must follow) to names that exist. Line numbers refer to the numbered listings.";

const char* kReviewSystem =
    "You are reviewing a failed MCP service test run. Perform root-cause analysis of the "
    "traceback, then reply with JSON {\"root_cause\", \"steps\": [{\"file\", \"start_line\", "
    "\"end_line\", \"replacement\", \"explanation\"}..]} giving exact files, line numbers, and "
    "replacement code segments. Line numbers refer to the numbered listings.";

const std::set<std::string>& stdlib_modules() {
    static const std::set<std::string> names = {
        "abc",         "argparse",  "asyncio",   "base64",   "collections", "concurrent",
        "contextlib",  "copy",      "csv",       "dataclasses", "datetime", "decimal",
        "enum",        "functools", "glob",      "hashlib",  "heapq",       "importlib",
        "inspect",     "io",        "itertools", "json",     "logging",     "math",
        "os",          "pathlib",   "pickle",    "queue",    "random",      "re",
        "shlex",       "shutil",    "socket",    "sqlite3",  "statistics",  "string",
        "subprocess",  "sys",       "tempfile",  "textwrap", "threading",   "time",
        "traceback",   "types",     "typing",    "unittest", "urllib",      "uuid",
        "warnings",    "xml",       "zipfile",
    };
    return names;
}

std::set<std::string> bundle_module_names() {
    std::set<std::string> names;
    for (const auto& file : kBundleFiles) names.insert(file.substr(0, file.size() - 3));
    return names;
}

std::string root_component(const std::string& module_path) {
    auto dot = module_path.find('.');
    return dot == std::string::npos ? module_path : module_path.substr(0, dot);
}

bool table_knows_root(const SymbolTable& table, const std::string& root) {
    for (const auto& [module_path, _] : table.modules)
        if (module_path == root || starts_with(module_path, root + ".")) return true;
    return false;
}

std::string numbered_listing(const std::string& name, const std::string& content) {
    std::string out = "### " + name + "\n";
    auto lines = split_lines(content);
    for (size_t i = 0; i < lines.size(); ++i)
        out += std::to_string(i + 1) + ": " + lines[i] + "\n";
    return out;
}

RepairPlan parse_plan(const json& value, const ServiceBundle& bundle) {
    RepairPlan plan = RepairPlan::from_json(value);
    for (const auto& step : plan.steps) {
        auto it = bundle.files.find(step.file);
        if (it == bundle.files.end())
            throw make_error("plan-out-of-range", "plan names a file not in the bundle: " + step.file);
        int line_count = static_cast<int>(split_lines(it->second).size());
        if (step.start_line < 1 || step.end_line > line_count)
            throw make_error("plan-out-of-range",
                             step.file + " has " + std::to_string(line_count) + " lines; step wants " +
                                 std::to_string(step.start_line) + ".." + std::to_string(step.end_line));
        if (trim(step.explanation).empty())
            throw make_error("schema-violation", "repair step lacks an explanation");
    }
    return plan;
}

const char* kTestRunner = R"PY(import asyncio
import importlib.util
import inspect
import json
import sys
import traceback


def main():
    test_file = sys.argv[1]
    spec = importlib.util.spec_from_file_location("bundle_tests", test_file)
    module = importlib.util.module_from_spec(spec)
    try:
        spec.loader.exec_module(module)
    except BaseException:
        print(json.dumps({"tests_run": 0, "passed": 0, "results": [],
                          "load_error": traceback.format_exc()}))
        return 1
    tests = [(name, fn) for name, fn in vars(module).items()
             if name.startswith("test_") and callable(fn)]
    passed = 0
    results = []
    for name, fn in tests:
        try:
            if inspect.iscoroutinefunction(fn):
                asyncio.run(fn())
            else:
                fn()
            results.append({"name": name, "ok": True})
            passed += 1
        except BaseException:
            results.append({"name": name, "ok": False, "traceback": traceback.format_exc()})
    print(json.dumps({"tests_run": len(tests), "passed": passed, "results": results}))
    return 0 if (tests and passed == len(tests)) else 1


if __name__ == "__main__":
    sys.exit(main())
)PY";

std::map<std::string, std::string> service_process_env(const RepositoryWorkspace& workspace) {
    // Scrubbed allowlist: the served process sees only what it needs, with
    // its home pinned inside the workspace.
    return {{"PATH", "/usr/local/bin:/usr/bin:/bin"},
            {"HOME", workspace.root.string()},
            {"LC_ALL", "C"},
            {"PYTHONDONTWRITEBYTECODE", "1"},
            {"PYTHONPATH", workspace.source_dir.string() + ":" + workspace.bundle_dir.string()}};
}

}  // namespace

json ValidationFinding::to_json() const {
    return json{{"file", binding.importing_file}, {"module", binding.module_path},
                {"symbol", binding.symbol_name},  {"line", binding.line},
                {"kind", kind},                   {"detail", detail}};
}

json RunOutcome::to_json() const {
    json tests = json::object();
    for (const auto& [name, ok] : per_test) tests[name] = ok;
    json out = {{"status", status},
                {"tests_run", tests_run},
                {"tests_passed", tests_passed},
                {"duration_seconds", duration_seconds},
                {"per_test", tests}};
    if (traceback) out["traceback"] = *traceback;
    return out;
}

json ConversionRecord::to_json() const {
    json outcome_list = json::array();
    for (const auto& o : outcomes) outcome_list.push_back(o.to_json());
    json plan_list = json::array();
    for (const auto& p : repair_plans) plan_list.push_back(p.to_json());
    json out = {
        {"schema_version", 1},
        {"repo", {{"full_name", repo_full_name}, {"url", repo_url}}},
        {"node_trace", node_trace},
        {"rounds_used", rounds_used},
        {"outcomes", outcome_list},
        {"repair_plans", plan_list},
        {"final_status", final_status},
        {"validated_endpoints", validated_endpoints},
        {"wall_time_seconds", wall_time_seconds},
        {"env_status", env_status},
        {"env_failure_kind", env_failure_kind},
        {"untoolable", untoolable},
        {"generate_invocations", generate_invocations},
        {"last_import_findings", last_import_findings},
        {"last_shape_findings", last_shape_findings},
        {"signature_mismatch", signature_mismatch},
        {"service_name", service_name},
        {"bundle_path", bundle_path},
        {"output_path", output_path},
        {"error", error},
    };
    out["failure_category"] = failure_category ? json(*failure_category) : json(nullptr);
    return out;
}

std::vector<ImportBinding> collect_import_bindings(const ServiceBundle& bundle) {
    std::vector<ImportBinding> bindings;
    for (const auto& [file, content] : bundle.files) {
        auto module = pysrc::scan_module(content);
        if (!module.ok()) continue;
        for (const auto& imp : module.imports) {
            if (imp.star || imp.relative_level > 0) continue;
            ImportBinding binding;
            binding.importing_file = file;
            binding.module_path = imp.module;
            binding.symbol_name = imp.is_from ? imp.symbol : "";
            binding.line = imp.line;
            bindings.push_back(std::move(binding));
        }
    }
    return bindings;
}

std::vector<ValidationFinding> validate_imports(const ServiceBundle& bundle,
                                                const SymbolTable& table) {
    std::vector<ValidationFinding> findings;
    auto bundle_modules = bundle_module_names();
    std::set<std::string> declared_deps;
    for (const auto& dep : bundle.manifest.value("dependencies", std::vector<std::string>()))
        declared_deps.insert(to_lower(replace_all(root_component(dep), "-", "_")));

    for (const auto& binding : collect_import_bindings(bundle)) {
        std::string root = root_component(binding.module_path);
        if (binding.module_path.empty()) continue;
        if (bundle_modules.count(root) > 0) continue;
        if (stdlib_modules().count(root) > 0) continue;
        if (declared_deps.count(to_lower(replace_all(root, "-", "_"))) > 0) continue;
        if (!table_knows_root(table, root)) continue;  // third-party: deferred to run time

        if (!table.has_module(binding.module_path)) {
            findings.push_back(
                {binding, "missing-module",
                 "module " + binding.module_path + " is not in the available-symbols table"});
            continue;
        }
        if (binding.symbol_name.empty()) continue;  // plain module import
        if (table.find(binding.module_path, binding.symbol_name) != nullptr) continue;
        if (table.has_module(binding.module_path + "." + binding.symbol_name)) continue;
        findings.push_back({binding, "missing-symbol",
                            binding.symbol_name + " is not a public symbol of " +
                                binding.module_path});
    }
    return findings;
}

ImportRepairResult repair_imports(const std::vector<ValidationFinding>& findings,
                                  const ServiceBundle& bundle, const SymbolTable& table,
                                  const RepositoryWorkspace& workspace, Gateway& gateway) {
    if (findings.empty())
        throw make_error("invalid-argument", "import repair requires at least one finding");

    std::string finding_text;
    for (const auto& f : findings)
        finding_text += "- " + f.kind + ": " + f.detail + " (" + f.binding.importing_file +
                        " line " + std::to_string(f.binding.line) + ")\n";

    // The repair context carries the error list, the import lines of the
    // bundle, and the full available-symbols listing.
    std::string import_lines;
    for (const auto& [file, content] : bundle.files) {
        auto lines = split_lines(content);
        for (size_t i = 0; i < lines.size(); ++i) {
            std::string t = trim(lines[i]);
            if (starts_with(t, "import ") || starts_with(t, "from "))
                import_lines += file + ":" + std::to_string(i + 1) + ": " + lines[i] + "\n";
        }
    }

    PromptRequest request;
    request.purpose = Purpose::ImportRepair;
    request.system_text = kRepairSystem;
    request.user_text = "Import validation errors:\n" + finding_text + "\nImport statements:\n" +
                        import_lines + "\nAvailable symbols:\n" + table.digest() +
                        "\nNumbered adapter listing:\n" +
                        numbered_listing("adapter.py", bundle.files.at("adapter.py"));
    request.schema_id = "repair-plan";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);

    ImportRepairResult result;
    result.before = findings;
    try {
        RepairPlan plan = parse_plan(parsed, bundle);
        result.bundle = regenerate_with_plan(bundle, plan);
    } catch (const Error&) {
        // A plan that cannot apply cleanly is no progress, not a crash.
        result.bundle = bundle;
        result.after = findings;
        return result;
    }
    result.after = validate_imports(result.bundle, table);
    if (result.after.size() < result.before.size()) {
        result.progressed = true;
    } else {
        result.bundle = bundle;  // keep the original when the repair did not reduce findings
        result.after = findings;
    }
    return result;
}

RunOutcome run_tests(const ServiceBundle& bundle, const EnvironmentHandle& env,
                     const RepositoryWorkspace& workspace, const RunConfig& config) {
    if (env.status != "ready") throw make_error("env-not-ready", "environment is " + env.status);
    auto shape = check_bundle_shape(bundle);
    if (!shape.empty())
        throw make_error("bundle-not-conformant", "bundle has shape findings; run refused");

    bundle.write_to(workspace.bundle_dir);
    fs::path runner = workspace.reports_dir / "run_bundle_tests.py";
    write_file(runner, kTestRunner);

    RunSpec spec;
    spec.argv = {env.python.string(), runner.string(),
                 (workspace.bundle_dir / "test_adapter.py").string()};
    spec.cwd = workspace.bundle_dir.string();
    spec.env = service_process_env(workspace);
    spec.timeout_seconds = config.test_timeout_seconds;
    auto run = run_process(spec);

    RunOutcome outcome;
    outcome.duration_seconds = run.duration_seconds;
    if (run.timed_out) {
        outcome.status = "fail";
        outcome.traceback = "TimeoutError: test suite exceeded " +
                            std::to_string(config.test_timeout_seconds) + " seconds\n" + run.out;
        return outcome;
    }

    // The runner prints one JSON summary line last.
    json summary;
    auto lines = split_lines(run.out);
    for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
        summary = json::parse(*it, nullptr, false);
        if (!summary.is_discarded() && summary.is_object() && summary.contains("tests_run")) break;
        summary = json();
    }
    if (!summary.is_object() || !summary.contains("tests_run")) {
        outcome.status = "fail";
        outcome.traceback = "RunnerError: no test summary produced\n" + run.out + run.err;
        return outcome;
    }
    outcome.tests_run = summary.value("tests_run", 0);
    outcome.tests_passed = summary.value("passed", 0);
    std::string failure_text;
    for (const auto& r : summary.value("results", json::array())) {
        std::string name = r.value("name", "");
        bool ok = r.value("ok", false);
        outcome.per_test[name] = ok;
        if (!ok) failure_text += "FAILED " + name + "\n" + r.value("traceback", "") + "\n";
    }
    if (summary.contains("load_error"))
        failure_text += "load error:\n" + summary.value("load_error", "");

    bool pass = outcome.tests_run >= 1 && outcome.tests_passed == outcome.tests_run;
    outcome.status = pass ? "pass" : "fail";
    if (!pass) {
        if (failure_text.empty()) failure_text = "EmptySuiteError: the test file defines no tests";
        outcome.traceback = failure_text;
    }
    return outcome;
}

RepairPlan review_failure(const RunOutcome& outcome, const ServiceBundle& bundle,
                          const RepositoryWorkspace& workspace, const SymbolTable& table,
                          Gateway& gateway) {
    if (outcome.status != "fail")
        throw make_error("invalid-argument", "review requires a failing outcome");
    if (!outcome.traceback)
        throw make_error("invalid-argument", "review requires a captured traceback");

    std::string failing;
    for (const auto& [name, ok] : outcome.per_test)
        if (!ok) failing += name + " ";

    std::string sanitized = sanitize_traceback(*outcome.traceback, workspace.root);

    // Context is capped: the traceback, the generated files it names (plus
    // the adapter and tests, which repairs usually touch), and the symbol
    // digest of the repository.
    std::set<std::string> include = {"adapter.py", "test_adapter.py"};
    for (const auto& [file, _] : bundle.files)
        if (sanitized.find(file) != std::string::npos) include.insert(file);
    std::string listings;
    for (const auto& file : include) listings += numbered_listing(file, bundle.files.at(file)) + "\n";

    PromptRequest request;
    request.purpose = Purpose::FailureReview;
    request.system_text = kReviewSystem;
    request.user_text = "Failing tests: " + (failing.empty() ? "(suite-level)" : failing) +
                        "\nTraceback:\n" + sanitized + "\nGenerated files:\n" + listings +
                        "Repository symbols:\n" + table.digest();
    request.schema_id = "repair-plan";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);
    return parse_plan(parsed, bundle);
}

std::vector<std::string> signature_mismatches(const ServiceBundle& bundle,
                                              const SymbolTable& table) {
    std::vector<std::string> problems;
    for (const auto& endpoint : bundle.manifest.value("endpoints", json::array())) {
        std::string module = endpoint.value("target", json::object()).value("module", "");
        std::string symbol = endpoint.value("target", json::object()).value("symbol", "");
        const SymbolRecord* record = table.find(module, symbol);
        if (record == nullptr) continue;  // import validation owns unresolved targets

        // Locate the adapter call for this endpoint and compare keywords
        // against the target signature.
        std::string tool = endpoint.value("tool_name", "");
        auto adapter = pysrc::scan_module(bundle.files.at("adapter.py"));
        const pysrc::Function* fn = adapter.find_function(tool);
        if (fn == nullptr) continue;
        std::string call_args;
        for (const auto& call : adapter.calls) {
            if (call.enclosing_function != tool || call.callee != "asyncio.to_thread") continue;
            auto args = pysrc::split_call_args(call.args);
            std::vector<std::string> rest(args.begin() + std::min<size_t>(1, args.size()),
                                          args.end());
            call_args = join(rest, ", ");
            break;
        }
        std::set<std::string> signature_names;
        bool has_variadic = false;
        std::set<std::string> required;
        for (const auto& p : record->signature) {
            signature_names.insert(p.name);
            if (p.variadic) has_variadic = true;
            if (!p.has_default && !p.variadic) required.insert(p.name);
        }
        bool all_keywords = true;
        std::set<std::string> used;
        for (const auto& arg : pysrc::split_call_args(call_args)) {
            auto eq = arg.find('=');
            if (eq == std::string::npos || arg.find("==") == eq) {
                all_keywords = false;
                continue;
            }
            std::string name = trim(arg.substr(0, eq));
            used.insert(name);
            if (!has_variadic && signature_names.count(name) == 0)
                problems.push_back(tool + ": unexpected keyword argument '" + name + "' for " +
                                   module + "." + symbol);
        }
        if (all_keywords) {
            for (const auto& name : required)
                if (used.count(name) == 0)
                    problems.push_back(tool + ": missing required argument '" + name + "' of " +
                                       module + "." + symbol);
        }
    }
    return problems;
}

std::string sanitize_traceback(const std::string& traceback, const fs::path& workspace_root) {
    std::string root = workspace_root.string();
    std::vector<std::string> out;
    bool keep_context = true;
    for (const auto& line : split_lines(traceback)) {
        auto file_pos = line.find("  File \"");
        if (file_pos == 0) {
            auto quote_end = line.find('"', 8);
            std::string path = quote_end == std::string::npos ? "" : line.substr(8, quote_end - 8);
            if (starts_with(path, root)) {
                keep_context = true;
                out.push_back(replace_all(line, root, "<workspace>"));
            } else {
                keep_context = false;  // interpreter internals: machine-specific
            }
            continue;
        }
        if (starts_with(line, "    ")) {
            if (keep_context) out.push_back(line);
            continue;
        }
        keep_context = true;
        out.push_back(replace_all(line, root, "<workspace>"));
    }
    return join(out, "\n") + "\n";
}

std::map<std::string, bool> wire_validate_endpoints(const ServiceBundle& bundle,
                                                    const fs::path& bundle_dir,
                                                    const EnvironmentHandle& env,
                                                    const RepositoryWorkspace& workspace,
                                                    const RunConfig& config) {
    std::map<std::string, bool> validated;
    for (const auto& endpoint : bundle.manifest.value("endpoints", json::array()))
        validated[endpoint.value("tool_name", "")] = false;

    RunSpec spec;
    spec.argv = {env.python.string(), (bundle_dir / "main.py").string()};
    spec.cwd = bundle_dir.string();
    spec.env = service_process_env(workspace);
    spec.timeout_seconds = config.test_timeout_seconds;

    try {
        PipeProcess service(spec);
        json init = {{"jsonrpc", "2.0"}, {"id", 0}, {"method", "initialize"}, {"params", json::object()}};
        service.send_line(init.dump());
        if (!service.read_line(10.0)) return validated;

        int request_id = 1;
        for (const auto& endpoint : bundle.manifest.value("endpoints", json::array())) {
            std::string tool = endpoint.value("tool_name", "");
            json call = {{"jsonrpc", "2.0"},
                         {"id", request_id++},
                         {"method", "tools/call"},
                         {"params",
                          {{"name", tool},
                           {"arguments", endpoint.value("example_call", json::object())
                                             .value("arguments", json::object())}}}};
            service.send_line(call.dump());
            auto reply_line = service.read_line(30.0);
            if (!reply_line) break;
            json reply = json::parse(*reply_line, nullptr, false);
            if (reply.is_discarded() || !reply.contains("result")) continue;
            const json& result = reply["result"];
            if (result.value("isError", true)) continue;
            auto content = result.value("content", json::array());
            if (content.empty()) continue;
            json envelope = json::parse(content[0].value("text", ""), nullptr, false);
            validated[tool] = !envelope.is_discarded() && envelope.value("ok", false);
        }
        service.close_stdin();
        service.wait(5.0);
    } catch (const Error&) {
        // transport failures leave endpoints unvalidated
    }
    return validated;
}

ConversionRecord run_rrf_loop(const RepositoryWorkspace& workspace, const SymbolTable& table,
                              const CodeReport& report, const EnvironmentHandle& env,
                              const EnvironmentSpec& spec, int max_rounds, Gateway& gateway,
                              const RunConfig& config) {
    ConversionRecord record;
    record.env_status = env.status;
    if (env.status != "ready") throw make_error("env-not-ready", "environment must be ready");

    GenerationRules rules;
    ServiceBundle bundle;
    std::vector<ShapeFinding> shape;

    record.node_trace.push_back("generate");
    ++record.generate_invocations;
    try {
        bundle = generate_bundle(report, table, rules, workspace, spec.packages, gateway);
    } catch (const TemplateViolation& violation) {
        bundle = violation.bundle();
        shape = violation.findings();
    }
    bundle.write_to(workspace.bundle_dir);
    record.service_name = bundle.service_name;
    record.bundle_path = workspace.bundle_dir.string();

    for (int attempt = 0; attempt <= max_rounds; ++attempt) {
        if (shape.empty()) shape = check_bundle_shape(bundle);
        std::vector<ValidationFinding> import_findings;

        if (shape.empty()) {
            record.node_trace.push_back("code_check");
            import_findings = validate_imports(bundle, table);
            if (!import_findings.empty()) {
                auto repair = repair_imports(import_findings, bundle, table, workspace, gateway);
                if (repair.progressed) {
                    bundle = repair.bundle;
                    bundle.write_to(workspace.bundle_dir);
                }
                import_findings = repair.after;
            }
        }

        RunOutcome outcome;
        if (!shape.empty()) {
            outcome.status = "fail";
            std::string text = "BundleShapeError: the bundle violates the service shape rules\n";
            for (const auto& f : shape) text += "  " + f.kind + " " + f.file + ": " + f.detail + "\n";
            outcome.traceback = text;
        } else if (!import_findings.empty()) {
            outcome.status = "fail";
            std::string text = "ImportValidationError: imports do not resolve against the "
                               "available-symbols table\n";
            for (const auto& f : import_findings) text += "  " + f.detail + "\n";
            outcome.traceback = text;
        } else {
            record.node_trace.push_back("run");
            outcome = run_tests(bundle, env, workspace, config);
        }
        record.outcomes.push_back(outcome);

        record.last_shape_findings.clear();
        for (const auto& f : shape)
            record.last_shape_findings.push_back(
                {{"kind", f.kind}, {"file", f.file}, {"detail", f.detail}});
        record.last_import_findings.clear();
        for (const auto& f : import_findings) record.last_import_findings.push_back(f.to_json());
        record.signature_mismatch = !signature_mismatches(bundle, table).empty();

        if (outcome.status == "pass") {
            auto wire = wire_validate_endpoints(bundle, workspace.bundle_dir, env, workspace, config);
            int validated = 0;
            for (const auto& [tool, wire_ok] : wire) {
                auto test_it = outcome.per_test.find("test_" + tool);
                bool test_ok = test_it != outcome.per_test.end() && test_it->second;
                if (wire_ok && test_ok) ++validated;
            }
            record.validated_endpoints = validated;
            // Success needs a passing run AND at least three validated
            // endpoints.
            record.final_status = validated >= 3 ? "success" : "failure";
            break;
        }

        if (attempt == max_rounds) break;

        record.node_trace.push_back("review");
        RepairPlan plan;
        try {
            plan = review_failure(outcome, bundle, workspace, table, gateway);
        } catch (const Error& error) {
            record.error = std::string("review failed: ") + error.what();
            break;
        }
        record.repair_plans.push_back(plan);
        record.rounds_used = static_cast<int>(record.repair_plans.size());

        record.node_trace.push_back("generate");
        ++record.generate_invocations;
        shape.clear();
        std::string diff;
        try {
            bundle = regenerate_with_plan(bundle, plan, &diff);
        } catch (const TemplateViolation& violation) {
            bundle = violation.bundle();
            shape = violation.findings();
        } catch (const Error& error) {
            record.error = std::string("regeneration failed: ") + error.what();
            break;
        }
        bundle.write_to(workspace.bundle_dir);
        write_file(workspace.bundle_dir / "diff_history" /
                       ("round-" + std::to_string(record.rounds_used) + ".diff"),
                   diff.empty() ? "(no textual change recorded)\n" : diff);
    }

    if (record.final_status == "success") record.node_trace.push_back("finish");
    return record;
}

fs::path finalize_bundle(const ConversionRecord& record, const ServiceBundle& bundle,
                         const RepositoryWorkspace& workspace, const fs::path& output_root,
                         const RunConfig& config) {
    if (record.final_status != "success")
        throw make_error("invalid-argument", "only successful conversions can be finalized");

    fs::path security_path = workspace.reports_dir / "security_report.json";
    if (fs::exists(security_path)) {
        // Blocking findings prevent finalization unless explicitly waived.
        auto parsed = read_json_file(security_path);
        for (const auto& axis : {"confidentiality", "integrity", "availability"})
            for (const auto& f : parsed.at("findings").value(axis, json::array()))
                if (f.value("severity", "") == "blocking" &&
                    config.security.waived_rules.count(f.value("rule_id", "")) == 0)
                    throw make_error("blocking-findings",
                                     "security scan blocks finalization: " + f.value("detail", ""));
    }

    fs::create_directories(output_root);
    fs::path service_dir = output_root / bundle.service_name;
    if (fs::exists(service_dir)) fs::remove_all(service_dir);
    bundle.write_to(service_dir);

    // Vendored copy of the repository modules the adapter imports, so the
    // packaged service runs from its own directory.
    std::set<std::string> roots;
    for (const auto& endpoint : bundle.manifest.value("endpoints", json::array())) {
        std::string module = endpoint.value("target", json::object()).value("module", "");
        if (!module.empty()) roots.insert(root_component(module));
    }
    fs::path lib_dir = service_dir / "lib";
    fs::create_directories(lib_dir);
    for (const auto& root : roots) {
        fs::path as_package = workspace.source_dir / root;
        fs::path as_module = workspace.source_dir / (root + ".py");
        if (fs::is_directory(as_package))
            fs::copy(as_package, lib_dir / root, fs::copy_options::recursive);
        else if (fs::exists(as_module))
            fs::copy_file(as_module, lib_dir / (root + ".py"));
    }
    json manifest = bundle.manifest;
    manifest["lib_path"] = "lib";
    manifest["python"] = (workspace.env_dir / "bin" / "python").string();
    manifest["source"] = {{"full_name", record.repo_full_name}, {"url", record.repo_url}};
    write_json_file(service_dir / "manifest.json", manifest);
    if (fs::exists(security_path))
        fs::copy_file(security_path, service_dir / "security_report.json");

    // One atomic commit per finalized service; finalizations are serialized.
    static std::mutex commit_mutex;
    std::lock_guard<std::mutex> lock(commit_mutex);
    auto git = [&](const std::vector<std::string>& args) {
        RunSpec spec;
        spec.argv = {"git", "-C", output_root.string(), "-c", "user.name=mcpforge",
                     "-c", "user.email=mcpforge@localhost"};
        spec.argv.insert(spec.argv.end(), args.begin(), args.end());
        spec.env = {{"PATH", "/usr/local/bin:/usr/bin:/bin"}, {"HOME", output_root.string()},
                    {"LC_ALL", "C"}, {"GIT_TERMINAL_PROMPT", "0"}};
        spec.timeout_seconds = 60.0;
        return run_process(spec);
    };
    if (!fs::exists(output_root / ".git")) {
        auto init = git({"init", "--quiet"});
        if (!init.ok()) throw make_error("commit-failed", "cannot initialize the output repository");
    }
    auto add = git({"add", "--", bundle.service_name});
    if (!add.ok()) throw make_error("commit-failed", "git add failed: " + add.err);
    auto commit = git({"commit", "--quiet", "-m", "Add " + bundle.service_name + " MCP service"});
    if (!commit.ok()) throw make_error("commit-failed", "git commit failed: " + commit.err);
    return service_dir;
}

}  // namespace mcpforge
