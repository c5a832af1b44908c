#include "mcpforge/pipeline.hpp"

#include <chrono>

#include "mcpforge/bench.hpp"
#include "mcpforge/security.hpp"

namespace mcpforge {

ConversionRecord convert_repository(const RepoCandidate& candidate, const RunConfig& config,
                                    Gateway& gateway, const std::string& run_id) {
    auto started = std::chrono::steady_clock::now();
    ConversionRecord record;
    record.repo_full_name = candidate.full_name;
    record.repo_url = candidate.url;

    RepositoryWorkspace workspace;
    auto stamp_time = [&] {
        record.wall_time_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    };
    auto finish_failure = [&] {
        stamp_time();
        if (record.final_status != "success") record.failure_category = classify_failure(record);
        if (!workspace.root.empty())
            write_json_file(workspace.reports_dir / "conversion_record.json", record.to_json());
        return record;
    };

    record.node_trace.push_back("download");
    try {
        workspace = clone_repository(candidate.url, config.workspace_root, run_id);
    } catch (const Error& error) {
        record.error = error.what();
        record.env_status = "failed";
        record.env_failure_kind = "clone-failed";
        return finish_failure();
    }

    record.node_trace.push_back("analysis");
    SymbolTable table = build_symbol_table(workspace);
    write_json_file(workspace.reports_dir / "symbols.json", table.to_json());
    write_json_file(workspace.reports_dir / "parse_errors.json",
                    json{{"schema_version", 1}, {"errors", table.parse_errors}});

    CodeReport report;
    try {
        report = analyze_repository(workspace, table, gateway);
        write_json_file(workspace.reports_dir / "code_report.json", report.to_json());
    } catch (const Error& error) {
        record.error = error.what();
        if (error.code() == "untoolable") record.untoolable = true;
        return finish_failure();
    }

    record.node_trace.push_back("env");
    EnvironmentSpec spec = extract_dependencies(workspace);
    EnvironmentHandle env = provision_environment(spec, workspace, config);
    record.env_status = env.status;
    record.env_failure_kind = env.failure_kind;
    if (env.status != "ready") {
        record.error = "environment provisioning failed: " + env.failure_kind;
        return finish_failure();
    }

    ConversionRecord loop =
        run_rrf_loop(workspace, table, report, env, spec, config.max_rounds, gateway, config);
    // merge loop bookkeeping into the pipeline record
    record.node_trace.insert(record.node_trace.end(), loop.node_trace.begin(),
                             loop.node_trace.end());
    record.rounds_used = loop.rounds_used;
    record.outcomes = loop.outcomes;
    record.repair_plans = loop.repair_plans;
    record.final_status = loop.final_status;
    record.validated_endpoints = loop.validated_endpoints;
    record.generate_invocations = loop.generate_invocations;
    record.last_import_findings = loop.last_import_findings;
    record.last_shape_findings = loop.last_shape_findings;
    record.signature_mismatch = loop.signature_mismatch;
    record.service_name = loop.service_name;
    record.bundle_path = loop.bundle_path;
    if (record.error.empty()) record.error = loop.error;

    if (record.final_status == "success") {
        ServiceBundle bundle = ServiceBundle::load_from(workspace.bundle_dir);
        PathPolicy policy;
        policy.whitelist_roots = config.security.whitelist_roots;
        if (policy.whitelist_roots.empty())
            policy.whitelist_roots.push_back(workspace.root.string());
        policy.deny_overrides = config.security.deny_overrides;
        SecurityReport security = scan_bundle(bundle, policy);
        write_json_file(workspace.reports_dir / "security_report.json", security.to_json());

        try {
            fs::path out = finalize_bundle(record, bundle, workspace, config.output_root, config);
            record.output_path = out.string();
        } catch (const Error& error) {
            record.error = error.what();
        }
    }

    stamp_time();
    if (record.final_status != "success") record.failure_category = classify_failure(record);
    write_json_file(workspace.reports_dir / "conversion_record.json", record.to_json());
    return record;
}

}  // namespace mcpforge
