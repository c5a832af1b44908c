// mcpforge command-line entry point.
#include <unistd.h>

#include <iostream>

#include <CLI11.hpp>

#include "mcpforge/bench.hpp"
#include "mcpforge/errors.hpp"
#include "mcpforge/pipeline.hpp"
#include "mcpforge/runtime.hpp"

namespace {

using namespace mcpforge;

std::map<std::string, std::string> environment_map(char** envp) {
    std::map<std::string, std::string> env;
    for (char** e = envp; e && *e; ++e) {
        std::string entry(*e);
        auto eq = entry.find('=');
        if (eq != std::string::npos) env[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return env;
}

Gateway make_gateway(const RunConfig& config) {
    if (config.gateway_mode == "replay") {
        if (config.transcript_path.empty())
            throw make_error("invalid-config", "replay mode needs --transcript");
        return Gateway(GatewayMode::Replay, Transcript::load(config.transcript_path));
    }
    auto backend =
        make_http_backend(config.gateway_endpoint.empty() ? "https://api.openai.com/v1/chat/completions"
                                                          : config.gateway_endpoint,
                          config.gateway_key, config.gateway_model);
    return Gateway(config.gateway_mode == "record" ? GatewayMode::Record : GatewayMode::Live,
                   backend);
}

std::unique_ptr<RepoSearchClient> make_search_client(const RunConfig& config) {
    if (!config.search_index_path.empty())
        return std::make_unique<StubSearchClient>(fs::path(config.search_index_path));
    return make_live_search_client("", config.search_token);
}

Governor make_governor(const RunConfig& config) {
    SecurityConfig security = config.security;
    if (security.whitelist_roots.empty() && !config.workspace_root.empty())
        security.whitelist_roots.push_back(config.workspace_root);
    fs::path log_path = config.output_root.empty()
                            ? fs::path("decision_log.jsonl")
                            : fs::path(config.output_root) / "decision_log.jsonl";
    return Governor(security, log_path);
}

int finish_record(const ConversionRecord& record) {
    std::cout << "conversion " << record.final_status << " for " << record.repo_full_name << "\n";
    if (record.final_status == "success") {
        std::cout << "  service: " << record.service_name << "\n"
                  << "  validated endpoints: " << record.validated_endpoints << "\n"
                  << "  rounds used: " << record.rounds_used << "\n"
                  << "  output: " << record.output_path << "\n";
        return 0;
    }
    std::cout << "  category: " << record.failure_category.value_or("(none)") << "\n"
              << "  error: " << record.error << "\n";
    return 1;
}

int cmd_search(const RunConfig& config, const std::string& query_text) {
    auto gateway = make_gateway(config);
    auto client = make_search_client(config);
    UserQuery query{query_text, ""};
    auto selected = select_repository(query, config.search_k, config.topic_m, *client, gateway);
    if (!selected) {
        std::cout << "no qualifying repository found\n";
        return 1;
    }
    std::cout << selected->full_name << " (" << selected->stars << " stars)\n"
              << selected->url << "\n";
    return 0;
}

int cmd_convert(const RunConfig& config, const std::string& repo_url,
                const std::string& query_text) {
    auto gateway = make_gateway(config);
    RepoCandidate candidate;
    if (!repo_url.empty()) {
        UserQuery query{query_text.empty() ? repo_url : query_text, repo_url};
        auto client = make_search_client(config);
        candidate = *select_repository(query, config.search_k, config.topic_m, *client, gateway);
    } else {
        auto client = make_search_client(config);
        UserQuery query{query_text, ""};
        auto selected = select_repository(query, config.search_k, config.topic_m, *client, gateway);
        if (!selected) {
            std::cout << "no qualifying repository found\n";
            return 1;
        }
        candidate = *selected;
    }
    auto record = convert_repository(candidate, config, gateway);
    std::cout << "record: " << (fs::path(config.workspace_root) / "" ).string() << "\n";
    return finish_record(record);
}

int cmd_scan(const RunConfig& config, const std::string& bundle_dir) {
    ServiceBundle bundle = ServiceBundle::load_from(bundle_dir);
    PathPolicy policy;
    policy.whitelist_roots = config.security.whitelist_roots;
    if (policy.whitelist_roots.empty())
        policy.whitelist_roots.push_back(fs::absolute(bundle_dir).string());
    policy.deny_overrides = config.security.deny_overrides;
    SecurityReport report = scan_bundle(bundle, policy);
    fs::path out = fs::path(bundle_dir) / "security_report.json";
    write_json_file(out, report.to_json());
    std::cout << report.to_json().dump(2) << "\n";
    std::cout << "report: " << out.string() << "\n";
    return report.has_blocking(config.security.waived_rules) ? 1 : 0;
}

int cmd_serve(const RunConfig& config, const std::string& registry_path) {
    ToolRegistry registry = ToolRegistry::load(registry_path);
    Governor governor = make_governor(config);
    ServiceExecutor executor(config.test_timeout_seconds);
    McpServer server(registry, governor, executor, config.security.pre_granted_tools);
    server.serve_stdio(std::cin, std::cout);
    return 0;
}

int cmd_ask(const RunConfig& config, const std::string& registry_path,
            const std::string& first_query) {
    auto gateway = make_gateway(config);
    ToolRegistry registry = ToolRegistry::load(registry_path);
    Governor governor = make_governor(config);
    ServiceExecutor executor(config.test_timeout_seconds);

    ConfirmationSource confirm = [&](const ExecutionPreview& preview) {
        if (config.security.pre_granted_tools.count(preview.endpoint) > 0)
            return Confirmation::Granted;
        if (preview.tier != "high") return Confirmation::Granted;
        if (!isatty(STDIN_FILENO)) return Confirmation::Withheld;
        std::cout << "high-risk call " << preview.endpoint << "\n"
                  << preview.to_json().dump(2) << "\napprove? [y/N] " << std::flush;
        std::string reply;
        std::getline(std::cin, reply);
        return (reply == "y" || reply == "Y" || reply == "yes") ? Confirmation::Granted
                                                                : Confirmation::Withheld;
    };

    SessionState session;
    session.original_query = {first_query, ""};
    std::string query_text = first_query;
    bool first = true;
    while (true) {
        if (query_text.empty()) {
            std::cout << (first ? "query> " : "follow-up (empty to quit)> ") << std::flush;
            if (!std::getline(std::cin, query_text)) break;
            if (trim(query_text).empty()) break;
        }
        if (first) session.original_query = {query_text, ""};
        try {
            InvocationPlan plan = first
                                      ? plan_invocation({query_text, ""}, registry, gateway)
                                      : replan(session, {query_text, ""}, registry, gateway);
            std::cout << "plan: " << plan.to_json().dump(2) << "\n";
            auto outcome = execute_plan(plan, session, registry, governor, executor, confirm);
            std::cout << outcome.answer_text << "\n";
            if (!outcome.denial_reason.empty())
                std::cout << "aborted by governance: " << outcome.denial_reason << "\n";
        } catch (const Error& error) {
            std::cout << "planning failed: " << error.what() << "\n";
        }
        first = false;
        query_text.clear();
        if (!isatty(STDIN_FILENO)) break;
    }
    return 0;
}

int cmd_bench(const RunConfig& config, const std::string& manifest_path,
              const std::string& report_path) {
    auto gateway = make_gateway(config);
    auto corpus = load_corpus_manifest(manifest_path);
    BenchReport report = run_bench(corpus, config, gateway);

    // Manifest comparison: designed outcomes must match exactly.
    int mismatches = 0;
    for (size_t i = 0; i < corpus.size(); ++i) {
        const auto& entry = report.per_case[i];
        bool status_ok = entry.value("final_status", "") == corpus[i].intended_status;
        bool rounds_ok = corpus[i].intended_status != "success" ||
                         entry.value("rounds_used", -1) == corpus[i].intended_rounds;
        bool category_ok = corpus[i].intended_status != "failure" ||
                           (!entry["failure_category"].is_null() &&
                            entry["failure_category"].get<std::string>() ==
                                corpus[i].intended_category);
        if (!(status_ok && rounds_ok && category_ok)) {
            ++mismatches;
            std::cout << "MISMATCH " << corpus[i].name << ": got "
                      << entry.value("final_status", "") << "/" << entry.value("rounds_used", 0)
                      << "/" << entry["failure_category"].dump() << "\n";
        }
    }

    fs::path out = report_path.empty() ? fs::path("bench_report.json") : fs::path(report_path);
    write_json_file(out, report.to_json());
    write_file(out.parent_path() / (out.stem().string() + "_summary.txt"), report.summary_table());
    std::cout << report.summary_table();
    std::cout << "report: " << out.string() << "\n";
    return mismatches == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv, char** envp) {
    CLI::App app{"mcpforge: convert open-source repositories into governed MCP tool services"};
    app.require_subcommand(1);

    std::string config_file;
    std::map<std::string, std::string> overrides;
    app.add_option("--config", config_file, "JSON config file");

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option_function<std::string>(
            "--workspace", [&](const std::string& v) { overrides["workspace_root"] = v; },
            "workspace root directory");
        cmd->add_option_function<std::string>(
            "--output", [&](const std::string& v) { overrides["output_root"] = v; },
            "output root directory");
        cmd->add_option_function<std::string>(
            "--mode", [&](const std::string& v) { overrides["gateway_mode"] = v; },
            "gateway mode: live | replay | record");
        cmd->add_option_function<std::string>(
            "--transcript", [&](const std::string& v) { overrides["transcript_path"] = v; },
            "replay transcript path");
        cmd->add_option_function<std::string>(
            "--search-k", [&](const std::string& v) { overrides["search_k"] = v; },
            "Top-K candidates to retrieve");
        cmd->add_option_function<std::string>(
            "--topics-m", [&](const std::string& v) { overrides["topic_m"] = v; },
            "maximum topic keywords");
        cmd->add_option_function<std::string>(
            "--max-rounds", [&](const std::string& v) { overrides["max_rounds"] = v; },
            "maximum repair rounds");
        cmd->add_option_function<std::string>(
            "--search-index", [&](const std::string& v) { overrides["search_index_path"] = v; },
            "stub search index file (tests)");
        cmd->add_option_function<std::string>(
            "--package-index", [&](const std::string& v) { overrides["package_index"] = v; },
            "local package index directory, or 'live'");
        cmd->add_option_function<std::string>(
            "--parallelism", [&](const std::string& v) { overrides["parallelism"] = v; },
            "concurrent conversions");
        cmd->add_flag_function(
            "--deterministic",
            [&](int64_t) { overrides["zero_timings"] = "true"; },
            "zero wall times in reports for byte-stable output");
    };

    std::string query_text, repo_url, bundle_dir, registry_path, manifest_path, report_path;

    auto* search_cmd = app.add_subcommand("search", "find a qualifying repository for a query");
    search_cmd->add_option("query", query_text, "task description")->required();
    add_common(search_cmd);

    auto* convert_cmd = app.add_subcommand("convert", "convert a repository into an MCP service");
    convert_cmd->add_option("--repo", repo_url, "explicit repository URL (skips search)");
    convert_cmd->add_option("--query", query_text, "task description used for search");
    add_common(convert_cmd);

    auto* scan_cmd = app.add_subcommand("scan", "security-scan a generated bundle");
    scan_cmd->add_option("bundle", bundle_dir, "bundle directory")->required();
    add_common(scan_cmd);

    auto* serve_cmd = app.add_subcommand("serve", "serve registered tools over stdio");
    serve_cmd->add_option("--registry", registry_path, "registry.json path")->required();
    add_common(serve_cmd);

    auto* ask_cmd = app.add_subcommand("ask", "plan and execute tool calls for a query");
    ask_cmd->add_option("--registry", registry_path, "registry.json path")->required();
    ask_cmd->add_option("query", query_text, "initial query (interactive when omitted)");
    add_common(ask_cmd);

    auto* bench_cmd = app.add_subcommand("bench", "run the conversion benchmark over a corpus");
    bench_cmd->add_option("--corpus", manifest_path, "corpus manifest file")->required();
    bench_cmd->add_option("--report", report_path, "bench report output path");
    add_common(bench_cmd);

    auto* config_cmd = app.add_subcommand("config", "print the effective configuration");
    add_common(config_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors exit 2
    }

    try {
        RunConfig config = load_config(config_file, environment_map(envp), overrides);
        if (config.workspace_root.empty()) config.workspace_root = "workspace";
        if (config.output_root.empty()) config.output_root = "output";

        if (config_cmd->parsed()) {
            std::cout << config.to_json().dump(2) << "\n";
            return 0;
        }
        if (search_cmd->parsed()) return cmd_search(config, query_text);
        if (convert_cmd->parsed()) {
            if (repo_url.empty() && query_text.empty()) {
                std::cerr << "convert needs --repo or --query\n";
                return 2;
            }
            return cmd_convert(config, repo_url, query_text);
        }
        if (scan_cmd->parsed()) return cmd_scan(config, bundle_dir);
        if (serve_cmd->parsed()) return cmd_serve(config, registry_path);
        if (ask_cmd->parsed()) return cmd_ask(config, registry_path, query_text);
        if (bench_cmd->parsed()) return cmd_bench(config, manifest_path, report_path);
    } catch (const Error& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << "\n";
        return 1;
    }
    return 2;
}
