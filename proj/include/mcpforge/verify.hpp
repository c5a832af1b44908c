#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcpforge/config.hpp"
#include "mcpforge/envbuild.hpp"
#include "mcpforge/generator.hpp"
#include "mcpforge/repo.hpp"

namespace mcpforge {

struct ImportBinding {
    std::string importing_file;
    std::string module_path;  // referenced module
    std::string symbol_name;  // empty for plain "import m"
    int line = 0;
};

struct ValidationFinding {
    ImportBinding binding;
    std::string kind;  // missing-module | missing-symbol
    std::string detail;

    json to_json() const;
};

struct RunOutcome {
    std::string status = "fail";  // pass | fail
    int tests_run = 0;
    int tests_passed = 0;
    std::optional<std::string> traceback;
    double duration_seconds = 0.0;
    std::map<std::string, bool> per_test;  // test function name -> passed

    json to_json() const;
};

struct ConversionRecord {
    std::string repo_full_name;
    std::string repo_url;
    std::vector<std::string> node_trace;
    int rounds_used = 0;
    std::vector<RunOutcome> outcomes;
    std::vector<RepairPlan> repair_plans;
    std::string final_status = "failure";  // success | failure
    int validated_endpoints = 0;
    double wall_time_seconds = 0.0;
    std::optional<std::string> failure_category;

    // evidence the failure classifier reads
    std::string env_status;
    std::string env_failure_kind;
    bool untoolable = false;
    int generate_invocations = 0;
    std::vector<json> last_import_findings;
    std::vector<json> last_shape_findings;
    bool signature_mismatch = false;

    std::string service_name;
    std::string bundle_path;
    std::string output_path;
    std::string error;

    json to_json() const;
};

// Eq.-style membership check of bundle imports against the symbol table:
// a repository binding passes iff the module is in the table and, for
// from-imports, the symbol is in that module's public set. Bindings that
// target third-party packages are deferred to run-time testing.
std::vector<ValidationFinding> validate_imports(const ServiceBundle& bundle,
                                                const SymbolTable& table);

std::vector<ImportBinding> collect_import_bindings(const ServiceBundle& bundle);

struct ImportRepairResult {
    ServiceBundle bundle;
    std::vector<ValidationFinding> before;
    std::vector<ValidationFinding> after;
    bool progressed = false;
};

ImportRepairResult repair_imports(const std::vector<ValidationFinding>& findings,
                                  const ServiceBundle& bundle, const SymbolTable& table,
                                  const RepositoryWorkspace& workspace, Gateway& gateway);

RunOutcome run_tests(const ServiceBundle& bundle, const EnvironmentHandle& env,
                     const RepositoryWorkspace& workspace, const RunConfig& config);

RepairPlan review_failure(const RunOutcome& outcome, const ServiceBundle& bundle,
                          const RepositoryWorkspace& workspace, const SymbolTable& table,
                          Gateway& gateway);

ConversionRecord run_rrf_loop(const RepositoryWorkspace& workspace, const SymbolTable& table,
                              const CodeReport& report, const EnvironmentHandle& env,
                              const EnvironmentSpec& spec, int max_rounds, Gateway& gateway,
                              const RunConfig& config);

// Packages a successful conversion into the output layout and records it as
// one atomic version-control commit. Returns the service directory.
fs::path finalize_bundle(const ConversionRecord& record, const ServiceBundle& bundle,
                         const RepositoryWorkspace& workspace, const fs::path& output_root,
                         const RunConfig& config);

// Endpoint call arguments that cannot match the target symbol's signature.
std::vector<std::string> signature_mismatches(const ServiceBundle& bundle, const SymbolTable& table);

// Rewrites workspace paths to a stable placeholder and drops interpreter
// stack frames, so prompts stay deterministic across machines.
std::string sanitize_traceback(const std::string& traceback, const fs::path& workspace_root);

// Per-endpoint round trip through the served wire interface.
std::map<std::string, bool> wire_validate_endpoints(const ServiceBundle& bundle,
                                                    const fs::path& bundle_dir,
                                                    const EnvironmentHandle& env,
                                                    const RepositoryWorkspace& workspace,
                                                    const RunConfig& config);

}  // namespace mcpforge
