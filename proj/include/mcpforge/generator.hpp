#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcpforge/errors.hpp"
#include "mcpforge/gateway.hpp"
#include "mcpforge/repo.hpp"
#include "mcpforge/util.hpp"

namespace mcpforge {

inline const std::vector<std::string> kBundleFiles = {
    "main.py", "start_mcp.py", "mcp_service.py", "adapter.py", "test_adapter.py"};

struct EndpointDef {
    std::string tool_name;
    std::string description;
    std::string target_module;
    std::string target_symbol;
    std::string call_args;             // argument text forwarded to the target
    json params = json::array();       // [{name, type, required}]
    json example_args = json::object();
    std::vector<std::string> service_body;       // forwarding stub body lines
    std::vector<std::string> risk_annotations;   // reads-fs | writes-fs | network | executes-subprocess | none
};

struct GenerationRules {
    // Closed wire-type set; the conversion table is total over it.
    std::map<std::string, std::string> wire_to_python = {
        {"text", "str"},           {"integer", "int"},
        {"real", "float"},         {"boolean", "bool"},
        {"list-of-text", "list"},  {"opaque-file-path", "str"},
    };
    bool dependency_check_at_start = true;
    std::string digest() const;
};

struct ServiceBundle {
    std::string service_name;
    std::map<std::string, std::string> files;  // exactly the five bundle files
    json manifest = json::object();
    std::string workspace_ref;  // run id

    void write_to(const fs::path& dir) const;
    static ServiceBundle load_from(const fs::path& dir);
};

struct RepairStep {
    std::string file;
    int start_line = 0;  // 1-based, inclusive
    int end_line = 0;    // inclusive
    std::string replacement;
    std::string explanation;
};

struct RepairPlan {
    std::string root_cause;
    std::vector<RepairStep> steps;

    json to_json() const;
    static RepairPlan from_json(const json& value);
};

struct ShapeFinding {
    std::string kind;  // missing-file | extra-file | non-forwarding-service | sync-adapter | manifest-mismatch | scan-error
    std::string file;
    std::string detail;
};

// Thrown when generated or repaired output breaks the bundle shape rules;
// carries the offending bundle so the repair loop can keep working on it.
class TemplateViolation : public Error {
public:
    TemplateViolation(ServiceBundle bundle, std::vector<ShapeFinding> findings)
        : Error("template-violation", findings.empty() ? "shape violation" : findings.front().detail),
          bundle_(std::move(bundle)),
          findings_(std::move(findings)) {}
    const ServiceBundle& bundle() const { return bundle_; }
    const std::vector<ShapeFinding>& findings() const { return findings_; }

private:
    ServiceBundle bundle_;
    std::vector<ShapeFinding> findings_;
};

ServiceBundle generate_bundle(const CodeReport& report, const SymbolTable& table,
                              const GenerationRules& rules, const RepositoryWorkspace& workspace,
                              const std::vector<std::string>& dependencies, Gateway& gateway);

// Applies a structured repair plan; only the named files change. The diff of
// every change is returned through `diff_out` when non-null.
ServiceBundle regenerate_with_plan(const ServiceBundle& bundle, const RepairPlan& plan,
                                   std::string* diff_out = nullptr);

std::vector<ShapeFinding> check_bundle_shape(const ServiceBundle& bundle);

// Declared side effects of a repository symbol, inferred from its body.
std::vector<std::string> infer_risk_annotations(const RepositoryWorkspace& workspace,
                                                const SymbolTable& table,
                                                const std::string& module_path,
                                                const std::string& symbol);

// Renders a JSON value as a Python literal (true -> True, null -> None).
std::string python_literal(const json& value);

}  // namespace mcpforge
