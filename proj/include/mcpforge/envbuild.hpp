#pragma once

#include <string>
#include <vector>

#include "mcpforge/config.hpp"
#include "mcpforge/repo.hpp"

namespace mcpforge {

struct RuntimeResolution {
    std::string version;  // major.minor
    std::string note;     // non-empty when a declared pin was unusable
};

struct EnvironmentSpec {
    std::string runtime_version = "3.10";
    std::vector<std::string> packages;  // requirement strings, verbatim
    std::string source_of_truth = "default";  // requirements-file | container-file | manifest | default
};

struct EnvironmentHandle {
    fs::path env_path;
    fs::path python;  // interpreter inside the environment
    EnvironmentSpec spec;
    std::string install_log;
    std::string status = "failed";  // ready | failed
    std::string failure_kind;       // runtime-unavailable | install-failed | import-check-failed
};

// Version pinned in repository metadata when present, else the 3.10 default.
RuntimeResolution resolve_runtime(const RepositoryWorkspace& workspace);

// Precedence: requirements.txt > container file install directives >
// project manifest > empty.
EnvironmentSpec extract_dependencies(const RepositoryWorkspace& workspace);

// Creates an isolated environment under the workspace and installs the spec
// packages through the package installer, argument list only.
EnvironmentHandle provision_environment(const EnvironmentSpec& spec,
                                        const RepositoryWorkspace& workspace,
                                        const RunConfig& config);

// First requirement token: name without extras, version pins, or markers.
std::string requirement_package_name(const std::string& requirement);

}  // namespace mcpforge
