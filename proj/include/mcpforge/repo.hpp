#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcpforge/gateway.hpp"
#include "mcpforge/pysrc.hpp"
#include "mcpforge/util.hpp"

namespace mcpforge {

struct RepositoryWorkspace {
    fs::path root;        // <workspace-root>/<run-id>
    fs::path source_dir;  // root / "source"
    fs::path reports_dir; // root / "reports"
    fs::path env_dir;     // root / "env"
    fs::path bundle_dir;  // root / "bundle"
    std::string run_id;
    std::string source_url;
    std::string commit_id;
    std::optional<std::string> readme_text;
};

struct SymbolRecord {
    std::string name;
    std::string kind;  // "function" | "type-constructor"
    std::vector<pysrc::Param> signature;
    std::string defined_in;  // source file, relative to the source dir
    int line = 0;
};

struct SymbolTable {
    // module path -> name -> record; modules with zero public symbols keep
    // their (empty) entry so module existence stays checkable.
    std::map<std::string, std::map<std::string, SymbolRecord>> modules;
    std::vector<json> parse_errors;  // [{file, detail}]

    bool has_module(const std::string& module_path) const;
    const SymbolRecord* find(const std::string& module_path, const std::string& symbol) const;
    size_t public_symbol_count() const;
    json to_json() const;
    static SymbolTable from_json(const json& value);
    std::string digest() const;  // compact textual form for prompts
};

struct CandidateEndpoint {
    std::string module;
    std::string symbol;
    std::string tool_name;
    std::string description;
};

struct CodeReport {
    std::vector<std::string> core_capabilities;
    std::map<std::string, std::string> module_summaries;
    std::vector<std::pair<std::string, std::string>> dependency_edges;
    std::vector<std::pair<std::string, std::string>> doc_links;
    std::vector<CandidateEndpoint> candidate_endpoints;

    json to_json() const;
};

RepositoryWorkspace clone_repository(const std::string& url, const fs::path& workspace_root,
                                     const std::string& run_id = "");

SymbolTable build_symbol_table(const RepositoryWorkspace& workspace);

CodeReport analyze_repository(const RepositoryWorkspace& workspace, const SymbolTable& table,
                              Gateway& gateway);

// Module-scoped dependency edges from top-level imports within the repo.
std::vector<std::pair<std::string, std::string>> internal_dependency_edges(
    const RepositoryWorkspace& workspace, const SymbolTable& table);

}  // namespace mcpforge
