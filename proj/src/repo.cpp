#include "mcpforge/repo.hpp"

#include <algorithm>
#include <set>

#include "mcpforge/errors.hpp"
#include "mcpforge/subprocess.hpp"

namespace mcpforge {

namespace {

const char* kReportSystem =
    "You analyze a code repository from its README and public symbol listing. Reply with JSON "
    "{\"core_capabilities\": [..], \"module_summaries\": {module: summary}, "
    "\"dependency_edges\": [[caller, callee]..], \"doc_links\": [[capability, anchor]..], "
    "\"candidate_endpoints\": [{\"module\", \"symbol\", \"tool_name\", \"description\"}..]}. "
    "Candidate endpoints must reference listed public symbols that take plain data arguments.";

std::map<std::string, std::string> minimal_env() {
    return {{"PATH", "/usr/local/bin:/usr/bin:/bin"}, {"HOME", "/tmp"}, {"LC_ALL", "C"},
            {"GIT_TERMINAL_PROMPT", "0"}};
}

RunResult run_git(const std::vector<std::string>& args, const fs::path& cwd, double timeout = 120.0) {
    RunSpec spec;
    spec.argv = {"git"};
    spec.argv.insert(spec.argv.end(), args.begin(), args.end());
    spec.cwd = cwd.string();
    spec.env = minimal_env();
    spec.timeout_seconds = timeout;
    return run_process(spec);
}

bool plausible_repo_url(const std::string& url) {
    if (starts_with(url, "file://")) return url.size() > 8;
    if (starts_with(url, "https://") || starts_with(url, "http://")) {
        auto rest = url.substr(url.find("://") + 3);
        return rest.find('/') != std::string::npos && rest.size() > 3;
    }
    if (starts_with(url, "git@")) return url.find(':') != std::string::npos;
    return false;
}

std::string module_path_for(const fs::path& relative) {
    std::string flat = relative.string();
    if (ends_with(flat, ".py")) flat = flat.substr(0, flat.size() - 3);
    flat = replace_all(flat, "/", ".");
    if (ends_with(flat, ".__init__")) flat = flat.substr(0, flat.size() - 9);
    if (flat == "__init__") flat = "";
    return flat;
}

}  // namespace

bool SymbolTable::has_module(const std::string& module_path) const {
    return modules.count(module_path) > 0;
}

const SymbolRecord* SymbolTable::find(const std::string& module_path,
                                      const std::string& symbol) const {
    auto mod = modules.find(module_path);
    if (mod == modules.end()) return nullptr;
    auto rec = mod->second.find(symbol);
    return rec == mod->second.end() ? nullptr : &rec->second;
}

size_t SymbolTable::public_symbol_count() const {
    size_t n = 0;
    for (const auto& [_, records] : modules) n += records.size();
    return n;
}

json SymbolTable::to_json() const {
    json mods = json::object();
    for (const auto& [module_path, records] : modules) {
        json list = json::array();
        for (const auto& [_, rec] : records) {
            json params = json::array();
            for (const auto& p : rec.signature)
                params.push_back({{"name", p.name},
                                  {"annotation", p.annotation},
                                  {"has_default", p.has_default}});
            list.push_back({{"name", rec.name},
                            {"kind", rec.kind},
                            {"signature", params},
                            {"defined_in", rec.defined_in},
                            {"line", rec.line}});
        }
        mods[module_path] = list;
    }
    return json{{"schema_version", 1}, {"modules", mods}, {"parse_errors", parse_errors}};
}

SymbolTable SymbolTable::from_json(const json& value) {
    SymbolTable table;
    for (auto& [module_path, records] : value.at("modules").items()) {
        auto& slot = table.modules[module_path];
        for (const auto& rec : records) {
            SymbolRecord r;
            r.name = rec.at("name").get<std::string>();
            r.kind = rec.at("kind").get<std::string>();
            r.defined_in = rec.value("defined_in", "");
            r.line = rec.value("line", 0);
            for (const auto& p : rec.value("signature", json::array())) {
                pysrc::Param param;
                param.name = p.value("name", "");
                param.annotation = p.value("annotation", "");
                param.has_default = p.value("has_default", false);
                r.signature.push_back(std::move(param));
            }
            slot[r.name] = std::move(r);
        }
    }
    if (value.contains("parse_errors"))
        table.parse_errors = value["parse_errors"].get<std::vector<json>>();
    return table;
}

std::string SymbolTable::digest() const {
    std::string out;
    for (const auto& [module_path, records] : modules) {
        out += module_path.empty() ? "<root>" : module_path;
        out += ":";
        if (records.empty()) out += " (no public symbols)";
        for (const auto& [_, rec] : records) {
            std::vector<std::string> params;
            for (const auto& p : rec.signature)
                params.push_back(p.annotation.empty() ? p.name : p.name + ": " + p.annotation);
            out += " " + rec.name + "(" + join(params, ", ") + ")";
            if (rec.kind == "type-constructor") out += "[class]";
        }
        out += "\n";
    }
    return out;
}

json CodeReport::to_json() const {
    json endpoints = json::array();
    for (const auto& e : candidate_endpoints)
        endpoints.push_back({{"module", e.module},
                             {"symbol", e.symbol},
                             {"tool_name", e.tool_name},
                             {"description", e.description}});
    json edges = json::array();
    for (const auto& [a, b] : dependency_edges) edges.push_back({a, b});
    json links = json::array();
    for (const auto& [a, b] : doc_links) links.push_back({a, b});
    return json{{"core_capabilities", core_capabilities},
                {"module_summaries", module_summaries},
                {"dependency_edges", edges},
                {"doc_links", links},
                {"candidate_endpoints", endpoints}};
}

RepositoryWorkspace clone_repository(const std::string& url, const fs::path& workspace_root,
                                     const std::string& run_id) {
    if (!plausible_repo_url(url)) throw make_error("not-a-repository", "malformed URL: " + url);
    fs::create_directories(workspace_root);

    RepositoryWorkspace ws;
    ws.run_id = run_id.empty() ? next_run_id("run") : run_id;
    ws.root = workspace_root / ws.run_id;
    if (fs::exists(ws.root))
        throw make_error("workspace-collision", "workspace already exists: " + ws.root.string());
    ws.source_dir = ws.root / "source";
    ws.reports_dir = ws.root / "reports";
    ws.env_dir = ws.root / "env";
    ws.bundle_dir = ws.root / "bundle";
    fs::create_directories(ws.root);
    fs::create_directories(ws.reports_dir);
    ws.source_url = url;

    auto clone = run_git({"clone", "--quiet", "--depth", "1", url, ws.source_dir.string()},
                         workspace_root);
    if (!clone.ok()) {
        std::error_code ec;
        fs::remove_all(ws.root, ec);
        throw make_error("clone-failed", "git clone failed: " + trim(clone.err).substr(0, 400));
    }
    auto head = run_git({"rev-parse", "HEAD"}, ws.source_dir);
    if (!head.ok()) throw make_error("not-a-repository", "cannot resolve HEAD after clone");
    ws.commit_id = trim(head.out);

    if (auto readme = find_file_icase(ws.source_dir, "README.md"))
        ws.readme_text = read_file(*readme);
    else if (auto readme_txt = find_file_icase(ws.source_dir, "README.txt"))
        ws.readme_text = read_file(*readme_txt);
    else if (auto readme_bare = find_file_icase(ws.source_dir, "README"))
        ws.readme_text = read_file(*readme_bare);
    return ws;
}

SymbolTable build_symbol_table(const RepositoryWorkspace& workspace) {
    SymbolTable table;
    std::vector<fs::path> files;
    if (fs::exists(workspace.source_dir)) {
        for (auto it = fs::recursive_directory_iterator(workspace.source_dir);
             it != fs::recursive_directory_iterator(); ++it) {
            if (it->is_directory()) {
                auto name = it->path().filename().string();
                if (starts_with(name, ".")) it.disable_recursion_pending();
                continue;
            }
            if (it->path().extension() == ".py") files.push_back(it->path());
        }
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
        auto relative = fs::relative(file, workspace.source_dir);
        auto module = pysrc::scan_module(read_file(file));
        if (!module.ok()) {
            table.parse_errors.push_back(
                {{"file", relative.string()}, {"detail", join(module.errors, "; ")}});
            continue;
        }
        std::string module_path = module_path_for(relative);
        auto& slot = table.modules[module_path];  // keep empty modules listed

        auto add_record = [&](const std::string& name, const std::string& kind,
                              const std::vector<pysrc::Param>& signature, int line) {
            SymbolRecord rec;
            rec.name = name;
            rec.kind = kind;
            rec.signature = signature;
            rec.defined_in = relative.string();
            rec.line = line;
            slot[name] = std::move(rec);
        };

        if (module.export_list) {
            // Explicit export list wins: resolve each exported name against
            // defs, classes, then top-level import aliases (re-exports).
            for (const auto& name : *module.export_list) {
                if (name.empty()) continue;
                if (const auto* fn = module.find_function(name)) {
                    add_record(name, "function", fn->params, fn->line);
                    continue;
                }
                bool matched = false;
                for (const auto& cls : module.classes)
                    if (cls.name == name) {
                        add_record(name, "type-constructor", cls.init_params, cls.line);
                        matched = true;
                        break;
                    }
                if (matched) continue;
                for (const auto& imp : module.imports) {
                    if (!imp.top_level) continue;
                    std::string bound = !imp.alias.empty() ? imp.alias
                                        : imp.is_from      ? imp.symbol
                                                           : imp.module;
                    if (bound == name) {
                        add_record(name, "function", {}, imp.line);
                        matched = true;
                        break;
                    }
                }
            }
        } else {
            for (const auto& fn : module.functions)
                if (!fn.name.empty() && fn.name[0] != '_')
                    add_record(fn.name, "function", fn.params, fn.line);
            for (const auto& cls : module.classes)
                if (!cls.name.empty() && cls.name[0] != '_')
                    add_record(cls.name, "type-constructor", cls.init_params, cls.line);
        }
    }
    return table;
}

std::vector<std::pair<std::string, std::string>> internal_dependency_edges(
    const RepositoryWorkspace& workspace, const SymbolTable& table) {
    std::vector<std::pair<std::string, std::string>> edges;
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [module_path, _] : table.modules) {
        fs::path file = workspace.source_dir / (replace_all(module_path, ".", "/") + ".py");
        if (!fs::exists(file))
            file = workspace.source_dir / replace_all(module_path, ".", "/") / "__init__.py";
        if (!fs::exists(file)) continue;
        auto module = pysrc::scan_module(read_file(file));
        for (const auto& imp : module.imports) {
            if (!imp.top_level || imp.module.empty()) continue;
            if (table.has_module(imp.module) && imp.module != module_path &&
                seen.insert({module_path, imp.module}).second)
                edges.emplace_back(module_path, imp.module);
        }
    }
    return edges;
}

CodeReport analyze_repository(const RepositoryWorkspace& workspace, const SymbolTable& table,
                              Gateway& gateway) {
    if (table.public_symbol_count() == 0)
        throw make_error("untoolable",
                         "repository exposes no public callables suitable for endpoints");

    std::string readme = workspace.readme_text.value_or("(no README present)");
    if (readme.size() > 6000) readme = readme.substr(0, 6000);

    PromptRequest request;
    request.purpose = Purpose::CodeReport;
    request.system_text = kReportSystem;
    request.user_text = "README:\n" + readme + "\n\nPublic symbols by module:\n" + table.digest();
    request.schema_id = "code-report";
    auto completion = gateway.complete(request);
    json parsed = gateway.parse_structured(completion, request.schema_id);

    CodeReport report;
    report.core_capabilities = parsed["core_capabilities"].get<std::vector<std::string>>();
    for (auto& [module_path, summary] : parsed["module_summaries"].items())
        if (summary.is_string()) report.module_summaries[module_path] = summary.get<std::string>();
    for (const auto& edge : parsed["dependency_edges"])
        if (edge.is_array() && edge.size() == 2)
            report.dependency_edges.emplace_back(edge[0].get<std::string>(),
                                                 edge[1].get<std::string>());
    for (const auto& link : parsed["doc_links"])
        if (link.is_array() && link.size() == 2)
            report.doc_links.emplace_back(link[0].get<std::string>(), link[1].get<std::string>());

    for (const auto& e : parsed["candidate_endpoints"]) {
        CandidateEndpoint endpoint;
        endpoint.module = e["module"].get<std::string>();
        endpoint.symbol = e["symbol"].get<std::string>();
        endpoint.tool_name = e["tool_name"].get<std::string>();
        endpoint.description = e["description"].get<std::string>();
        // Endpoints proposing symbols outside the table are dropped silently.
        if (table.find(endpoint.module, endpoint.symbol) == nullptr) continue;
        report.candidate_endpoints.push_back(std::move(endpoint));
    }
    if (report.candidate_endpoints.empty())
        throw make_error("untoolable", "no candidate endpoint resolves through the symbol table");
    return report;
}

}  // namespace mcpforge
