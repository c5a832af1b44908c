#include "mcpforge/envbuild.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "mcpforge/errors.hpp"
#include "mcpforge/subprocess.hpp"

namespace mcpforge {

namespace {

// First "X.Y" found in a version expression like ">=3.11,<3.13".
std::string first_major_minor(const std::string& text) {
    for (size_t i = 0; i + 2 < text.size() + 1; ++i) {
        if (!std::isdigit(static_cast<unsigned char>(text[i]))) continue;
        size_t j = i;
        while (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) ++j;
        if (j < text.size() && text[j] == '.' && j + 1 < text.size() &&
            std::isdigit(static_cast<unsigned char>(text[j + 1]))) {
            size_t k = j + 1;
            while (k < text.size() && std::isdigit(static_cast<unsigned char>(text[k]))) ++k;
            return text.substr(i, k - i);
        }
        i = j;
    }
    return "";
}

std::vector<std::string> requirement_lines(const std::string& content) {
    std::vector<std::string> out;
    for (const auto& raw : split_lines(content)) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#' || starts_with(line, "-")) continue;
        out.push_back(line);  // inline comments and environment markers stay verbatim
    }
    return out;
}

std::vector<std::string> dockerfile_packages(const std::string& content) {
    std::vector<std::string> packages;
    // Join continuation lines, then look for pip install directives.
    std::string joined = replace_all(content, "\\\n", " ");
    for (const auto& raw : split_lines(joined)) {
        std::string line = trim(raw);
        auto lower = to_lower(line);
        auto pip_at = lower.find("pip install");
        if (pip_at == std::string::npos) pip_at = lower.find("pip3 install");
        if (pip_at == std::string::npos) continue;
        std::string rest = line.substr(pip_at);
        rest = rest.substr(rest.find("install") + 7);
        // Directives can chain with &&; stop at the first shell connector.
        for (const auto& stop : {"&&", "||", ";", "#"}) {
            auto cut = rest.find(stop);
            if (cut != std::string::npos) rest = rest.substr(0, cut);
        }
        std::istringstream words(rest);
        std::string word;
        while (words >> word) {
            if (starts_with(word, "-")) {
                // skip flag and, for flags taking a value, the value itself
                if (word == "-r" || word == "--requirement" || word == "-i" || word == "--index-url")
                    words >> word;
                continue;
            }
            if (word == "install") continue;
            packages.push_back(word);
        }
    }
    return packages;
}

std::vector<std::string> manifest_packages(const std::string& content) {
    // Narrow TOML scan: the dependencies array of the [project] table.
    std::vector<std::string> packages;
    auto lines = split_lines(content);
    bool in_project = false;
    for (size_t i = 0; i < lines.size(); ++i) {
        std::string line = trim(lines[i]);
        if (starts_with(line, "[")) in_project = line == "[project]";
        if (!in_project) continue;
        if (!starts_with(line, "dependencies")) continue;
        std::string block = line.substr(line.find('=') + 1);
        size_t j = i;
        while (block.find(']') == std::string::npos && ++j < lines.size()) block += " " + lines[j];
        auto open = block.find('[');
        auto close = block.rfind(']');
        if (open == std::string::npos || close == std::string::npos) break;
        std::string inside = block.substr(open + 1, close - open - 1);
        for (auto& piece : split_lines(replace_all(inside, ",", "\n"))) {
            std::string item = trim(piece);
            if (item.size() >= 2 && (item.front() == '"' || item.front() == '\''))
                packages.push_back(item.substr(1, item.size() - 2));
        }
        break;
    }
    return packages;
}

std::vector<std::string> dedupe_by_name(const std::vector<std::string>& requirements) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& r : requirements)
        if (seen.insert(to_lower(requirement_package_name(r))).second) out.push_back(r);
    return out;
}

}  // namespace

std::string requirement_package_name(const std::string& requirement) {
    std::string name;
    for (char c : trim(requirement)) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            name.push_back(c);
            continue;
        }
        break;  // extras, pins, markers, inline comments
    }
    return name;
}

RuntimeResolution resolve_runtime(const RepositoryWorkspace& workspace) {
    RuntimeResolution resolution;
    resolution.version = "3.10";

    auto pin_from = [&](const std::string& text) { return first_major_minor(text); };

    fs::path version_file = workspace.source_dir / ".python-version";
    if (fs::exists(version_file)) {
        std::string pinned = pin_from(trim(read_file(version_file)));
        if (!pinned.empty()) {
            resolution.version = pinned;
            return resolution;
        }
        resolution.note = "unparseable .python-version pin; using default 3.10";
        return resolution;
    }

    fs::path manifest = workspace.source_dir / "pyproject.toml";
    if (fs::exists(manifest)) {
        for (const auto& raw : split_lines(read_file(manifest))) {
            std::string line = trim(raw);
            if (!starts_with(line, "requires-python")) continue;
            std::string pinned = pin_from(line);
            if (!pinned.empty()) {
                resolution.version = pinned;
            } else {
                resolution.note = "unparseable requires-python pin; using default 3.10";
            }
            return resolution;
        }
    }
    return resolution;
}

EnvironmentSpec extract_dependencies(const RepositoryWorkspace& workspace) {
    EnvironmentSpec spec;
    spec.runtime_version = resolve_runtime(workspace).version;

    fs::path requirements = workspace.source_dir / "requirements.txt";
    if (fs::exists(requirements)) {
        spec.packages = dedupe_by_name(requirement_lines(read_file(requirements)));
        spec.source_of_truth = "requirements-file";
        return spec;
    }
    auto container = find_file_icase(workspace.source_dir, "Dockerfile");
    if (container) {
        auto packages = dockerfile_packages(read_file(*container));
        if (!packages.empty()) {
            spec.packages = dedupe_by_name(packages);
            spec.source_of_truth = "container-file";
            return spec;
        }
    }
    fs::path manifest = workspace.source_dir / "pyproject.toml";
    if (fs::exists(manifest)) {
        auto packages = manifest_packages(read_file(manifest));
        if (!packages.empty()) {
            spec.packages = dedupe_by_name(packages);
            spec.source_of_truth = "manifest";
            return spec;
        }
    }
    return spec;
}

EnvironmentHandle provision_environment(const EnvironmentSpec& spec,
                                        const RepositoryWorkspace& workspace,
                                        const RunConfig& config) {
    EnvironmentHandle handle;
    handle.spec = spec;
    handle.env_path = workspace.env_dir;

    // Interpreter lookup is config-driven: exact version key, else the
    // "default" substitute when one is configured.
    std::string interpreter;
    if (auto it = config.runtime_paths.find(spec.runtime_version); it != config.runtime_paths.end())
        interpreter = it->second;
    else if (auto def = config.runtime_paths.find("default"); def != config.runtime_paths.end())
        interpreter = def->second;
    if (interpreter.empty()) {
        handle.failure_kind = "runtime-unavailable";
        handle.install_log = "no configured interpreter for runtime " + spec.runtime_version;
        write_file(workspace.root / "install_log.txt", handle.install_log + "\n");
        return handle;
    }

    std::map<std::string, std::string> env = {{"PATH", "/usr/local/bin:/usr/bin:/bin"},
                                              {"HOME", workspace.root.string()},
                                              {"LC_ALL", "C"}};

    RunSpec venv;
    venv.argv = {interpreter, "-m", "venv"};
    if (spec.packages.empty()) venv.argv.push_back("--without-pip");
    venv.argv.push_back(handle.env_path.string());
    venv.cwd = workspace.root.string();
    venv.env = env;
    venv.timeout_seconds = config.install_timeout_seconds;
    auto created = run_process(venv);
    handle.install_log += "$ " + join(venv.argv, " ") + "\n" + created.out + created.err;
    if (!created.ok()) {
        handle.failure_kind = "runtime-unavailable";
        write_file(workspace.root / "install_log.txt", handle.install_log);
        return handle;
    }
    handle.python = handle.env_path / "bin" / "python";

    if (!spec.packages.empty()) {
        fs::path req_file = handle.env_path / "requirements.in";
        write_file(req_file, join(spec.packages, "\n") + "\n");

        RunSpec install;
        install.argv = {handle.python.string(), "-m", "pip", "install",
                        "--disable-pip-version-check", "-r", req_file.string()};
        if (!config.package_index.empty() && config.package_index != "live") {
            install.argv.push_back("--no-index");
            install.argv.push_back("--find-links");
            install.argv.push_back(config.package_index);
        }
        install.cwd = workspace.root.string();
        install.env = env;
        install.timeout_seconds = config.install_timeout_seconds;
        auto installed = run_process(install);
        handle.install_log += "\n$ " + join(install.argv, " ") + "\n" + installed.out + installed.err;
        if (!installed.ok()) {
            handle.failure_kind = installed.timed_out ? "install-timeout" : "install-failed";
            write_file(workspace.root / "install_log.txt", handle.install_log);
            return handle;
        }

        if (config.verify_imports) {
            // Import attempt per declared package, inside the environment.
            std::vector<std::string> import_names;
            for (const auto& requirement : spec.packages) {
                std::string name = requirement_package_name(requirement);
                if (!name.empty()) import_names.push_back(replace_all(name, "-", "_"));
            }
            RunSpec probe;
            probe.argv = {handle.python.string(), "-c",
                          "import importlib, sys\n"
                          "for name in sys.argv[1:]:\n"
                          "    importlib.import_module(name)\n"};
            probe.argv.insert(probe.argv.end(), import_names.begin(), import_names.end());
            probe.cwd = workspace.root.string();
            probe.env = env;
            probe.timeout_seconds = config.install_timeout_seconds;
            auto probed = run_process(probe);
            handle.install_log += "\n$ import check: " + join(import_names, ", ") + "\n" + probed.err;
            if (!probed.ok()) {
                handle.failure_kind = "import-check-failed";
                write_file(workspace.root / "install_log.txt", handle.install_log);
                return handle;
            }
        }
    }

    handle.status = "ready";
    write_file(workspace.root / "install_log.txt", handle.install_log);
    return handle;
}

}  // namespace mcpforge
