#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace mcpforge {

using json = nlohmann::json;
namespace fs = std::filesystem;

// ---- strings ----
std::string trim(const std::string& s);
std::string to_lower(std::string s);
bool starts_with(const std::string& s, const std::string& prefix);
bool ends_with(const std::string& s, const std::string& suffix);
std::vector<std::string> split_lines(const std::string& text);
std::string join(const std::vector<std::string>& parts, const std::string& sep);
bool contains_word(const std::string& text, const std::string& ident);
std::string replace_all(std::string text, const std::string& from, const std::string& to);

// SHA-256 hex digest.
std::string sha256_hex(const std::string& data);

// ---- filesystem ----
std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& content);
void write_json_file(const fs::path& path, const json& value);
json read_json_file(const fs::path& path);
std::optional<fs::path> find_file_icase(const fs::path& dir, const std::string& name);

// Lexically normalize a path: resolve "." and ".." segments without touching
// the filesystem. "a/../../b" becomes "../b".
std::string normalize_path(const std::string& path);

// True when `path` (normalized) is `root` or sits underneath it.
bool path_under(const std::string& path, const std::string& root);

// RAII temp directory for tests and scratch workspaces.
class TempDir {
public:
    explicit TempDir(const std::string& hint = "mcpforge");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const fs::path& path() const { return path_; }
    void keep() { keep_ = true; }

private:
    fs::path path_;
    bool keep_ = false;
};

// Monotone unique run ids: <stem>-NNN within one process.
std::string next_run_id(const std::string& stem);

}  // namespace mcpforge
