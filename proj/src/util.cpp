#include "mcpforge/util.hpp"

#include <openssl/evp.h>

#include <atomic>
#include <cctype>
#include <fstream>
#include <random>
#include <sstream>

#include "mcpforge/errors.hpp"

namespace mcpforge {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::string to_lower(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

bool starts_with(const std::string& s, const std::string& prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> lines;
    std::string current;
    for (char c : text) {
        if (c == '\n') {
            lines.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    if (!current.empty()) lines.push_back(current);
    return lines;
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

namespace {
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}
}  // namespace

bool contains_word(const std::string& text, const std::string& ident) {
    if (ident.empty()) return false;
    size_t pos = 0;
    while ((pos = text.find(ident, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || !ident_char(text[pos - 1]);
        size_t end = pos + ident.size();
        bool right_ok = end >= text.size() || !ident_char(text[end]);
        if (left_ok && right_ok) return true;
        pos += 1;
    }
    return false;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    if (from.empty()) return text;
    size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, data.data(), data.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw make_error("io-error", "cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw make_error("io-error", "cannot write " + path.string());
    out << content;
}

void write_json_file(const fs::path& path, const json& value) {
    write_file(path, value.dump(2) + "\n");
}

json read_json_file(const fs::path& path) {
    return json::parse(read_file(path));
}

std::optional<fs::path> find_file_icase(const fs::path& dir, const std::string& name) {
    if (!fs::is_directory(dir)) return std::nullopt;
    std::string wanted = to_lower(name);
    std::vector<fs::path> hits;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        if (to_lower(entry.path().filename().string()) == wanted) hits.push_back(entry.path());
    }
    if (hits.empty()) return std::nullopt;
    std::sort(hits.begin(), hits.end());
    return hits.front();
}

std::string normalize_path(const std::string& path) {
    bool absolute = !path.empty() && path[0] == '/';
    std::vector<std::string> stack;
    std::string segment;
    std::istringstream in(path);
    while (std::getline(in, segment, '/')) {
        if (segment.empty() || segment == ".") continue;
        if (segment == "..") {
            if (!stack.empty() && stack.back() != "..") {
                stack.pop_back();
            } else if (!absolute) {
                stack.push_back("..");
            }
            continue;
        }
        stack.push_back(segment);
    }
    std::string out = absolute ? "/" : "";
    out += join(stack, "/");
    if (out.empty()) out = ".";
    return out;
}

bool path_under(const std::string& path, const std::string& root) {
    std::string p = normalize_path(path);
    std::string r = normalize_path(root);
    if (p == r) return true;
    if (!ends_with(r, "/")) r += "/";
    return starts_with(p, r);
}

TempDir::TempDir(const std::string& hint) {
    static std::atomic<uint64_t> counter{0};
    std::random_device rd;
    auto base = fs::temp_directory_path();
    for (int attempt = 0; attempt < 32; ++attempt) {
        auto candidate = base / (hint + "-" + std::to_string(rd() % 100000) + "-" +
                                 std::to_string(counter.fetch_add(1)));
        std::error_code ec;
        if (fs::create_directories(candidate, ec)) {
            path_ = candidate;
            return;
        }
    }
    throw make_error("io-error", "cannot create temp directory");
}

TempDir::~TempDir() {
    if (!keep_ && !path_.empty()) {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
}

std::string next_run_id(const std::string& stem) {
    static std::atomic<uint64_t> counter{0};
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%03llu",
                  static_cast<unsigned long long>(counter.fetch_add(1)));
    return stem + "-" + buf;
}

}  // namespace mcpforge
