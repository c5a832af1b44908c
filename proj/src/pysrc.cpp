#include "mcpforge/pysrc.hpp"

#include <cctype>

#include "mcpforge/util.hpp"

namespace mcpforge::pysrc {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

// Collapses the raw source into logical lines: strings survive verbatim,
// comments are stripped, and physical lines joined inside brackets or after
// a trailing backslash.
struct Tokenizer {
    const std::string& src;
    std::vector<LogicalLine> out;
    std::vector<std::string> errors;

    explicit Tokenizer(const std::string& s) : src(s) {}

    void run() {
        size_t i = 0;
        int physical_line = 1;
        while (i < src.size()) {
            LogicalLine logical;
            logical.line = physical_line;
            int depth = 0;
            bool saw_content = false;
            bool done = false;
            int indent = 0;
            bool counting_indent = true;
            std::string text;

            while (i < src.size() && !done) {
                char c = src[i];
                if (counting_indent) {
                    if (c == ' ') {
                        ++indent;
                        ++i;
                        continue;
                    }
                    if (c == '\t') {
                        indent += 8;
                        ++i;
                        continue;
                    }
                    counting_indent = false;
                }
                if (c == '#') {  // comment to end of physical line
                    while (i < src.size() && src[i] != '\n') ++i;
                    continue;
                }
                if (c == '\'' || c == '"') {
                    size_t consumed = consume_string(i, physical_line, text);
                    if (consumed == 0) return;  // error recorded
                    i = consumed;
                    saw_content = true;
                    continue;
                }
                if (c == '\\' && i + 1 < src.size() && src[i + 1] == '\n') {
                    i += 2;
                    ++physical_line;
                    text.push_back(' ');
                    continue;
                }
                if (c == '\n') {
                    ++physical_line;
                    ++i;
                    if (depth > 0) {
                        text.push_back(' ');
                        continue;
                    }
                    done = true;
                    continue;
                }
                if (c == '(' || c == '[' || c == '{') ++depth;
                if (c == ')' || c == ']' || c == '}') {
                    --depth;
                    if (depth < 0) {
                        errors.push_back("unbalanced bracket at line " + std::to_string(physical_line));
                        return;
                    }
                }
                text.push_back(c);
                saw_content = true;
                ++i;
            }
            if (depth > 0) {
                errors.push_back("unbalanced bracket at end of file (opened near line " +
                                 std::to_string(logical.line) + ")");
                return;
            }
            if (saw_content && !trim(text).empty()) {
                logical.indent = indent;
                logical.text = trim_right(text);
                out.push_back(std::move(logical));
            }
        }
    }

    static std::string trim_right(std::string s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
    }

    // Returns index past the string, or 0 on error. Appends the literal
    // (quotes included) to `text`.
    size_t consume_string(size_t i, int& physical_line, std::string& text) {
        char quote = src[i];
        bool triple = src.compare(i, 3, std::string(3, quote)) == 0;
        std::string closing = triple ? std::string(3, quote) : std::string(1, quote);
        size_t j = i + closing.size();
        text.append(src, i, closing.size());
        while (j < src.size()) {
            if (src[j] == '\\' && j + 1 < src.size()) {
                text.append(src, j, 2);
                if (src[j + 1] == '\n') ++physical_line;
                j += 2;
                continue;
            }
            if (src.compare(j, closing.size(), closing) == 0) {
                text.append(src, j, closing.size());
                return j + closing.size();
            }
            if (src[j] == '\n') {
                if (!triple) {
                    errors.push_back("unterminated string at line " + std::to_string(physical_line));
                    return 0;
                }
                ++physical_line;
                text.push_back(' ');  // keep logical line single-line
                ++j;
                continue;
            }
            text.push_back(src[j]);
            ++j;
        }
        errors.push_back("unterminated string at end of file");
        return 0;
    }
};

// Splits text on top-level commas, honoring () [] {} nesting and strings.
std::vector<std::string> split_top_level(const std::string& text, char sep) {
    std::vector<std::string> parts;
    int depth = 0;
    char in_string = 0;
    std::string current;
    for (size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_string) {
            current.push_back(c);
            if (c == '\\' && i + 1 < text.size()) {
                current.push_back(text[++i]);
            } else if (c == in_string) {
                in_string = 0;
            }
            continue;
        }
        if (c == '\'' || c == '"') {
            in_string = c;
            current.push_back(c);
            continue;
        }
        if (c == '(' || c == '[' || c == '{') ++depth;
        if (c == ')' || c == ']' || c == '}') --depth;
        if (c == sep && depth == 0) {
            parts.push_back(current);
            current.clear();
            continue;
        }
        current.push_back(c);
    }
    if (!trim(current).empty() || !parts.empty()) parts.push_back(current);
    return parts;
}

std::optional<std::vector<Param>> parse_params(const std::string& inside) {
    std::vector<Param> params;
    if (trim(inside).empty()) return params;
    for (auto& raw : split_top_level(inside, ',')) {
        std::string p = trim(raw);
        if (p.empty() || p == "*" || p == "/") continue;
        Param param;
        if (starts_with(p, "**")) {
            param.variadic = true;
            p = p.substr(2);
        } else if (starts_with(p, "*")) {
            param.variadic = true;
            p = p.substr(1);
        }
        // default
        auto eq = split_top_level(p, '=');
        if (eq.size() > 1) {
            param.has_default = true;
            p = trim(eq[0]);
        }
        // annotation
        auto colon = split_top_level(p, ':');
        if (colon.size() > 1) {
            param.annotation = trim(join({colon.begin() + 1, colon.end()}, ":"));
            p = trim(colon[0]);
        }
        if (p.empty() || !ident_start(p[0])) return std::nullopt;
        for (char c : p)
            if (!ident_char(c)) return std::nullopt;
        param.name = p;
        params.push_back(std::move(param));
    }
    return params;
}

// Parses "def name(params) ..." after the def keyword was recognized.
bool parse_def(const std::string& text, bool is_async, int line, Function& fn,
               std::vector<std::string>& errors) {
    size_t pos = is_async ? 9 : 3;  // past "async def" / "def"
    while (pos < text.size() && text[pos] == ' ') ++pos;
    size_t name_start = pos;
    while (pos < text.size() && ident_char(text[pos])) ++pos;
    std::string name = text.substr(name_start, pos - name_start);
    size_t open = text.find('(', pos);
    size_t close = text.rfind(')');
    if (name.empty() || open == std::string::npos || close == std::string::npos || close < open) {
        errors.push_back("malformed def at line " + std::to_string(line));
        return false;
    }
    auto params = parse_params(text.substr(open + 1, close - open - 1));
    if (!params) {
        errors.push_back("malformed parameter list at line " + std::to_string(line));
        return false;
    }
    std::string tail = trim(text.substr(close + 1));
    if (tail.empty() || tail.back() != ':') {
        // "-> ann:" tails are fine; anything not ending in a colon is not a def header
        errors.push_back("malformed def header at line " + std::to_string(line));
        return false;
    }
    fn.name = name;
    fn.params = std::move(*params);
    fn.is_async = is_async;
    fn.line = line;
    return true;
}

std::optional<std::string> docstring_of(const std::vector<LogicalLine>& body) {
    if (body.empty()) return std::nullopt;
    auto text = trim(body.front().text);
    if (starts_with(text, "\"\"\"") || starts_with(text, "'''") || starts_with(text, "\"") ||
        starts_with(text, "'")) {
        auto value = string_literal_value(text);
        if (value) return value;
    }
    return std::nullopt;
}

std::vector<std::string> parse_name_list(const std::string& inside) {
    std::vector<std::string> names;
    for (auto& part : split_top_level(inside, ',')) {
        auto value = string_literal_value(trim(part));
        if (value) names.push_back(*value);
    }
    return names;
}

void parse_import_line(const std::string& text, int line, bool top_level,
                       std::vector<Import>& imports) {
    if (starts_with(text, "import ")) {
        for (auto& part : split_top_level(text.substr(7), ',')) {
            std::string p = trim(part);
            Import imp;
            imp.line = line;
            imp.top_level = top_level;
            auto as_pos = p.find(" as ");
            if (as_pos != std::string::npos) {
                imp.alias = trim(p.substr(as_pos + 4));
                p = trim(p.substr(0, as_pos));
            }
            imp.module = p;
            if (!imp.module.empty()) imports.push_back(std::move(imp));
        }
        return;
    }
    // from X import a, b as c   |   from . import x   |   from m import *
    std::string rest = trim(text.substr(5));
    size_t import_kw = rest.find(" import ");
    std::string module_part, names_part;
    if (import_kw != std::string::npos) {
        module_part = trim(rest.substr(0, import_kw));
        names_part = trim(rest.substr(import_kw + 8));
    } else if (starts_with(rest, "import ")) {
        names_part = trim(rest.substr(7));
    } else {
        return;
    }
    int level = 0;
    while (level < static_cast<int>(module_part.size()) && module_part[level] == '.') ++level;
    std::string module = module_part.substr(level);
    if (!names_part.empty() && names_part.front() == '(') {
        names_part = names_part.substr(1);
        if (!names_part.empty() && names_part.back() == ')') names_part.pop_back();
    }
    for (auto& part : split_top_level(names_part, ',')) {
        std::string p = trim(part);
        if (p.empty()) continue;
        Import imp;
        imp.line = line;
        imp.top_level = top_level;
        imp.is_from = true;
        imp.relative_level = level;
        imp.module = module;
        if (p == "*") {
            imp.star = true;
            imports.push_back(std::move(imp));
            continue;
        }
        auto as_pos = p.find(" as ");
        if (as_pos != std::string::npos) {
            imp.alias = trim(p.substr(as_pos + 4));
            p = trim(p.substr(0, as_pos));
        }
        imp.symbol = p;
        imports.push_back(std::move(imp));
    }
}

// Records every dotted-name call in one logical line.
void scan_calls(const LogicalLine& ll, const std::string& enclosing, std::vector<CallSite>& out) {
    const std::string& t = ll.text;
    char in_string = 0;
    for (size_t i = 0; i < t.size(); ++i) {
        char c = t[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == in_string) {
                in_string = 0;
            }
            continue;
        }
        if (c == '\'' || c == '"') {
            // f-strings keep their prefix attached to the preceding identifier;
            // treat quote as string start regardless.
            in_string = c;
            continue;
        }
        if (!ident_start(c)) continue;
        size_t start = i;
        while (i < t.size() && (ident_char(t[i]) || (t[i] == '.' && i + 1 < t.size() && ident_start(t[i + 1])))) ++i;
        std::string name = t.substr(start, i - start);
        if (i < t.size() && t[i] == '(') {
            // find matching close paren
            int depth = 0;
            char inner_string = 0;
            size_t j = i;
            for (; j < t.size(); ++j) {
                char cj = t[j];
                if (inner_string) {
                    if (cj == '\\') {
                        ++j;
                    } else if (cj == inner_string) {
                        inner_string = 0;
                    }
                    continue;
                }
                if (cj == '\'' || cj == '"') inner_string = cj;
                if (cj == '(') ++depth;
                if (cj == ')') {
                    --depth;
                    if (depth == 0) break;
                }
            }
            if (j < t.size()) {
                CallSite site;
                site.callee = name;
                site.args = t.substr(i + 1, j - i - 1);
                site.line = ll.line;
                site.enclosing_function = enclosing;
                out.push_back(std::move(site));
            }
        }
        --i;  // loop increment compensates
    }
}

}  // namespace

const Function* Module::find_function(const std::string& name) const {
    for (const auto& fn : functions)
        if (fn.name == name) return &fn;
    return nullptr;
}

std::vector<std::string> split_call_args(const std::string& args) {
    std::vector<std::string> out;
    for (auto& part : split_top_level(args, ',')) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::optional<std::string> string_literal_value(const std::string& expr) {
    std::string e = trim(expr);
    // Allow a simple prefix (r, b, f is NOT a plain literal).
    if (!e.empty() && (e[0] == 'r' || e[0] == 'R' || e[0] == 'u' || e[0] == 'U')) e = e.substr(1);
    if (e.size() < 2) return std::nullopt;
    char q = e.front();
    if (q != '\'' && q != '"') return std::nullopt;
    std::string closing(1, q);
    size_t body_start = 1;
    if (e.size() >= 6 && e.compare(0, 3, std::string(3, q)) == 0) {
        closing = std::string(3, q);
        body_start = 3;
    }
    if (e.size() < body_start + closing.size()) return std::nullopt;
    if (e.compare(e.size() - closing.size(), closing.size(), closing) != 0) return std::nullopt;
    std::string body = e.substr(body_start, e.size() - body_start - closing.size());
    // Reject concatenations like "a" + x masquerading as literals: a bare
    // closing quote inside the body means the literal ended early.
    for (size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '\\') {
            ++i;
            continue;
        }
        if (body[i] == q && closing.size() == 1) return std::nullopt;
    }
    std::string out;
    for (size_t i = 0; i < body.size(); ++i) {
        if (body[i] == '\\' && i + 1 < body.size()) {
            char n = body[i + 1];
            if (n == 'n')
                out.push_back('\n');
            else if (n == 't')
                out.push_back('\t');
            else
                out.push_back(n);
            ++i;
            continue;
        }
        out.push_back(body[i]);
    }
    return out;
}

std::optional<std::string> keyword_argument(const std::string& args, const std::string& name) {
    for (auto& part : split_call_args(args)) {
        auto eq = part.find('=');
        if (eq == std::string::npos) continue;
        if (trim(part.substr(0, eq)) == name) return trim(part.substr(eq + 1));
    }
    return std::nullopt;
}

Module scan_module(const std::string& source) {
    Module mod;
    Tokenizer tok(source);
    tok.run();
    mod.errors = tok.errors;
    mod.lines = tok.out;
    if (!mod.errors.empty()) return mod;

    const auto& lines = mod.lines;
    std::vector<std::string> pending_decorators;

    for (size_t i = 0; i < lines.size(); ++i) {
        const auto& ll = lines[i];
        const std::string& text = ll.text;
        bool top = ll.indent == 0;

        if (starts_with(text, "import ") || starts_with(text, "from ")) {
            parse_import_line(text, ll.line, top, mod.imports);
        }

        if (!top) continue;

        if (starts_with(text, "@")) {
            pending_decorators.push_back(trim(text.substr(1)));
            continue;
        }

        bool is_async_def = starts_with(text, "async def ");
        bool is_def = is_async_def || starts_with(text, "def ");
        bool is_class = starts_with(text, "class ");

        if (is_def) {
            Function fn;
            if (!parse_def(text, is_async_def, ll.line, fn, mod.errors)) return mod;
            fn.decorators = pending_decorators;
            // body: following lines with indent > 0 until next top-level line
            size_t j = i + 1;
            while (j < lines.size() && lines[j].indent > 0) fn.body.push_back(lines[j++]);
            if (auto doc = docstring_of(fn.body)) fn.docstring = *doc;
            for (const auto& bl : fn.body) scan_calls(bl, fn.name, mod.calls);
            mod.functions.push_back(std::move(fn));
            pending_decorators.clear();
            i = j - 1;
            continue;
        }
        if (is_class) {
            ClassDef cls;
            size_t pos = 6;
            size_t name_start = pos;
            while (pos < text.size() && ident_char(text[pos])) ++pos;
            cls.name = text.substr(name_start, pos - name_start);
            cls.line = ll.line;
            if (cls.name.empty()) {
                mod.errors.push_back("malformed class at line " + std::to_string(ll.line));
                return mod;
            }
            size_t j = i + 1;
            std::vector<LogicalLine> body;
            while (j < lines.size() && lines[j].indent > 0) body.push_back(lines[j++]);
            if (auto doc = docstring_of(body)) cls.docstring = *doc;
            for (const auto& bl : body) {
                std::string bt = bl.text;
                bool a = starts_with(bt, "async def __init__");
                if (a || starts_with(bt, "def __init__")) {
                    Function init;
                    std::vector<std::string> scratch;
                    if (parse_def(bt, a, bl.line, init, scratch)) {
                        if (!init.params.empty() && init.params.front().name == "self")
                            init.params.erase(init.params.begin());
                        cls.init_params = init.params;
                    }
                    break;
                }
            }
            for (const auto& bl : body) scan_calls(bl, cls.name, mod.calls);
            mod.classes.push_back(std::move(cls));
            pending_decorators.clear();
            i = j - 1;
            continue;
        }

        pending_decorators.clear();

        // __all__ and simple string constants
        auto eq = text.find('=');
        if (eq != std::string::npos && text.find("==") != eq) {
            std::string lhs = trim(text.substr(0, eq));
            std::string rhs = trim(text.substr(eq + 1));
            if (lhs == "__all__") {
                std::string inside = rhs;
                if (!inside.empty() && (inside.front() == '[' || inside.front() == '(')) {
                    inside = inside.substr(1, inside.size() > 1 ? inside.size() - 2 : 0);
                    mod.export_list = parse_name_list(inside);
                }
            } else if (!lhs.empty() && ident_start(lhs[0])) {
                bool plain = true;
                for (char c : lhs)
                    if (!ident_char(c)) plain = false;
                if (plain) {
                    if (auto value = string_literal_value(rhs)) mod.string_constants[lhs] = *value;
                }
            }
        }
        scan_calls(ll, "", mod.calls);
    }
    return mod;
}

}  // namespace mcpforge::pysrc
