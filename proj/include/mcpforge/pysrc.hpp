#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcpforge::pysrc {

// Lightweight structural scanner for Python sources. It recovers the pieces
// the pipeline needs (top-level callables, signatures, imports, export lists,
// call sites) from logical lines; it is not a full grammar.

struct Param {
    std::string name;
    std::string annotation;  // raw annotation text, may be empty
    bool has_default = false;
    bool variadic = false;  // *args / **kwargs
};

struct LogicalLine {
    int line = 0;    // first physical line, 1-based
    int indent = 0;  // leading spaces (tabs count as 8)
    std::string text;
};

struct Function {
    std::string name;
    std::vector<Param> params;
    bool is_async = false;
    int line = 0;
    std::string docstring;
    std::vector<LogicalLine> body;  // logical lines strictly inside the def
    std::vector<std::string> decorators;
};

struct ClassDef {
    std::string name;
    std::vector<Param> init_params;  // __init__ minus self; empty if none
    int line = 0;
    std::string docstring;
};

struct Import {
    std::string module;       // dotted path; empty for "from . import x"
    std::string symbol;       // imported name; empty for plain "import m"
    std::string alias;        // as-name if present
    int line = 0;
    bool is_from = false;
    int relative_level = 0;  // number of leading dots
    bool top_level = false;
    bool star = false;
};

struct CallSite {
    std::string callee;  // dotted name, e.g. "subprocess.run"
    std::string args;    // raw argument text between the parentheses
    int line = 0;
    std::string enclosing_function;  // empty at module level
};

struct Module {
    std::vector<Function> functions;  // top-level only
    std::vector<ClassDef> classes;    // top-level only
    std::vector<Import> imports;
    std::optional<std::vector<std::string>> export_list;  // __all__ if declared
    std::map<std::string, std::string> string_constants;  // top-level NAME = "literal"
    std::vector<CallSite> calls;                           // every dotted call site
    std::vector<LogicalLine> lines;
    std::vector<std::string> errors;  // non-empty => file failed to scan

    bool ok() const { return errors.empty(); }
    const Function* find_function(const std::string& name) const;
};

Module scan_module(const std::string& source);

// Splits an argument list on top-level commas (respecting nesting/strings).
std::vector<std::string> split_call_args(const std::string& args);

// True if the expression is a plain string literal; returns its value.
std::optional<std::string> string_literal_value(const std::string& expr);

// Keyword value lookup inside a raw call argument list ("shell=True" etc).
std::optional<std::string> keyword_argument(const std::string& args, const std::string& name);

}  // namespace mcpforge::pysrc
