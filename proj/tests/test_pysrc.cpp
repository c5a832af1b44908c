#include <doctest.h>

#include "mcpforge/pysrc.hpp"

using namespace mcpforge;
using namespace mcpforge::pysrc;

namespace {

const char* kSample = R"PY("""Module docstring."""

import os
import numpy as np
from collections import OrderedDict, defaultdict as dd
from .sibling import helper

__all__ = ["run_pca", "Model"]

GREETING = "hello"


def run_pca(data, n_components: int = 2) -> list:
    """Project the data."""
    path = os.path.join("out", "pca.txt")
    with open(path, "w") as handle:
        handle.write(str(data))
    return data


async def fetch(url: str):
    return url


def _helper(x):
    return x


class Model:
    """A tiny model."""

    def __init__(self, alpha: float, beta=1):
        self.alpha = alpha

    def fit(self, data):
        return data


class _Hidden:
    pass
)PY";

}  // namespace

TEST_CASE("scan_module recovers defs, classes, imports, and exports") {
    Module mod = scan_module(kSample);
    REQUIRE(mod.ok());

    REQUIRE(mod.functions.size() == 3);
    const Function* pca = mod.find_function("run_pca");
    REQUIRE(pca != nullptr);
    REQUIRE(pca->params.size() == 2);
    CHECK(pca->params[0].name == "data");
    CHECK(pca->params[1].name == "n_components");
    CHECK(pca->params[1].annotation == "int");
    CHECK(pca->params[1].has_default);
    CHECK(pca->docstring == "Project the data.");
    CHECK_FALSE(pca->is_async);
    CHECK(mod.find_function("fetch")->is_async);

    REQUIRE(mod.classes.size() == 2);
    CHECK(mod.classes[0].name == "Model");
    REQUIRE(mod.classes[0].init_params.size() == 2);
    CHECK(mod.classes[0].init_params[0].name == "alpha");
    CHECK(mod.classes[0].init_params[1].has_default);

    REQUIRE(mod.export_list.has_value());
    CHECK(*mod.export_list == std::vector<std::string>{"run_pca", "Model"});

    // imports: os, numpy as np, OrderedDict, defaultdict as dd, relative helper
    REQUIRE(mod.imports.size() == 5);
    CHECK(mod.imports[0].module == "os");
    CHECK_FALSE(mod.imports[0].is_from);
    CHECK(mod.imports[1].alias == "np");
    CHECK(mod.imports[2].symbol == "OrderedDict");
    CHECK(mod.imports[3].alias == "dd");
    CHECK(mod.imports[4].relative_level == 1);
    CHECK(mod.imports[4].module == "sibling");

    CHECK(mod.string_constants.at("GREETING") == "hello");
}

TEST_CASE("call sites carry their enclosing function") {
    Module mod = scan_module(kSample);
    bool saw_open = false;
    for (const auto& call : mod.calls)
        if (call.callee == "open" && call.enclosing_function == "run_pca") saw_open = true;
    CHECK(saw_open);
}

TEST_CASE("multiline headers and strings collapse into logical lines") {
    Module mod = scan_module(
        "def spread(a,\n          b,\n          c=3):\n    text = \"\"\"multi\nline\"\"\"\n"
        "    return a + b + c\n");
    REQUIRE(mod.ok());
    REQUIRE(mod.functions.size() == 1);
    CHECK(mod.functions[0].params.size() == 3);
}

TEST_CASE("scan errors are collected, not thrown") {
    CHECK_FALSE(scan_module("def broken(:\n    pass\n").ok());
    CHECK_FALSE(scan_module("x = (1 + \n").ok());
    CHECK_FALSE(scan_module("s = \"\"\"never closed\n").ok());
}

TEST_CASE("decorators attach to the following def") {
    Module mod = scan_module("@tool(\"name\",\n      \"desc\")\nasync def endpoint(a):\n    return a\n");
    REQUIRE(mod.ok());
    REQUIRE(mod.functions.size() == 1);
    REQUIRE(mod.functions[0].decorators.size() == 1);
    CHECK(mod.functions[0].decorators[0].find("tool(") == 0);
}

TEST_CASE("argument helpers split and resolve literals") {
    auto args = split_call_args("a, b=2, \"x, y\", [1, 2]");
    REQUIRE(args.size() == 4);
    CHECK(args[2] == "\"x, y\"");
    CHECK(args[3] == "[1, 2]");

    CHECK(string_literal_value("'plain'") == "plain");
    CHECK(string_literal_value("\"a\\nb\"") == "a\nb");
    CHECK_FALSE(string_literal_value("'a' + x").has_value());
    CHECK_FALSE(string_literal_value("variable").has_value());

    CHECK(keyword_argument("cmd, shell=True", "shell") == "True");
    CHECK_FALSE(keyword_argument("cmd", "shell").has_value());
}

TEST_CASE("comments never leak into logical lines") {
    Module mod = scan_module("def f(a):  # trailing\n    return a  # note\n");
    REQUIRE(mod.ok());
    CHECK(mod.functions[0].body.size() == 1);
    CHECK(mod.functions[0].body[0].text.find("note") == std::string::npos);
}
