#include "support/fixture_repos.hpp"

#include "mcpforge/errors.hpp"
#include "mcpforge/subprocess.hpp"

namespace mcpforge::testsupport {

namespace {

void run_or_die(const RunSpec& spec, const std::string& what) {
    auto result = run_process(spec);
    if (!result.ok())
        throw make_error("fixture-error", what + " failed: " + result.out + result.err);
}

std::map<std::string, std::string> git_env(const fs::path& dir) {
    return {{"PATH", "/usr/local/bin:/usr/bin:/bin"},
            {"HOME", dir.string()},
            {"LC_ALL", "C"},
            {"GIT_AUTHOR_NAME", "fixture"},
            {"GIT_AUTHOR_EMAIL", "fixture@localhost"},
            {"GIT_COMMITTER_NAME", "fixture"},
            {"GIT_COMMITTER_EMAIL", "fixture@localhost"},
            {"GIT_AUTHOR_DATE", "2026-01-02T03:04:05Z"},
            {"GIT_COMMITTER_DATE", "2026-01-02T03:04:05Z"}};
}

struct RepoBuilder {
    fs::path dir;

    RepoBuilder& file(const std::string& relative, const std::string& content) {
        write_file(dir / relative, content);
        return *this;
    }

    std::string commit() {
        git_commit_all(dir);
        return "file://" + dir.string();
    }
};

std::string readme(const std::string& title, const std::string& body,
                   const std::string& seed = "") {
    std::string text = "# " + title + "\n\n" + body + "\n\n## Usage\n\nImport the package and call "
                       "its functions directly.\n";
    if (!seed.empty()) text += "\n<!-- fixture-seed: " + seed + " -->\n";
    return text;
}

void build_wheel(const fs::path& index_dir, const std::string& name, const std::string& body) {
    std::string script =
        "import sys, zipfile\n"
        "index, name, body = sys.argv[1], sys.argv[2], sys.argv[3]\n"
        "path = '%s/%s-1.0-py3-none-any.whl' % (index, name)\n"
        "with zipfile.ZipFile(path, 'w') as wheel:\n"
        "    wheel.writestr('%s/__init__.py' % name, body)\n"
        "    wheel.writestr('%s-1.0.dist-info/METADATA' % name,\n"
        "                   'Metadata-Version: 2.1\\nName: %s\\nVersion: 1.0\\n' % name)\n"
        "    wheel.writestr('%s-1.0.dist-info/WHEEL' % name,\n"
        "                   'Wheel-Version: 1.0\\nGenerator: fixture\\nRoot-Is-Purelib: true\\n"
        "Tag: py3-none-any\\n')\n"
        "    wheel.writestr('%s-1.0.dist-info/RECORD' % name, '')\n";
    RunSpec spec;
    spec.argv = {host_python(), "-c", script, index_dir.string(), name, body};
    spec.env = {{"PATH", "/usr/local/bin:/usr/bin:/bin"}, {"HOME", "/tmp"}, {"LC_ALL", "C"}};
    spec.timeout_seconds = 30.0;
    run_or_die(spec, "wheel build for " + name);
}

}  // namespace

std::string host_python() {
    for (const char* candidate : {"/usr/bin/python3", "/usr/local/bin/python3"})
        if (fs::exists(candidate)) return candidate;
    return "python3";
}

void git_commit_all(const fs::path& dir) {
    auto git = [&](const std::vector<std::string>& args, const std::string& what) {
        RunSpec spec;
        spec.argv = {"git", "-C", dir.string()};
        spec.argv.insert(spec.argv.end(), args.begin(), args.end());
        spec.env = git_env(dir);
        spec.timeout_seconds = 60.0;
        run_or_die(spec, what);
    };
    git({"init", "--quiet"}, "git init");
    git({"add", "-A"}, "git add");
    git({"-c", "user.name=fixture", "-c", "user.email=fixture@localhost", "commit", "--quiet",
         "-m", "fixture snapshot"},
        "git commit");
}

FixtureWorld build_world(const fs::path& root) {
    FixtureWorld world;
    world.root = root;
    fs::create_directories(root);
    fs::path repos = root / "repos";

    auto repo = [&](const std::string& name) { return RepoBuilder{repos / name}; };
    auto add = [&](const std::string& name, RepoBuilder& builder) {
        world.repo_urls[name] = builder.commit();
    };

    {
        auto b = repo("calctool");
        b.file("README.md", readme("calctool", "Small arithmetic and text helpers."));
        b.file("calctool/__init__.py", "");
        b.file("calctool/core.py",
               "\"\"\"Small arithmetic helpers.\"\"\"\n\n\n"
               "def add(a: int, b: int) -> int:\n"
               "    \"\"\"Sum two integers.\"\"\"\n"
               "    return a + b\n\n\n"
               "def multiply(a: int, b: int) -> int:\n"
               "    return a * b\n\n\n"
               "def word_count(text: str) -> int:\n"
               "    return len(text.split())\n\n\n"
               "def to_upper(text: str) -> str:\n"
               "    return text.upper()\n\n\n"
               "def _scale(values):\n"
               "    return [v * 2 for v in values]\n");
        add("calctool", b);
    }
    {
        auto b = repo("textkit");
        b.file("README.md", readme("textkit", "Text normalization utilities.", "badcall-fixable"));
        b.file("textkit/__init__.py", "");
        b.file("textkit/core.py",
               "\"\"\"Text helpers.\"\"\"\n\n\n"
               "def normalize(text: str) -> str:\n"
               "    return text.strip().lower()\n\n\n"
               "def tokenize(text: str) -> list:\n"
               "    return text.split()\n\n\n"
               "def join_words(words: list) -> str:\n"
               "    return \" \".join(words)\n\n\n"
               "def count_chars(text: str) -> int:\n"
               "    return len(text)\n");
        add("textkit", b);
    }
    {
        auto b = repo("statkit");
        b.file("README.md", readme("statkit", "Descriptive statistics over numeric strings.",
                                   "badcall-2"));
        b.file("statkit/__init__.py", "");
        b.file("statkit/core.py",
               "\"\"\"Statistics over lists of numeric strings.\"\"\"\n\n\n"
               "def mean(values: list) -> float:\n"
               "    numbers = [float(v) for v in values]\n"
               "    return sum(numbers) / len(numbers)\n\n\n"
               "def median(values: list) -> float:\n"
               "    numbers = sorted(float(v) for v in values)\n"
               "    return numbers[len(numbers) // 2]\n\n\n"
               "def spread(values: list) -> float:\n"
               "    numbers = [float(v) for v in values]\n"
               "    return max(numbers) - min(numbers)\n\n\n"
               "def total(values: list) -> float:\n"
               "    return sum(float(v) for v in values)\n");
        add("statkit", b);
    }
    {
        auto b = repo("matkit");
        b.file("README.md", readme("matkit", "Row-oriented helpers.", "badcall-3"));
        b.file("matkit/__init__.py", "");
        b.file("matkit/core.py",
               "\"\"\"Row helpers.\"\"\"\n\n\n"
               "def first_row(rows: list) -> str:\n"
               "    return rows[0] if rows else \"\"\n\n\n"
               "def count_rows(rows: list) -> int:\n"
               "    return len(rows)\n\n\n"
               "def join_rows(rows: list) -> str:\n"
               "    return \";\".join(rows)\n\n\n"
               "def tag_rows(rows: list) -> list:\n"
               "    return [\"row:\" + r for r in rows]\n");
        add("matkit", b);
    }
    {
        auto b = repo("fixkit");
        b.file("README.md", readme("fixkit", "Text summaries.", "ghost-fixable"));
        b.file("fixkit/__init__.py", "");
        b.file("fixkit/core.py",
               "\"\"\"Summary helpers.\"\"\"\n\n\n"
               "def summarize(text: str) -> str:\n"
               "    return \"%d words\" % len(text.split())\n\n\n"
               "def flip(text: str) -> str:\n"
               "    return text[::-1]\n\n\n"
               "def shout(text: str) -> str:\n"
               "    return text.upper() + \"!\"\n");
        add("fixkit", b);
    }
    {
        auto b = repo("envbad");
        b.file("README.md", readme("envbad", "Numeric helpers with a broken dependency pin."));
        b.file("requirements.txt", "no-such-pkg-xyz-000\n");
        b.file("envbad/__init__.py", "");
        b.file("envbad/core.py",
               "def triple(value: int) -> int:\n"
               "    return value * 3\n\n\n"
               "def halve(value: int) -> float:\n"
               "    return value / 2\n\n\n"
               "def negate(value: int) -> int:\n"
               "    return -value\n");
        add("envbad", b);
    }
    {
        auto b = repo("envpin");
        b.file("README.md", readme("envpin", "Helpers pinned to a newer runtime."));
        b.file("pyproject.toml",
               "[project]\nname = \"envpin\"\nversion = \"0.1.0\"\nrequires-python = \">=3.11\"\n");
        b.file("envpin/__init__.py", "");
        b.file("envpin/core.py",
               "def double(value: int) -> int:\n"
               "    return value * 2\n\n\n"
               "def square(value: int) -> int:\n"
               "    return value * value\n\n\n"
               "def describe(value: int) -> str:\n"
               "    return \"value=%d\" % value\n");
        add("envpin", b);
    }
    {
        auto b = repo("guionly");
        b.file("README.md", readme("guionly", "A desktop launcher with no importable API."));
        b.file("launcher.py",
               "\"\"\"Desktop launcher.\"\"\"\n\n\n"
               "def _build_window():\n"
               "    return object()\n\n\n"
               "def _run():\n"
               "    _build_window()\n\n\n"
               "if __name__ == \"__main__\":\n"
               "    _run()\n");
        add("guionly", b);
    }
    {
        auto b = repo("datasheets");
        b.file("README.md", readme("datasheets", "Curated CSV data, no code."));
        b.file("data.csv", "id,value\n1,2\n3,4\n");
        add("datasheets", b);
    }
    {
        auto b = repo("ghostm");
        b.file("README.md", readme("ghostm", "Row parsing helpers.", "ghost-module"));
        b.file("ghostm/__init__.py", "");
        b.file("ghostm/core.py",
               "def parse_rows(rows: list) -> list:\n"
               "    return [r.strip() for r in rows]\n\n\n"
               "def count_rows(rows: list) -> int:\n"
               "    return len(rows)\n\n\n"
               "def head_row(rows: list) -> str:\n"
               "    return rows[0] if rows else \"\"\n");
        add("ghostm", b);
    }
    {
        auto b = repo("ghosts");
        b.file("README.md", readme("ghosts", "Row analysis helpers.", "ghost-symbol"));
        b.file("ghosts/__init__.py", "");
        b.file("ghosts/core.py",
               "def analyze_data(rows: list) -> int:\n"
               "    return len(rows)\n\n\n"
               "def summarize_rows(rows: list) -> str:\n"
               "    return \",\".join(rows)\n\n\n"
               "def tally(rows: list) -> int:\n"
               "    return sum(len(r) for r in rows)\n");
        add("ghosts", b);
    }
    {
        auto b = repo("buggy");
        b.file("README.md", readme("buggy", "Arithmetic helpers with a latent defect."));
        b.file("buggy/__init__.py", "");
        b.file("buggy/core.py",
               "def ratio(a: int, b: int) -> float:\n"
               "    return a / (b - b)\n\n\n"
               "def safe_add(a: int, b: int) -> int:\n"
               "    return a + b\n\n\n"
               "def safe_mul(a: int, b: int) -> int:\n"
               "    return a * b\n");
        add("buggy", b);
    }
    {
        auto b = repo("brittle");
        b.file("README.md", readme("brittle", "Text helpers with a latent attribute bug."));
        b.file("brittle/__init__.py", "");
        b.file("brittle/core.py",
               "def summarize(text: str) -> str:\n"
               "    return text.wordz()\n\n\n"
               "def shorten(text: str) -> str:\n"
               "    return text[:5]\n\n\n"
               "def pad(text: str) -> str:\n"
               "    return \"[\" + text + \"]\"\n");
        add("brittle", b);
    }
    {
        auto b = repo("apikit");
        b.file("README.md", readme("apikit", "Value transforms.", "api-badkw"));
        b.file("apikit/__init__.py", "");
        b.file("apikit/core.py",
               "def scale_values(values: list, factor: int) -> list:\n"
               "    return [str(float(v) * factor) for v in values]\n\n\n"
               "def shift_values(values: list, offset: int) -> list:\n"
               "    return [str(float(v) + offset) for v in values]\n\n\n"
               "def invert_values(values: list) -> list:\n"
               "    return [str(-float(v)) for v in values]\n");
        add("apikit", b);
    }
    {
        auto b = repo("apikit2");
        b.file("README.md", readme("apikit2", "Power helpers.", "api-missing"));
        b.file("apikit2/__init__.py", "");
        b.file("apikit2/core.py",
               "def power(base: int, exponent: int) -> int:\n"
               "    return base ** exponent\n\n\n"
               "def root(value: int) -> float:\n"
               "    return value ** 0.5\n\n\n"
               "def double(value: int) -> int:\n"
               "    return value * 2\n");
        add("apikit2", b);
    }
    {
        auto b = repo("vizkit");
        b.file("README.md", readme("vizkit", "Plain-text rendering helpers.", "svc-logic"));
        b.file("vizkit/__init__.py", "");
        b.file("vizkit/core.py",
               "def render_table(rows: list) -> str:\n"
               "    return \"|\".join(rows)\n\n\n"
               "def render_list(items: list) -> str:\n"
               "    return \"\\n\".join(\"- \" + i for i in items)\n\n\n"
               "def render_pairs(pairs: list) -> str:\n"
               "    return \";\".join(pairs)\n");
        add("vizkit", b);
    }
    {
        auto b = repo("vizlite");
        b.file("README.md", readme("vizlite", "List formatting helpers.", "svc-print"));
        b.file("vizlite/__init__.py", "");
        b.file("vizlite/core.py",
               "def bullet_list(items: list) -> str:\n"
               "    return \"\\n\".join(\"* \" + i for i in items)\n\n\n"
               "def numbered_list(items: list) -> str:\n"
               "    return \"\\n\".join(\"%d. %s\" % (n + 1, i) for n, i in enumerate(items))\n\n\n"
               "def csv_line(items: list) -> str:\n"
               "    return \",\".join(items)\n");
        add("vizlite", b);
    }
    {
        auto b = repo("strokekit");
        b.file("README.md",
               readme("strokekit", "Cohort analysis helpers: projection, feature selection, "
                                   "model fitting, and causal scanning."));
        b.file("strokekit/__init__.py", "");
        b.file("strokekit/core.py",
               "\"\"\"Cohort analysis helpers over numeric strings.\"\"\"\n\n\n"
               "def run_pca(values: list) -> list:\n"
               "    return [str(round(float(v) * 0.5, 3)) for v in values]\n\n\n"
               "def run_tsne(values: list) -> list:\n"
               "    return [str(round(float(v) * 0.1, 3)) for v in values]\n\n\n"
               "def select_features(values: list) -> list:\n"
               "    return values[:2]\n\n\n"
               "def fit_model(values: list) -> str:\n"
               "    return \"model fitted on %d points\" % len(values)\n\n\n"
               "def causal_scan(values: list) -> str:\n"
               "    return \"causal effect %.2f\" % sum(float(v) for v in values)\n");
        add("strokekit", b);
    }

    // package index with two installable wheels
    world.package_index = root / "package_index";
    fs::create_directories(world.package_index);
    build_wheel(world.package_index, "fixpkg_alpha", "VALUE = 41\n\n\ndef greet():\n    return 'hi'\n");
    build_wheel(world.package_index, "fixpkg_beta", "LIMIT = 7\n");

    // stub search indexes
    json main_index = json::array({
        json{{"full_name", "acme/plot-gui"},
             {"stars", 500},
             {"description", "interactive stroke dashboards with a desktop gui"},
             {"readme", "Launch the dashboard window. No importable API."},
             {"url", world.repo_urls.at("guionly")}},
        json{{"full_name", "acme/stroke-insight"},
             {"stars", 200},
             {"description", "stroke risk analysis toolkit"},
             {"readme", "Programmatic stroke risk analysis helpers."},
             {"url", world.repo_urls.at("calctool")}},
        json{{"full_name", "acme/csv-utils"},
             {"stars", 90},
             {"description", "csv parsing helpers"},
             {"readme", "Helpers for parsing csv files."},
             {"url", world.repo_urls.at("datasheets")}},
    });
    world.stub_index_file = root / "stub_index.json";
    write_json_file(world.stub_index_file, main_index);

    json refine_index = json::array({
        json{{"full_name", "acme/toolbox-general"},
             {"stars", 40},
             {"description", "general toolbox for broadened searches"},
             {"readme", "A broad toolbox package."},
             {"url", world.repo_urls.at("calctool")}},
    });
    world.refine_index_file = root / "refine_index.json";
    write_json_file(world.refine_index_file, refine_index);

    world.empty_index_file = root / "empty_index.json";
    write_json_file(world.empty_index_file, json::array());

    return world;
}

std::string repo_url(const FixtureWorld& world, const std::string& name) {
    return world.repo_urls.at(name);
}

}  // namespace mcpforge::testsupport
