#include "mcpforge/security.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "mcpforge/errors.hpp"
#include "mcpforge/pysrc.hpp"

namespace mcpforge {

namespace {

bool is_shell_sink(const std::string& callee) {
    return callee == "os.system" || callee == "os.popen";
}

bool is_subprocess_call(const std::string& callee) {
    return starts_with(callee, "subprocess.");
}

bool is_fs_sink(const std::string& callee) {
    return callee == "open" || callee == "os.remove" || callee == "os.unlink" ||
           callee == "os.rmdir" || callee == "os.makedirs" || callee == "os.mkdir" ||
           callee == "os.rename" || callee == "shutil.rmtree" || callee == "shutil.move" ||
           callee == "shutil.copy" || callee == "shutil.copyfile";
}

// Resolves a path expression to a concrete string when it is built purely
// from literals and known module constants.
std::optional<std::string> resolve_path_expr(const std::string& expr,
                                             const std::map<std::string, std::string>& constants) {
    std::string e = trim(expr);
    if (auto literal = pysrc::string_literal_value(e)) return literal;
    if (auto it = constants.find(e); it != constants.end()) return it->second;

    if (starts_with(e, "os.path.join(") && ends_with(e, ")")) {
        auto inside = e.substr(13, e.size() - 14);
        std::vector<std::string> parts;
        for (const auto& arg : pysrc::split_call_args(inside)) {
            auto resolved = resolve_path_expr(arg, constants);
            if (!resolved) return std::nullopt;
            parts.push_back(*resolved);
        }
        return join(parts, "/");
    }

    // f-string whose placeholders are all known constants
    if ((starts_with(e, "f\"") || starts_with(e, "f'")) && e.size() > 3) {
        char quote = e[1];
        if (e.back() != quote) return std::nullopt;
        std::string body = e.substr(2, e.size() - 3);
        std::string out;
        for (size_t i = 0; i < body.size(); ++i) {
            if (body[i] != '{') {
                if (body[i] == '}') continue;
                out.push_back(body[i]);
                continue;
            }
            auto close = body.find('}', i);
            if (close == std::string::npos) return std::nullopt;
            std::string name = trim(body.substr(i + 1, close - i - 1));
            auto it = constants.find(name);
            if (it == constants.end()) return std::nullopt;
            out += it->second;
            i = close;
        }
        return out;
    }
    return std::nullopt;
}

struct TaintScan {
    std::set<std::string> tainted;
    std::map<std::string, std::string> assigned;  // variable -> raw expression

    explicit TaintScan(const pysrc::Function& fn) {
        for (const auto& p : fn.params) tainted.insert(p.name);
        for (const auto& line : fn.body) {
            std::string text = trim(line.text);
            auto eq = text.find('=');
            if (eq == std::string::npos || eq + 1 >= text.size() || text[eq + 1] == '=') continue;
            std::string lhs = trim(text.substr(0, eq));
            if (lhs.empty() || !std::isalpha(static_cast<unsigned char>(lhs[0]))) continue;
            bool plain = true;
            for (char c : lhs)
                if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') plain = false;
            if (!plain) continue;
            std::string rhs = trim(text.substr(eq + 1));
            assigned[lhs] = rhs;
            if (mentions_tainted(rhs)) tainted.insert(lhs);
        }
    }

    bool mentions_tainted(const std::string& expr) const {
        for (const auto& name : tainted)
            if (contains_word(expr, name)) return true;
        return false;
    }

    // The expression a sink actually receives, following one level of
    // variable indirection.
    std::string effective_expr(const std::string& expr) const {
        std::string e = trim(expr);
        auto it = assigned.find(e);
        return it == assigned.end() ? e : it->second;
    }
};

bool string_built(const std::string& expr) {
    if (starts_with(trim(expr), "f\"") || starts_with(trim(expr), "f'")) return true;
    if (expr.find('+') != std::string::npos) return true;
    if (expr.find('%') != std::string::npos) return true;
    if (expr.find(".format(") != std::string::npos) return true;
    return false;
}

bool is_list_literal(const std::string& expr) { return starts_with(trim(expr), "["); }

void scan_file_integrity(const std::string& file, const pysrc::Module& module,
                         std::vector<SecurityFinding>& findings) {
    for (const auto& fn : module.functions) {
        TaintScan taint(fn);
        for (const auto& call : module.calls) {
            if (call.enclosing_function != fn.name) continue;
            bool shell_sink = is_shell_sink(call.callee);
            bool subprocess_sink = is_subprocess_call(call.callee);
            if (!shell_sink && !subprocess_sink) continue;

            auto args = pysrc::split_call_args(call.args);
            std::string command_expr = args.empty() ? "" : taint.effective_expr(args.front());
            auto shell_kw = pysrc::keyword_argument(call.args, "shell");
            bool shell_true = shell_kw && trim(*shell_kw) == "True";

            if (subprocess_sink && !shell_true) {
                // Parameterized argument lists are the sanctioned form; flag
                // only string-built commands that smuggle parameters in.
                if (!is_list_literal(command_expr) && string_built(command_expr) &&
                    taint.mentions_tainted(command_expr)) {
                    findings.push_back({"integrity", "command-injection", file, call.line, "blocking",
                                        "endpoint parameter flows into a command string for " +
                                            call.callee});
                }
                continue;
            }
            if (shell_true) {
                if (!pysrc::string_literal_value(command_expr)) {
                    findings.push_back({"integrity", "shell-true-dynamic", file, call.line,
                                        "blocking",
                                        "shell=True with dynamic command content in " + call.callee});
                }
                continue;
            }
            // os.system / os.popen
            if (pysrc::string_literal_value(command_expr)) continue;  // fixed literal
            if (string_built(command_expr) && taint.mentions_tainted(command_expr)) {
                findings.push_back({"integrity", "command-injection", file, call.line, "blocking",
                                    "endpoint parameter flows into a shell string for " + call.callee});
            } else {
                findings.push_back({"integrity", "shell-true-dynamic", file, call.line, "blocking",
                                    "shell command for " + call.callee +
                                        " is not a fixed literal and cannot be proven safe"});
            }
        }
    }
}

void scan_file_confidentiality(const std::string& file, const pysrc::Module& module,
                               const PathPolicy& policy,
                               std::vector<SecurityFinding>& findings) {
    for (const auto& call : module.calls) {
        if (!is_fs_sink(call.callee)) continue;
        auto args = pysrc::split_call_args(call.args);
        if (args.empty()) continue;

        std::string expr = args.front();
        // Follow one assignment hop inside the enclosing function.
        if (!call.enclosing_function.empty()) {
            if (const auto* fn = module.find_function(call.enclosing_function)) {
                TaintScan taint(*fn);
                expr = taint.effective_expr(expr);
            }
        }
        auto resolved = resolve_path_expr(expr, module.string_constants);
        if (!resolved) {
            findings.push_back({"confidentiality", "path-unproven", file, call.line, "blocking",
                                call.callee + " path is not provably under a whitelist root: " +
                                    trim(args.front())});
            continue;
        }
        std::string normalized = normalize_path(*resolved);
        for (const auto& deny : policy.deny_overrides) {
            if (!deny.empty() && normalized.find(deny) != std::string::npos) {
                findings.push_back({"confidentiality", "path-escape", file, call.line, "blocking",
                                    call.callee + " touches denied pattern '" + deny + "': " +
                                        normalized});
            }
        }
        if (normalized.empty() || normalized[0] != '/') {
            // Relative paths resolve against the pinned working directory
            // inside the workspace; escapes climb out with "..".
            if (starts_with(normalized, "..")) {
                findings.push_back({"confidentiality", "path-escape", file, call.line, "blocking",
                                    call.callee + " escapes the workspace via traversal: " +
                                        normalized});
            }
            continue;
        }
        bool inside = false;
        for (const auto& root : policy.whitelist_roots)
            if (path_under(normalized, root)) inside = true;
        if (!inside) {
            findings.push_back({"confidentiality", "path-escape", file, call.line, "blocking",
                                call.callee + " writes outside every whitelist root: " + normalized});
        }
    }
}

}  // namespace

bool SecurityReport::has_blocking(const std::set<std::string>& waived_rules) const {
    for (const auto& f : findings)
        if (f.severity == "blocking" && waived_rules.count(f.rule_id) == 0) return true;
    return false;
}

json SecurityReport::to_json() const {
    json by_axis = {{"confidentiality", json::array()},
                    {"integrity", json::array()},
                    {"availability", json::array()}};
    for (const auto& f : findings)
        by_axis[f.axis].push_back({{"rule_id", f.rule_id},
                                   {"file", f.file},
                                   {"line", f.line},
                                   {"severity", f.severity},
                                   {"detail", f.detail}});
    return json{{"schema_version", 1}, {"findings", by_axis}};
}

SecurityReport SecurityReport::from_json(const json& value) {
    SecurityReport report;
    for (const auto& axis : {"confidentiality", "integrity", "availability"}) {
        for (const auto& f : value.at("findings").value(axis, json::array())) {
            report.findings.push_back({axis, f.value("rule_id", ""), f.value("file", ""),
                                       f.value("line", 0), f.value("severity", "advisory"),
                                       f.value("detail", "")});
        }
    }
    return report;
}

std::vector<SecurityFinding> scan_confidentiality(const ServiceBundle& bundle,
                                                  const PathPolicy& policy) {
    if (policy.whitelist_roots.empty())
        throw make_error("invalid-policy", "path policy needs at least one whitelist root");
    for (const auto& root : policy.whitelist_roots)
        if (root.empty() || root[0] != '/')
            throw make_error("invalid-policy", "whitelist roots must be absolute: " + root);

    std::vector<SecurityFinding> findings;
    for (const auto& [file, content] : bundle.files) {
        auto module = pysrc::scan_module(content);
        if (!module.ok()) continue;  // shape check reports scan errors
        scan_file_confidentiality(file, module, policy, findings);
    }
    return findings;
}

std::vector<SecurityFinding> scan_integrity(const ServiceBundle& bundle) {
    std::vector<SecurityFinding> findings;
    for (const auto& [file, content] : bundle.files) {
        auto module = pysrc::scan_module(content);
        if (!module.ok()) continue;
        scan_file_integrity(file, module, findings);
    }
    return findings;
}

std::vector<SecurityFinding> scan_availability(const ServiceBundle& bundle) {
    std::vector<SecurityFinding> findings;
    for (const auto& [file, content] : bundle.files) {
        if (file == "main.py") continue;  // the serve loop is intentionally long-running
        auto module = pysrc::scan_module(content);
        if (!module.ok()) continue;
        for (const auto& fn : module.functions) {
            bool has_loop = false, has_break = false;
            for (const auto& line : fn.body) {
                std::string t = trim(line.text);
                if (starts_with(t, "while True")) has_loop = true;
                if (t == "break" || starts_with(t, "break ")) has_break = true;
            }
            if (has_loop && !has_break)
                findings.push_back({"availability", "unbounded-loop", file, fn.line, "advisory",
                                    "function " + fn.name + " loops without a break"});
        }
    }
    return findings;
}

SecurityReport scan_bundle(const ServiceBundle& bundle, const PathPolicy& policy) {
    SecurityReport report;
    auto confidentiality = scan_confidentiality(bundle, policy);
    auto integrity = scan_integrity(bundle);
    auto availability = scan_availability(bundle);
    report.findings.insert(report.findings.end(), confidentiality.begin(), confidentiality.end());
    report.findings.insert(report.findings.end(), integrity.begin(), integrity.end());
    report.findings.insert(report.findings.end(), availability.begin(), availability.end());
    return report;
}

RiskTier classify_risk(const EndpointProfile& endpoint) {
    if (endpoint.risk_annotations.empty())
        throw make_error("missing-annotations", "endpoint " + endpoint.tool_name +
                                                    " carries no risk annotations");
    bool reads = false, writes = false, network = false, subprocess = false, committing = false;
    for (const auto& tag : endpoint.risk_annotations) {
        if (tag == "reads-fs") reads = true;
        if (tag == "writes-fs") writes = true;
        if (tag == "network") network = true;
        if (tag == "executes-subprocess") subprocess = true;
        if (tag == "delete" || tag == "commit" || tag == "payment") committing = true;
    }
    if (network || subprocess || committing || (writes && endpoint.writes_outside_workspace))
        return {"high", "irreversible or externally committing side effects declared"};
    if (writes) return {"medium", "reversible modification confined to the workspace"};
    if (reads) return {"low", "retrieval and analysis only"};
    return {"low", "no declared side effects"};
}

json CostEstimate::to_json() const {
    return json{{"predicted_cpu_seconds", predicted_cpu_seconds},
                {"predicted_memory_bytes", predicted_memory_bytes},
                {"predicted_call_count", predicted_call_count},
                {"basis", basis},
                {"note", note}};
}

json ExecutionPreview::to_json() const {
    return json{{"endpoint", endpoint},
                {"tier", tier},
                {"expected_scope", expected_scope},
                {"affected_objects", affected_objects},
                {"reversible", reversible},
                {"side_effects", side_effects},
                {"estimated_cost", estimated_cost.to_json()},
                {"seq", seq}};
}

Governor::Governor(SecurityConfig config, fs::path decision_log_path, std::function<double()> clock)
    : config_(std::move(config)), log_path_(std::move(decision_log_path)), clock_(std::move(clock)) {
    if (!clock_) {
        clock_ = [] {
            return std::chrono::duration<double>(
                       std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
    }
    if (!log_path_.empty() && log_path_.has_parent_path())
        fs::create_directories(log_path_.parent_path());
}

CostEstimate Governor::estimate_cost(const EndpointProfile& endpoint, const json& arguments) {
    std::lock_guard<std::mutex> lock(mutex_);
    CostEstimate estimate;
    estimate.predicted_call_count = 1;

    auto history = run_history_.find(endpoint.tool_name);
    if (history != run_history_.end() && history->second.size() >= 5) {
        // Historical medians take over once the endpoint has a track record.
        auto samples = history->second;
        std::sort(samples.begin(), samples.end());
        estimate.predicted_cpu_seconds = samples[samples.size() / 2];
        estimate.predicted_memory_bytes = 64.0 * 1024 * 1024;
        estimate.basis = "historical";
        return estimate;
    }

    double magnitude = 0.0;
    bool clamped = false;
    if (arguments.is_object()) {
        for (const auto& [_, value] : arguments.items()) {
            if (value.is_number()) {
                double v = value.get<double>();
                if (v < 0) {
                    clamped = true;
                    continue;
                }
                magnitude += v;
            } else if (value.is_array()) {
                magnitude += static_cast<double>(value.size());
            } else if (value.is_string()) {
                magnitude += static_cast<double>(value.get<std::string>().size()) / 1024.0;
            }
        }
    }
    double tag_cost = 0.0;
    for (const auto& tag : endpoint.risk_annotations) {
        if (tag == "executes-subprocess") tag_cost += 2.0;
        if (tag == "network") tag_cost += 1.0;
        if (tag == "writes-fs" || tag == "reads-fs") tag_cost += 0.5;
    }
    estimate.predicted_cpu_seconds = 1.0 + tag_cost + 0.01 * magnitude;
    estimate.predicted_memory_bytes = 64.0 * 1024 * 1024 + 1024.0 * magnitude;
    estimate.basis = "static-heuristic";
    if (clamped) estimate.note = "negative size argument clamped to baseline";
    return estimate;
}

ExecutionPreview Governor::build_preview(const EndpointProfile& endpoint, const json& arguments) {
    auto estimate = estimate_cost(endpoint, arguments);
    std::lock_guard<std::mutex> lock(mutex_);
    ExecutionPreview preview;
    preview.endpoint = endpoint.tool_name;
    preview.tier = classify_risk(endpoint).tier;
    preview.side_effects = endpoint.risk_annotations;
    preview.estimated_cost = estimate;

    // Path-typed arguments name the objects the call can touch.
    for (const auto& param : endpoint.parameters) {
        if (param.value("type", "") != "opaque-file-path") continue;
        std::string name = param.value("name", "");
        if (arguments.is_object() && arguments.contains(name) && arguments[name].is_string())
            preview.affected_objects.push_back(arguments[name].get<std::string>());
    }
    bool effect_free = true;
    for (const auto& tag : endpoint.risk_annotations)
        if (tag != "none" && tag != "reads-fs") effect_free = false;
    preview.reversible = effect_free || undo_registry_.count(endpoint.tool_name) > 0;
    preview.expected_scope =
        preview.affected_objects.empty()
            ? (effect_free ? "read-only computation over the provided arguments"
                           : "side effects declared: " + join(endpoint.risk_annotations, ", "))
            : "touches " + join(preview.affected_objects, ", ");
    preview.seq = ++seq_;
    append_log({{"type", "preview"}, {"seq", preview.seq}, {"time", clock_()},
                {"preview", preview.to_json()}});
    return preview;
}

Decision Governor::authorize(const ExecutionPreview& preview, Confirmation confirmation) {
    std::lock_guard<std::mutex> lock(mutex_);
    double now = clock_();
    prune_window(now);

    Decision decision;
    decision.seq = ++seq_;

    auto finish = [&](bool allow, const std::string& reason) {
        decision.allow = allow;
        decision.reason = reason;
        append_log({{"type", "decision"}, {"seq", decision.seq}, {"time", now},
                    {"endpoint", preview.endpoint}, {"tier", preview.tier},
                    {"allow", allow}, {"reason", reason}});
        return decision;
    };

    if (preview.tier == "high") {
        window_.emplace_back(now, "high-attempt");
        maybe_trip(now);
    }
    if (tripped_ && preview.tier != "low") return finish(false, "breaker-tripped");

    const auto& quota = config_.quota;
    if (preview.estimated_cost.predicted_cpu_seconds > quota.max_cpu_seconds ||
        preview.estimated_cost.predicted_memory_bytes > quota.max_memory_bytes ||
        preview.estimated_cost.predicted_call_count > quota.max_calls) {
        window_.emplace_back(now, "quota-denial");
        maybe_trip(now);
        return finish(false, "quota-exceeded");
    }
    if (preview.tier == "high" && confirmation != Confirmation::Granted)
        return finish(false, "confirmation-required");
    if ((preview.tier == "medium" || preview.tier == "high") && preview.seq == 0)
        return finish(false, "preview-required");
    return finish(true, "allowed");
}

void Governor::record_execution(const std::string& tool_name, double cpu_seconds, bool ok) {
    std::lock_guard<std::mutex> lock(mutex_);
    run_history_[tool_name].push_back(cpu_seconds);
    append_log({{"type", "execution"}, {"seq", ++seq_}, {"time", clock_()},
                {"endpoint", tool_name}, {"cpu_seconds", cpu_seconds}, {"ok", ok}});
}

void Governor::register_undo(const std::string& tool_name) {
    std::lock_guard<std::mutex> lock(mutex_);
    undo_registry_.insert(tool_name);
}

void Governor::reset_breaker() {
    std::lock_guard<std::mutex> lock(mutex_);
    tripped_ = false;
    trip_reason_.clear();
    window_.clear();
    append_log({{"type", "breaker-reset"}, {"seq", ++seq_}, {"time", clock_()}});
}

bool Governor::breaker_tripped() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return tripped_;
}

std::string Governor::trip_reason() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return trip_reason_;
}

std::vector<json> Governor::decision_log() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return log_;
}

void Governor::append_log(json event) {
    log_.push_back(event);
    if (!log_path_.empty()) {
        std::ofstream out(log_path_, std::ios::app);
        out << event.dump() << "\n";
    }
}

void Governor::prune_window(double now) {
    double horizon = now - config_.breaker.window_seconds;
    while (!window_.empty() && window_.front().first < horizon) window_.pop_front();
}

void Governor::maybe_trip(double now) {
    if (tripped_) return;
    int denials = 0, high_attempts = 0;
    for (const auto& [_, kind] : window_) {
        if (kind == "quota-denial") ++denials;
        if (kind == "high-attempt") ++high_attempts;
    }
    if (denials >= config_.breaker.max_quota_denials) {
        tripped_ = true;
        trip_reason_ = "quota denials reached " + std::to_string(denials) + " within the window";
    } else if (high_attempts >= config_.breaker.max_high_attempts) {
        tripped_ = true;
        trip_reason_ = "high-tier attempts reached " + std::to_string(high_attempts) +
                       " within the window";
    }
    if (tripped_)
        append_log({{"type", "breaker-trip"}, {"seq", ++seq_}, {"time", now},
                    {"reason", trip_reason_}});
}

}  // namespace mcpforge
