#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mcpforge {

// Parameterized command execution: commands are argument vectors, never shell
// strings, and child environments are explicit allowlists.
struct RunSpec {
    std::vector<std::string> argv;
    std::string cwd;
    std::map<std::string, std::string> env;  // exact child environment
    double timeout_seconds = 120.0;
    std::string stdin_data;
};

struct RunResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
    double duration_seconds = 0.0;

    bool ok() const { return exit_code == 0 && !timed_out; }
};

RunResult run_process(const RunSpec& spec);

// Line-oriented child process with both pipes held open; used to speak
// newline-delimited protocols with a served tool process.
class PipeProcess {
public:
    explicit PipeProcess(const RunSpec& spec);
    ~PipeProcess();
    PipeProcess(const PipeProcess&) = delete;
    PipeProcess& operator=(const PipeProcess&) = delete;

    void send_line(const std::string& line);
    // Reads one line; empty optional on EOF or timeout.
    std::optional<std::string> read_line(double timeout_seconds);
    void close_stdin();
    int wait(double timeout_seconds);

private:
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    bool reaped_ = false;
};

}  // namespace mcpforge
