#include "mcpforge/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cstring>
#include <thread>

#include "mcpforge/errors.hpp"

namespace mcpforge {

namespace {

std::vector<char*> build_argv(const std::vector<std::string>& argv) {
    std::vector<char*> out;
    out.reserve(argv.size() + 1);
    for (const auto& a : argv) out.push_back(const_cast<char*>(a.c_str()));
    out.push_back(nullptr);
    return out;
}

std::vector<std::string> build_env_storage(const std::map<std::string, std::string>& env) {
    std::vector<std::string> out;
    out.reserve(env.size());
    for (const auto& [k, v] : env) out.push_back(k + "=" + v);
    return out;
}

void set_cloexec(int fd) { fcntl(fd, F_SETFD, FD_CLOEXEC); }

struct SpawnResult {
    int pid;
    int stdin_fd;
    int stdout_fd;
    int stderr_fd;  // -1 when merged/unused
};

SpawnResult spawn(const RunSpec& spec, bool separate_stderr) {
    if (spec.argv.empty()) throw make_error("exec-error", "empty argv");

    int in_pipe[2], out_pipe[2], err_pipe[2] = {-1, -1};
    if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
        throw make_error("exec-error", "pipe() failed");
    if (separate_stderr && pipe(err_pipe) != 0)
        throw make_error("exec-error", "pipe() failed");

    pid_t pid = fork();
    if (pid < 0) throw make_error("exec-error", "fork() failed");

    if (pid == 0) {
        dup2(in_pipe[0], STDIN_FILENO);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(separate_stderr ? err_pipe[1] : out_pipe[1], STDERR_FILENO);
        close(in_pipe[0]);
        close(in_pipe[1]);
        close(out_pipe[0]);
        close(out_pipe[1]);
        if (separate_stderr) {
            close(err_pipe[0]);
            close(err_pipe[1]);
        }
        if (!spec.cwd.empty() && chdir(spec.cwd.c_str()) != 0) _exit(127);
        // Own process group so a timeout can reap the whole tree.
        setpgid(0, 0);
        auto argv = build_argv(spec.argv);
        auto env_storage = build_env_storage(spec.env);
        std::vector<char*> envp;
        for (auto& e : env_storage) envp.push_back(const_cast<char*>(e.c_str()));
        envp.push_back(nullptr);
        execve(spec.argv[0].c_str(), argv.data(), envp.data());
        // Fall back to PATH lookup for bare command names.
        execvpe(spec.argv[0].c_str(), argv.data(), envp.data());
        _exit(127);
    }

    close(in_pipe[0]);
    close(out_pipe[1]);
    if (separate_stderr) close(err_pipe[1]);
    set_cloexec(in_pipe[1]);
    set_cloexec(out_pipe[0]);
    if (separate_stderr) set_cloexec(err_pipe[0]);
    return SpawnResult{pid, in_pipe[1], out_pipe[0], separate_stderr ? err_pipe[0] : -1};
}

void kill_tree(int pid) {
    kill(-pid, SIGKILL);
    kill(pid, SIGKILL);
}

}  // namespace

RunResult run_process(const RunSpec& spec) {
    auto started = std::chrono::steady_clock::now();
    SpawnResult child = spawn(spec, /*separate_stderr=*/true);

    // Feed stdin fully, then close so the child sees EOF.
    size_t written = 0;
    while (written < spec.stdin_data.size()) {
        ssize_t n = write(child.stdin_fd, spec.stdin_data.data() + written,
                          spec.stdin_data.size() - written);
        if (n <= 0) break;
        written += static_cast<size_t>(n);
    }
    close(child.stdin_fd);

    RunResult result;
    struct pollfd fds[2] = {{child.stdout_fd, POLLIN, 0}, {child.stderr_fd, POLLIN, 0}};
    bool open_out = true, open_err = true;
    char buf[4096];
    auto deadline = started + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                  std::chrono::duration<double>(spec.timeout_seconds));

    while (open_out || open_err) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            kill_tree(child.pid);
            break;
        }
        int remaining_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        fds[0].fd = open_out ? child.stdout_fd : -1;
        fds[1].fd = open_err ? child.stderr_fd : -1;
        int rc = poll(fds, 2, std::max(1, std::min(remaining_ms, 500)));
        if (rc < 0) break;
        for (int i = 0; i < 2; ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof(buf));
            if (n > 0) {
                (i == 0 ? result.out : result.err).append(buf, static_cast<size_t>(n));
            } else {
                (i == 0 ? open_out : open_err) = false;
                close(fds[i].fd == child.stdout_fd ? child.stdout_fd : child.stderr_fd);
            }
        }
    }
    if (open_out) close(child.stdout_fd);
    if (open_err) close(child.stderr_fd);

    int status = 0;
    waitpid(child.pid, &status, 0);
    if (result.timed_out) {
        result.exit_code = -1;
    } else if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.exit_code = 128 + WTERMSIG(status);
    }
    result.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

PipeProcess::PipeProcess(const RunSpec& spec) {
    SpawnResult child = spawn(spec, /*separate_stderr=*/false);
    pid_ = child.pid;
    to_child_ = child.stdin_fd;
    from_child_ = child.stdout_fd;
}

PipeProcess::~PipeProcess() {
    close_stdin();
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0 && !reaped_) {
        kill_tree(pid_);
        waitpid(pid_, nullptr, 0);
    }
}

void PipeProcess::send_line(const std::string& line) {
    std::string payload = line + "\n";
    size_t written = 0;
    while (written < payload.size()) {
        ssize_t n = write(to_child_, payload.data() + written, payload.size() - written);
        if (n <= 0) throw make_error("transport-closed", "service process closed its input");
        written += static_cast<size_t>(n);
    }
}

std::optional<std::string> PipeProcess::read_line(double timeout_seconds) {
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_seconds));
    char buf[4096];
    while (true) {
        auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) return std::nullopt;
        struct pollfd p{from_child_, POLLIN, 0};
        int ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        int rc = poll(&p, 1, std::max(1, ms));
        if (rc <= 0) return std::nullopt;
        ssize_t n = read(from_child_, buf, sizeof(buf));
        if (n <= 0) return std::nullopt;
        buffer_.append(buf, static_cast<size_t>(n));
    }
}

void PipeProcess::close_stdin() {
    if (to_child_ >= 0) {
        close(to_child_);
        to_child_ = -1;
    }
}

int PipeProcess::wait(double timeout_seconds) {
    auto deadline = std::chrono::steady_clock::now() +
                    std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                        std::chrono::duration<double>(timeout_seconds));
    int status = 0;
    while (std::chrono::steady_clock::now() < deadline) {
        pid_t rc = waitpid(pid_, &status, WNOHANG);
        if (rc == pid_) {
            reaped_ = true;
            return WIFEXITED(status) ? WEXITSTATUS(status) : 128;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    kill_tree(pid_);
    waitpid(pid_, &status, 0);
    reaped_ = true;
    return -1;
}

}  // namespace mcpforge
