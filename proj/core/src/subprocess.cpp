// SPDX-License-Identifier: Apache-2.0
#include "testgenie/subprocess.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstdlib>
#include <cstring>
#include <sstream>

namespace testgenie {

namespace {

struct Fd {
    int fd = -1;
    Fd() = default;
    explicit Fd(int f) : fd(f) {}
    Fd(const Fd&) = delete;
    Fd& operator=(const Fd&) = delete;
    ~Fd() { reset(); }
    void reset()
    {
        if (fd >= 0) {
            ::close(fd);
        }
        fd = -1;
    }
};

void make_pipe(Fd& r, Fd& w)
{
    int p[2];
    if (::pipe2(p, O_CLOEXEC) != 0) {
        throw SpawnError(std::string{"pipe: "} + std::strerror(errno));
    }
    r.fd = p[0];
    w.fd = p[1];
}

std::filesystem::path resolve_program(const std::string& name, const std::map<std::string, std::string>& env)
{
    if (name.find('/') != std::string::npos) {
        return name;
    }
    std::string path;
    if (const auto it = env.find("PATH"); it != env.end()) {
        path = it->second;
    } else if (const char* p = std::getenv("PATH")) {
        path = p;
    }
    std::istringstream in{path};
    std::string dir;
    while (std::getline(in, dir, ':')) {
        const auto candidate = std::filesystem::path{dir.empty() ? "." : dir} / name;
        if (::access(candidate.c_str(), X_OK) == 0 && !std::filesystem::is_directory(candidate)) {
            return candidate;
        }
    }
    throw SpawnError("program not found on PATH: " + name);
}

} // namespace

ProcessResult run_process(const ProcessSpec& spec)
{
    if (spec.argv.empty()) {
        throw SpawnError("empty command line");
    }
    if (!spec.cwd.empty() && !std::filesystem::is_directory(spec.cwd)) {
        throw SpawnError("working directory does not exist: " + spec.cwd.string());
    }
    const auto program = resolve_program(spec.argv.front(), spec.env);

    std::vector<std::string> env_strings;
    for (const auto& [k, v] : spec.env) {
        env_strings.push_back(k + "=" + v);
    }
    std::vector<char*> envp;
    for (auto& s : env_strings) {
        envp.push_back(s.data());
    }
    envp.push_back(nullptr);
    std::vector<std::string> args = spec.argv;
    std::vector<char*> argv;
    for (auto& a : args) {
        argv.push_back(a.data());
    }
    argv.push_back(nullptr);

    Fd out_r, out_w, err_r, err_w, exec_r, exec_w;
    make_pipe(out_r, out_w);
    make_pipe(err_r, err_w);
    make_pipe(exec_r, exec_w);

    const auto started = std::chrono::steady_clock::now();
    const pid_t pid = ::fork();
    if (pid < 0) {
        throw SpawnError(std::string{"fork: "} + std::strerror(errno));
    }
    if (pid == 0) {
        ::setpgid(0, 0);
        const int devnull = ::open("/dev/null", O_RDONLY);
        if (devnull >= 0) {
            ::dup2(devnull, STDIN_FILENO);
        }
        ::dup2(out_w.fd, STDOUT_FILENO);
        ::dup2(err_w.fd, STDERR_FILENO);
        int err = 0;
        if (!spec.cwd.empty() && ::chdir(spec.cwd.c_str()) != 0) {
            err = errno;
        } else {
            ::execve(program.c_str(), argv.data(), envp.data());
            err = errno;
        }
        [[maybe_unused]] auto n = ::write(exec_w.fd, &err, sizeof err);
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    out_w.reset();
    err_w.reset();
    exec_w.reset();

    int child_errno = 0;
    if (::read(exec_r.fd, &child_errno, sizeof child_errno) == static_cast<ssize_t>(sizeof child_errno)) {
        int status = 0;
        ::waitpid(pid, &status, 0);
        throw SpawnError("cannot execute " + program.string() + ": " + std::strerror(child_errno));
    }

    ProcessResult result;
    const auto deadline = started + spec.timeout;
    std::array<pollfd, 2> fds{pollfd{out_r.fd, POLLIN, 0}, pollfd{err_r.fd, POLLIN, 0}};
    std::array<std::string*, 2> sinks{&result.out, &result.err};
    int open_fds = 2;
    std::array<char, 8192> buf{};
    while (open_fds > 0) {
        const auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            result.timed_out = true;
            ::kill(-pid, SIGKILL);
            break;
        }
        const auto wait_ms =
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
        const int rc = ::poll(fds.data(), fds.size(), static_cast<int>(std::min<long long>(wait_ms, 1000)));
        if (rc < 0) {
            if (errno == EINTR) {
                continue;
            }
            ::kill(-pid, SIGKILL);
            break;
        }
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || fds[i].revents == 0) {
                continue;
            }
            const ssize_t n = ::read(fds[i].fd, buf.data(), buf.size());
            if (n > 0) {
                sinks[i]->append(buf.data(), static_cast<std::size_t>(n));
            } else if (n == 0 || errno != EINTR) {
                fds[i].fd = -1;
                --open_fds;
            }
        }
    }

    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    // Grandchildren may outlive the runner; the group goes with it.
    ::kill(-pid, SIGKILL);
    if (WIFEXITED(status)) {
        result.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        result.term_signal = WTERMSIG(status);
    }
    result.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return result;
}

} // namespace testgenie
