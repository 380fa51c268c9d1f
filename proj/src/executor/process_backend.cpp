#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "perfalign/error.hpp"
#include "perfalign/executor.hpp"

namespace perfalign {

namespace fs = std::filesystem;

namespace detail {

ProcessRun run_process(const std::string& shell_command, const std::string& stdin_path, std::uint64_t wall_limit_ms,
                       std::uint64_t memory_limit_mb) {
  ProcessRun run;
  int out_pipe[2];
  if (pipe(out_pipe) != 0) {
    run.launch_failed = true;
    return run;
  }

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = fork();
  if (pid < 0) {
    close(out_pipe[0]);
    close(out_pipe[1]);
    run.launch_failed = true;
    return run;
  }
  if (pid == 0) {
    setpgid(0, 0);
    const int in_fd = stdin_path.empty() ? open("/dev/null", O_RDONLY) : open(stdin_path.c_str(), O_RDONLY);
    if (in_fd < 0) _exit(127);
    dup2(in_fd, STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    const int null_fd = open("/dev/null", O_WRONLY);
    if (null_fd >= 0) dup2(null_fd, STDERR_FILENO);
    close(out_pipe[0]);
    close(out_pipe[1]);
    if (memory_limit_mb > 0) {
      rlimit lim{};
      lim.rlim_cur = lim.rlim_max = static_cast<rlim_t>(memory_limit_mb) * 1024 * 1024;
      setrlimit(RLIMIT_AS, &lim);
    }
    execl("/bin/sh", "sh", "-c", shell_command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  setpgid(pid, pid);
  close(out_pipe[1]);

  const auto deadline = start + std::chrono::milliseconds(wall_limit_ms);
  char buf[4096];
  bool open_pipe = true;
  while (open_pipe) {
    const auto now = std::chrono::steady_clock::now();
    if (wall_limit_ms > 0 && now >= deadline) {
      run.timed_out = true;
      break;
    }
    const int wait_ms =
        wall_limit_ms > 0
            ? static_cast<int>(std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count()) + 1
            : -1;
    pollfd pfd{out_pipe[0], POLLIN, 0};
    const int ready = poll(&pfd, 1, wait_ms);
    if (ready < 0 && errno == EINTR) continue;
    if (ready <= 0) continue;
    const ssize_t n = read(out_pipe[0], buf, sizeof buf);
    if (n <= 0) {
      open_pipe = false;
    } else {
      run.stdout_text.append(buf, static_cast<std::size_t>(n));
    }
  }
  close(out_pipe[0]);

  int status = 0;
  if (run.timed_out) {
    kill(-pid, SIGKILL);
    waitpid(pid, &status, 0);
  } else {
    // stdout closed; the child may still be running without output.
    for (;;) {
      const pid_t r = waitpid(pid, &status, WNOHANG);
      if (r == pid) break;
      if (wall_limit_ms > 0 && std::chrono::steady_clock::now() >= deadline) {
        run.timed_out = true;
        kill(-pid, SIGKILL);
        waitpid(pid, &status, 0);
        break;
      }
      usleep(200);
    }
  }
  run.elapsed_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (!run.timed_out) {
    run.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
    if (run.exit_code == 127) run.launch_failed = true;
  }
  return run;
}

}  // namespace detail

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
  for (std::size_t pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string quoted(const fs::path& p) { return "'" + p.string() + "'"; }

class ScratchDir {
 public:
  ScratchDir() {
    static std::atomic<unsigned long> counter{0};
    path_ = fs::temp_directory_path() /
            ("perfalign-" + std::to_string(getpid()) + "-" + std::to_string(counter++));
    fs::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, std::string_view text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

}  // namespace

Verdict evaluate_process(std::string_view code, const Problem& problem, const ProcessBackend& backend) {
  Verdict v;
  ScratchDir dir;
  const fs::path src = dir.path() / "solution.src";
  const fs::path bin = dir.path() / "solution.bin";
  write_file(src, code);
  const std::uint64_t limit = backend.wall_limit_ms > 0 ? backend.wall_limit_ms : problem.step_limit;
  const int repeat = std::max(1, backend.repeat);

  auto expand = [&](std::string cmd, const fs::path& input) {
    cmd = substitute(std::move(cmd), "{src}", quoted(src));
    cmd = substitute(std::move(cmd), "{bin}", quoted(bin));
    return substitute(std::move(cmd), "{input_file}", quoted(input));
  };

  auto fail_all = [&](VerdictStatus status, const std::string& note, bool infra) {
    v.status = status;
    v.note = note;
    v.infra_failure = infra;
    v.per_test.assign(problem.tests.size(), TestResult{false, 0.0, note, status});
    return v;
  };

  if (!backend.compile_command.empty()) {
    // Compilation is excluded from measured runtime and done once per solution.
    const auto compiled = detail::run_process(expand(backend.compile_command, {}), "", 0, backend.memory_limit_mb);
    if (compiled.launch_failed) return fail_all(VerdictStatus::error, "error: compiler launch failed", true);
    if (compiled.exit_code != 0) return fail_all(VerdictStatus::error, "error: compilation failed", false);
  }

  for (std::size_t t = 0; t < problem.tests.size(); ++t) {
    const fs::path input = dir.path() / ("input" + std::to_string(t) + ".txt");
    write_file(input, problem.tests[t].input);
    const std::string cmd = expand(backend.command, input);
    TestResult r;
    double total_ms = 0.0;
    r.passed = true;
    r.outcome = VerdictStatus::correct;
    for (int k = 0; k < repeat && r.passed; ++k) {
      const auto run = detail::run_process(cmd, input.string(), limit, backend.memory_limit_mb);
      total_ms += run.elapsed_ms;
      if (run.launch_failed) {
        r = {false, 0.0, "error: launch failed", VerdictStatus::error};
        v.infra_failure = true;
      } else if (run.timed_out) {
        r = {false, static_cast<double>(limit), "timeout: wall limit exceeded", VerdictStatus::timeout};
      } else if (run.exit_code != 0) {
        r = {false, 0.0, "error: exit code " + std::to_string(run.exit_code), VerdictStatus::error};
      } else if (!outputs_match(run.stdout_text, problem.tests[t].expected_output)) {
        r = {false, 0.0, "wrong output", VerdictStatus::wrong_output};
      }
    }
    if (r.passed) r.runtime = total_ms / repeat;
    v.per_test.push_back(std::move(r));
  }

  detail::finalize_verdict(v);
  return v;
}

}  // namespace perfalign
