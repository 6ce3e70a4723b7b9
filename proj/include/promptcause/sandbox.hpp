#pragma once

// Runs a program under an interpreter once per test case, each in its own
// child process group with a wall-clock timeout and an address-space limit.
// Process isolation only: not safe for adversarial code.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "promptcause/dataset.hpp"
#include "promptcause/error.hpp"
#include "promptcause/io.hpp"

namespace promptcause {

enum class TestStatus { pass, wrong_output, runtime_error, timeout };

inline const char* to_string(TestStatus s) {
  switch (s) {
    case TestStatus::pass: return "pass";
    case TestStatus::wrong_output: return "wrong_output";
    case TestStatus::runtime_error: return "runtime_error";
    case TestStatus::timeout: return "timeout";
  }
  return "?";
}

struct CellResult {
  TestStatus status = TestStatus::runtime_error;
  double wall_time = 0.0;
};

// One cell per test case, in test order.
struct ExecutionOutcome {
  std::vector<CellResult> cells;

  std::size_t count(TestStatus s) const {
    std::size_t n = 0;
    for (const auto& c : cells) n += c.status == s;
    return n;
  }
};

struct SandboxLimits {
  double timeout_s = 4.0;
  std::size_t memory_mb = 256;
  std::string interpreter = "python3";
  unsigned workers = 0;  // 0 = hardware concurrency
};

// Slack allowed past the timeout for the kill and reap.
inline constexpr double kTimeoutGrace = 0.5;

// Stdout beyond this many bytes is discarded (still drained).
inline constexpr std::size_t kMaxCapturedOutput = std::size_t{16} << 20;

// Strips trailing whitespace on each line and trailing blank lines.
inline std::string normalize_output(std::string_view s) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto nl = s.find('\n', start);
    if (nl == std::string_view::npos) nl = s.size();
    std::string line(s.substr(start, nl - start));
    const auto last = line.find_last_not_of(" \t\r\f\v");
    line.erase(last == std::string::npos ? 0 : last + 1);
    lines.push_back(std::move(line));
    start = nl + 1;
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  return out;
}

// Resolves a command name against PATH; throws SandboxError when not found.
inline std::string resolve_interpreter(const std::string& cmd) {
  auto executable = [](const std::string& p) {
    struct stat st {};
    return ::stat(p.c_str(), &st) == 0 && S_ISREG(st.st_mode) && ::access(p.c_str(), X_OK) == 0;
  };
  if (cmd.empty()) throw SandboxError("interpreter command is empty");
  if (cmd.find('/') != std::string::npos) {
    if (executable(cmd)) return cmd;
    throw SandboxError("interpreter not executable: " + cmd);
  }
  const char* path = std::getenv("PATH");
  std::string_view rest = path ? path : "/usr/bin:/bin";
  while (true) {
    const auto colon = rest.find(':');
    std::string dir(rest.substr(0, colon));
    if (dir.empty()) dir = ".";
    const std::string candidate = dir + "/" + cmd;
    if (executable(candidate)) return candidate;
    if (colon == std::string_view::npos) break;
    rest.remove_prefix(colon + 1);
  }
  throw SandboxError("interpreter not found on PATH: " + cmd);
}

namespace detail {

inline void ignore_sigpipe_once() {
  static std::once_flag flag;
  std::call_once(flag, [] { ::signal(SIGPIPE, SIG_IGN); });
}

class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "promptcause-XXXXXX").string();
    if (!::mkdtemp(tmpl.data())) throw SandboxError("cannot create temp directory");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct RawRun {
  bool timed_out = false;
  bool exited_ok = false;
  std::string out;
  double wall_time = 0.0;
};

inline void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

inline RawRun run_child(const std::vector<std::string>& command, const std::string& script, const std::string& cwd,
                        const std::string& input, const SandboxLimits& lim) {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) || ::pipe2(out_pipe, O_CLOEXEC) || ::pipe2(err_pipe, O_CLOEXEC))
    throw SandboxError("pipe failed");

  // Everything the child touches is prepared before fork.
  std::vector<char*> argv;
  for (const auto& a : command) argv.push_back(const_cast<char*>(a.c_str()));
  argv.push_back(const_cast<char*>(script.c_str()));
  argv.push_back(nullptr);
  const rlim_t mem = static_cast<rlim_t>(lim.memory_mb) << 20;
  const auto start = std::chrono::steady_clock::now();

  const pid_t pid = ::fork();
  if (pid < 0) throw SandboxError(std::string("fork failed: ") + std::strerror(errno));
  if (pid == 0) {
    ::setpgid(0, 0);
    struct rlimit rl {mem, mem};
    ::setrlimit(RLIMIT_AS, &rl);
    ::dup2(in_pipe[0], 0);
    ::dup2(out_pipe[1], 1);
    ::dup2(err_pipe[1], 2);
    if (::chdir(cwd.c_str()) != 0) ::_exit(126);
    ::execv(argv[0], argv.data());
    ::_exit(127);
  }
  ::setpgid(pid, pid);
  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int in_fd = in_pipe[1], out_fd = out_pipe[0], err_fd = err_pipe[0];
  set_nonblocking(in_fd);
  set_nonblocking(out_fd);
  set_nonblocking(err_fd);

  RawRun r;
  std::size_t written = 0;
  if (input.empty()) {
    ::close(in_fd);
    in_fd = -1;
  }
  const auto deadline = start + std::chrono::duration<double>(lim.timeout_s);
  char buf[65536];
  while (out_fd >= 0 || err_fd >= 0) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= deadline) {
      r.timed_out = true;
      break;
    }
    pollfd fds[3];
    int nfds = 0;
    if (out_fd >= 0) fds[nfds++] = {out_fd, POLLIN, 0};
    if (err_fd >= 0) fds[nfds++] = {err_fd, POLLIN, 0};
    if (in_fd >= 0) fds[nfds++] = {in_fd, POLLOUT, 0};
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count();
    const int rc = ::poll(fds, static_cast<nfds_t>(nfds), static_cast<int>(std::min<long long>(left + 1, 50)));
    if (rc < 0 && errno != EINTR) break;
    for (int k = 0; k < nfds; ++k) {
      if (!fds[k].revents) continue;
      if (fds[k].fd == in_fd) {
        const ssize_t w = ::write(in_fd, input.data() + written, input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN) written = input.size();
        if (written >= input.size()) {
          ::close(in_fd);
          in_fd = -1;
        }
        continue;
      }
      const ssize_t n = ::read(fds[k].fd, buf, sizeof buf);
      if (n > 0) {
        if (fds[k].fd == out_fd && r.out.size() < kMaxCapturedOutput) r.out.append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || errno != EAGAIN) {
        ::close(fds[k].fd);
        (fds[k].fd == out_fd ? out_fd : err_fd) = -1;
      }
    }
  }
  if (in_fd >= 0) ::close(in_fd);
  if (out_fd >= 0) ::close(out_fd);
  if (err_fd >= 0) ::close(err_fd);

  int status = 0;
  if (r.timed_out) {
    ::kill(-pid, SIGKILL);
    ::waitpid(pid, &status, 0);
  } else {
    // Pipes closed; the child may still be running (e.g. closed stdout then looped).
    while (true) {
      const pid_t w = ::waitpid(pid, &status, WNOHANG);
      if (w == pid) break;
      if (std::chrono::steady_clock::now() >= deadline) {
        r.timed_out = true;
        ::kill(-pid, SIGKILL);
        ::waitpid(pid, &status, 0);
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    // Reap stray grandchildren in the group.
    ::kill(-pid, SIGKILL);
  }
  r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (r.timed_out) r.wall_time = std::max(r.wall_time, lim.timeout_s);
  r.exited_ok = !r.timed_out && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  return r;
}

}  // namespace detail

// Memo of cell results for deterministic programs, shared across batches.
// Keyed by interpreter, limits, program, stdin and expected output.
class ExecutionCache {
 public:
  static std::string key(const SandboxLimits& lim, const std::string& program, const TestCase& t) {
    std::string k = lim.interpreter;
    for (const auto* part : {&program, &t.stdin_text, &t.expected_stdout}) {
      k += '\0';
      k += *part;
    }
    return k + '\0' + io::format_double(lim.timeout_s) + '\0' + std::to_string(lim.memory_mb);
  }
  std::optional<CellResult> find(const std::string& k) const {
    std::lock_guard lock(mu_);
    auto it = memo_.find(k);
    if (it == memo_.end()) return std::nullopt;
    return it->second;
  }
  void store(const std::string& k, CellResult c) {
    std::lock_guard lock(mu_);
    memo_.emplace(k, c);
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return memo_.size();
  }

 private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, CellResult> memo_;
};

// Runs every (program, test) cell on a bounded worker pool. Result order is
// outcomes[program].cells[test], independent of scheduling. With a cache,
// cells seen before (or repeated within the batch) are not executed again.
inline std::vector<ExecutionOutcome> run_batch(const std::vector<std::string>& programs, const std::vector<TestCase>& tests,
                                               const SandboxLimits& lim = {}, ExecutionCache* cache = nullptr) {
  if (tests.empty()) throw Error("run_tests: no test cases");
  if (!(lim.timeout_s > 0)) throw Error("run_tests: timeout must be positive");
  // "python3 -S" style commands: the first word is resolved, the rest are arguments.
  std::vector<std::string> command;
  {
    std::istringstream words(lim.interpreter);
    for (std::string w; words >> w;) command.push_back(w);
  }
  if (command.empty()) throw SandboxError("interpreter command is empty");
  command[0] = resolve_interpreter(command[0]);
  detail::ignore_sigpipe_once();

  std::vector<ExecutionOutcome> outcomes(programs.size());
  for (auto& o : outcomes) o.cells.resize(tests.size());

  // Cells to execute; duplicates point at the first occurrence.
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  std::vector<std::pair<std::size_t, std::size_t>> copies;  // (cell, job)
  std::vector<std::string> keys;
  {
    std::unordered_map<std::string, std::size_t> first;
    for (std::size_t p = 0; p < programs.size(); ++p)
      for (std::size_t t = 0; t < tests.size(); ++t) {
        if (!cache) {
          jobs.push_back({p, t});
          continue;
        }
        auto k = ExecutionCache::key(lim, programs[p], tests[t]);
        if (auto hit = cache->find(k)) {
          outcomes[p].cells[t] = *hit;
        } else if (auto it = first.find(k); it != first.end()) {
          copies.push_back({p * tests.size() + t, it->second});
        } else {
          first.emplace(k, jobs.size());
          jobs.push_back({p, t});
          keys.push_back(std::move(k));
        }
      }
  }

  detail::TempDir dir;
  std::vector<std::string> scripts(programs.size());
  for (const auto& [p, t] : jobs) {
    if (!scripts[p].empty()) continue;
    const auto path = dir.path() / ("prog" + std::to_string(p) + ".py");
    io::write_file_atomic(path.string(), programs[p]);
    scripts[p] = path.string();
  }
  std::vector<std::string> expected;
  for (const auto& t : tests) expected.push_back(normalize_output(t.expected_stdout));

  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr failure;
  auto worker = [&] {
    while (true) {
      const std::size_t k = next.fetch_add(1);
      if (k >= jobs.size()) return;
      const auto [p, t] = jobs[k];
      try {
        const auto raw = detail::run_child(command, scripts[p], dir.path().string(), tests[t].stdin_text, lim);
        CellResult c;
        c.wall_time = raw.wall_time;
        if (raw.timed_out) c.status = TestStatus::timeout;
        else if (!raw.exited_ok) c.status = TestStatus::runtime_error;
        else c.status = normalize_output(raw.out) == expected[t] ? TestStatus::pass : TestStatus::wrong_output;
        outcomes[p].cells[t] = c;
        if (cache) cache->store(keys[k], c);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  unsigned n_workers = lim.workers ? lim.workers : std::max(1u, std::thread::hardware_concurrency());
  n_workers = static_cast<unsigned>(std::min<std::size_t>(n_workers, std::max<std::size_t>(jobs.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n_workers && !jobs.empty(); ++i) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
  for (const auto& [cell, job] : copies) {
    const auto [p, t] = jobs[job];
    outcomes[cell / tests.size()].cells[cell % tests.size()] = outcomes[p].cells[t];
  }
  return outcomes;
}

inline ExecutionOutcome run_tests(const std::string& program, const std::vector<TestCase>& tests, const SandboxLimits& lim = {}) {
  return run_batch({program}, tests, lim).front();
}

}  // namespace promptcause
