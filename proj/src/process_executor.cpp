#include "mathlearner/process_executor.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>

#include "mathlearner/error.hpp"

namespace mathlearner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool write_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

ExecutionOutcome failure(const ExecutionRequest& request, ExecStatus status, std::string detail,
                         Clock::time_point start) {
  ExecutionOutcome outcome;
  outcome.request_id = request.request_id;
  outcome.status = status;
  outcome.stderr_excerpt = std::move(detail);
  outcome.duration_s = seconds_since(start);
  return outcome;
}

}  // namespace

ProcessPoolExecutor::ProcessPoolExecutor(ProcessPoolOptions options) : options_(std::move(options)) {
  if (options_.command.empty()) throw Error(ErrorCode::InvalidArgument, "runner command is empty");
  if (options_.pool_size < 1) options_.pool_size = 1;
  workers_.resize(static_cast<std::size_t>(options_.pool_size));
  // A dead worker must surface as EPIPE on write, not kill the parent.
  ::signal(SIGPIPE, SIG_IGN);
}

ProcessPoolExecutor::~ProcessPoolExecutor() {
  std::lock_guard lock(mutex_);
  for (auto& worker : workers_) retire(worker);
}

int ProcessPoolExecutor::spawn_count() const {
  std::lock_guard lock(mutex_);
  return spawn_count_;
}

void ProcessPoolExecutor::spawn(Worker& worker) {
  int in_pipe[2], out_pipe[2], err_pipe[2];
  if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorCode::RunnerSpawnFailure, std::strerror(errno));
  if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
    ::close(in_pipe[0]);
    ::close(in_pipe[1]);
    throw Error(ErrorCode::RunnerSpawnFailure, std::strerror(errno));
  }
  // err_pipe reports a failed exec back to the parent; it closes on success.
  if (::pipe2(err_pipe, O_CLOEXEC) != 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
    throw Error(ErrorCode::RunnerSpawnFailure, std::strerror(errno));
  }

  std::vector<char*> argv;
  for (auto& arg : options_.command) argv.push_back(arg.data());
  argv.push_back(nullptr);

  pid_t pid = ::fork();
  if (pid < 0) {
    for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1], err_pipe[0], err_pipe[1]}) ::close(fd);
    throw Error(ErrorCode::RunnerSpawnFailure, std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(in_pipe[0], STDIN_FILENO);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::execvp(argv[0], argv.data());
    int err = errno;
    [[maybe_unused]] auto ignored = ::write(err_pipe[1], &err, sizeof err);
    ::_exit(127);
  }

  ::close(in_pipe[0]);
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  int child_errno = 0;
  ssize_t n;
  do {
    n = ::read(err_pipe[0], &child_errno, sizeof child_errno);
  } while (n < 0 && errno == EINTR);
  ::close(err_pipe[0]);
  if (n == static_cast<ssize_t>(sizeof child_errno)) {
    ::close(in_pipe[1]);
    ::close(out_pipe[0]);
    ::waitpid(pid, nullptr, 0);
    throw Error(ErrorCode::RunnerSpawnFailure, "exec " + options_.command.front() + ": " + std::strerror(child_errno));
  }
  worker.pid = pid;
  worker.to_child = in_pipe[1];
  worker.from_child = out_pipe[0];
  ++spawn_count_;
}

void ProcessPoolExecutor::retire(Worker& worker) {
  if (worker.pid <= 0) return;
  ::close(worker.to_child);
  ::close(worker.from_child);
  ::kill(worker.pid, SIGKILL);
  ::waitpid(worker.pid, nullptr, 0);
  worker.pid = -1;
  worker.to_child = worker.from_child = -1;
}

ExecutionOutcome ProcessPoolExecutor::execute(const ExecutionRequest& request) {
  Worker* worker = nullptr;
  {
    std::unique_lock lock(mutex_);
    idle_cv_.wait(lock, [&] {
      for (auto& w : workers_) {
        if (!w.busy) return true;
      }
      return false;
    });
    for (auto& w : workers_) {
      if (!w.busy) {
        worker = &w;
        break;
      }
    }
    worker->busy = true;
    if (worker->pid <= 0) {
      try {
        spawn(*worker);
      } catch (...) {
        worker->busy = false;
        idle_cv_.notify_one();
        throw;
      }
    }
  }

  ExecutionOutcome outcome = run_on(*worker, request);

  {
    std::lock_guard lock(mutex_);
    if (outcome.status != ExecStatus::Ok) retire(*worker);
    worker->busy = false;
  }
  idle_cv_.notify_one();
  return outcome;
}

ExecutionOutcome ProcessPoolExecutor::run_on(Worker& worker, const ExecutionRequest& request) {
  const auto start = Clock::now();
  const auto deadline = start + std::chrono::duration_cast<Clock::duration>(
                                    std::chrono::duration<double>(request.timeout_s));

  if (!write_all(worker.to_child, encode_frame(encode_request(request)))) {
    return failure(request, ExecStatus::ProtocolError, "runner closed its input", start);
  }

  FrameDecoder decoder;
  char buffer[65536];
  for (;;) {
    std::optional<std::string> payload;
    try {
      payload = decoder.next();
    } catch (const Error& e) {
      return failure(request, ExecStatus::ProtocolError, e.what(), start);
    }
    if (payload) {
      ExecutionOutcome outcome = decode_reply(*payload);
      if (outcome.status != ExecStatus::ProtocolError && outcome.request_id != request.request_id) {
        return failure(request, ExecStatus::ProtocolError, "reply id '" + outcome.request_id + "' does not match",
                       start);
      }
      outcome.request_id = request.request_id;
      outcome.duration_s = seconds_since(start);
      if (outcome.stderr_excerpt.size() > options_.stderr_limit) outcome.stderr_excerpt.resize(options_.stderr_limit);
      return outcome;
    }

    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (remaining <= 0) {
      return failure(request, ExecStatus::Timeout, "killed after " + std::to_string(request.timeout_s) + " s", start);
    }
    pollfd pfd{worker.from_child, POLLIN, 0};
    int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(remaining, 1000)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      return failure(request, ExecStatus::ProtocolError, std::strerror(errno), start);
    }
    if (ready == 0) continue;
    ssize_t n = ::read(worker.from_child, buffer, sizeof buffer);
    if (n < 0) {
      if (errno == EINTR) continue;
      return failure(request, ExecStatus::ProtocolError, std::strerror(errno), start);
    }
    if (n == 0) return failure(request, ExecStatus::ProtocolError, "runner exited without a reply", start);
    decoder.feed(std::string_view(buffer, static_cast<std::size_t>(n)));
  }
}

}  // namespace mathlearner
