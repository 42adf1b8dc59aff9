#pragma once

#include <condition_variable>
#include <mutex>
#include <string>
#include <sys/types.h>
#include <vector>

#include "mathlearner/executor.hpp"

namespace mathlearner {

struct ProcessPoolOptions {
  /// argv of the runner worker; limits are passed here by the caller.
  std::vector<std::string> command;
  int pool_size = 1;
  /// Upper bound on kill-and-reap overhead past the request timeout.
  double grace_s = 2.0;
  std::size_t stderr_limit = 2048;
};

/// Pool of persistent runner processes speaking the length-prefixed frame
/// protocol on stdin/stdout. One request in flight per worker. Workers are
/// spawned lazily, killed at the request deadline, and replaced after any
/// non-ok outcome.
class ProcessPoolExecutor final : public Executor {
 public:
  explicit ProcessPoolExecutor(ProcessPoolOptions options);
  ~ProcessPoolExecutor() override;

  ProcessPoolExecutor(const ProcessPoolExecutor&) = delete;
  ProcessPoolExecutor& operator=(const ProcessPoolExecutor&) = delete;

  ExecutionOutcome execute(const ExecutionRequest& request) override;

  /// Number of worker processes started so far (for recycling diagnostics).
  int spawn_count() const;

 private:
  struct Worker {
    pid_t pid = -1;
    int to_child = -1;
    int from_child = -1;
    bool busy = false;
  };

  void spawn(Worker& worker);
  void retire(Worker& worker);
  ExecutionOutcome run_on(Worker& worker, const ExecutionRequest& request);

  ProcessPoolOptions options_;
  mutable std::mutex mutex_;
  std::condition_variable idle_cv_;
  std::vector<Worker> workers_;
  int spawn_count_ = 0;
};

}  // namespace mathlearner
