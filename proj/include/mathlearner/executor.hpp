#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mathlearner/types.hpp"

namespace mathlearner {

enum class ExecStatus { Ok, Timeout, Memory, Exception, ProtocolError };

std::string_view to_string(ExecStatus status);
std::optional<ExecStatus> exec_status_from_string(std::string_view name);

struct ExecutionRequest {
  std::string request_id;
  std::string source;
  std::string entry_point = kEntryPoint;
  double timeout_s = 10.0;
  std::uint64_t memory_limit = 512ull * 1024 * 1024;
};

struct ExecutionOutcome {
  std::string request_id;
  ExecStatus status = ExecStatus::ProtocolError;
  std::optional<std::string> answer_text;  // present iff status == Ok
  std::string stderr_excerpt;
  double duration_s = 0.0;
};

class Executor {
 public:
  virtual ~Executor() = default;
  /// Program misbehaviour is reported through the outcome status; only an
  /// unobtainable runner throws (RunnerSpawnFailure / ExecutorUnavailable).
  virtual ExecutionOutcome execute(const ExecutionRequest& request) = 0;
};

/// Key used by StubExecutor scripts: 16 lowercase hex digits of FNV-1a 64.
std::string source_hash(std::string_view source);

/// Returns scripted outcomes keyed by source hash; never spawns anything.
class StubExecutor final : public Executor {
 public:
  StubExecutor() = default;
  StubExecutor(StubExecutor&& other) noexcept : script_(std::move(other.script_)), calls_(other.calls_) {}

  void add(std::string_view source, ExecutionOutcome outcome);
  void add_hash(std::string hash, ExecutionOutcome outcome);

  /// JSON array of {"source" | "hash", "status", "answer"?, "stderr"?}.
  static StubExecutor from_json(std::string_view json_text);
  static StubExecutor from_file(const std::filesystem::path& path);

  ExecutionOutcome execute(const ExecutionRequest& request) override;
  std::size_t calls() const;

 private:
  mutable std::mutex mutex_;
  std::map<std::string, ExecutionOutcome> script_;
  std::size_t calls_ = 0;
};

// Wire protocol: 4-byte big-endian length, then a UTF-8 JSON object.
// Request {"id","source","entry","timeout_s"}; reply {"id","status","answer","stderr","duration_s"}.

inline constexpr std::uint32_t kMaxFrameBytes = 64u * 1024 * 1024;

std::string encode_frame(std::string_view payload);

/// Incremental frame reassembly over an arbitrary chunked byte stream.
class FrameDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete payload, if any. Throws Error(InvalidArgument) on a
  /// length header above kMaxFrameBytes.
  std::optional<std::string> next();
  std::size_t buffered() const { return buffer_.size(); }

 private:
  std::string buffer_;
};

std::string encode_request(const ExecutionRequest& request);
/// Parses a reply payload; malformed replies become ProtocolError outcomes
/// carrying the parse problem in stderr_excerpt.
ExecutionOutcome decode_reply(std::string_view payload);

}  // namespace mathlearner
