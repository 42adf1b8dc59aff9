#include "mathlearner/executor.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "mathlearner/embedding.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

using nlohmann::json;

std::string_view to_string(ExecStatus status) {
  switch (status) {
    case ExecStatus::Ok: return "ok";
    case ExecStatus::Timeout: return "timeout";
    case ExecStatus::Memory: return "memory";
    case ExecStatus::Exception: return "exception";
    case ExecStatus::ProtocolError: return "protocol_error";
  }
  return "protocol_error";
}

std::optional<ExecStatus> exec_status_from_string(std::string_view name) {
  for (auto s : {ExecStatus::Ok, ExecStatus::Timeout, ExecStatus::Memory, ExecStatus::Exception,
                 ExecStatus::ProtocolError}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

std::string source_hash(std::string_view source) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(source)));
  return buf;
}

void StubExecutor::add(std::string_view source, ExecutionOutcome outcome) {
  add_hash(source_hash(source), std::move(outcome));
}

void StubExecutor::add_hash(std::string hash, ExecutionOutcome outcome) {
  if (outcome.status == ExecStatus::Ok && !outcome.answer_text) outcome.answer_text = "";
  if (outcome.status != ExecStatus::Ok) outcome.answer_text.reset();
  std::lock_guard lock(mutex_);
  script_[std::move(hash)] = std::move(outcome);
}

StubExecutor StubExecutor::from_json(std::string_view json_text) {
  StubExecutor stub;
  try {
    for (const auto& item : json::parse(json_text)) {
      ExecutionOutcome outcome;
      auto status = exec_status_from_string(item.at("status").get<std::string>());
      if (!status) throw Error(ErrorCode::InvalidArgument, "unknown status in stub script");
      outcome.status = *status;
      if (item.contains("answer") && !item.at("answer").is_null()) {
        outcome.answer_text = item.at("answer").get<std::string>();
      }
      if ((outcome.status == ExecStatus::Ok) != outcome.answer_text.has_value()) {
        throw Error(ErrorCode::InvalidArgument, "stub entry: answer must be present exactly when status is ok");
      }
      outcome.stderr_excerpt = item.value("stderr", "");
      if (item.contains("hash")) {
        stub.add_hash(item.at("hash").get<std::string>(), outcome);
      } else {
        stub.add(item.at("source").get<std::string>(), outcome);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidArgument, std::string("malformed stub script: ") + e.what());
  }
  return stub;
}

StubExecutor StubExecutor::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read stub script " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

ExecutionOutcome StubExecutor::execute(const ExecutionRequest& request) {
  std::lock_guard lock(mutex_);
  ++calls_;
  auto it = script_.find(source_hash(request.source));
  if (it == script_.end()) {
    throw Error(ErrorCode::UnscriptedSource, "no scripted outcome for source hash " + source_hash(request.source));
  }
  ExecutionOutcome outcome = it->second;
  outcome.request_id = request.request_id;
  return outcome;
}

std::size_t StubExecutor::calls() const {
  std::lock_guard lock(mutex_);
  return calls_;
}

std::string encode_frame(std::string_view payload) {
  auto n = static_cast<std::uint32_t>(payload.size());
  std::string frame;
  frame.reserve(4 + payload.size());
  frame.push_back(static_cast<char>((n >> 24) & 0xff));
  frame.push_back(static_cast<char>((n >> 16) & 0xff));
  frame.push_back(static_cast<char>((n >> 8) & 0xff));
  frame.push_back(static_cast<char>(n & 0xff));
  frame.append(payload);
  return frame;
}

void FrameDecoder::feed(std::string_view bytes) { buffer_.append(bytes); }

std::optional<std::string> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  auto byte = [&](int i) { return static_cast<std::uint32_t>(static_cast<unsigned char>(buffer_[i])); };
  std::uint32_t n = (byte(0) << 24) | (byte(1) << 16) | (byte(2) << 8) | byte(3);
  if (n > kMaxFrameBytes) throw Error(ErrorCode::InvalidArgument, "frame of " + std::to_string(n) + " bytes");
  if (buffer_.size() < 4 + static_cast<std::size_t>(n)) return std::nullopt;
  std::string payload = buffer_.substr(4, n);
  buffer_.erase(0, 4 + static_cast<std::size_t>(n));
  return payload;
}

std::string encode_request(const ExecutionRequest& request) {
  json j = {{"id", request.request_id},
            {"source", request.source},
            {"entry", request.entry_point},
            {"timeout_s", request.timeout_s}};
  return j.dump();
}

ExecutionOutcome decode_reply(std::string_view payload) {
  ExecutionOutcome outcome;
  try {
    json j = json::parse(payload);
    outcome.request_id = j.at("id").get<std::string>();
    auto status = exec_status_from_string(j.at("status").get<std::string>());
    if (!status) throw std::runtime_error("unknown status");
    outcome.status = *status;
    if (j.contains("stderr") && j["stderr"].is_string()) outcome.stderr_excerpt = j["stderr"].get<std::string>();
    if (j.contains("duration_s") && j["duration_s"].is_number()) outcome.duration_s = j["duration_s"].get<double>();
    if (outcome.status == ExecStatus::Ok) {
      if (!j.contains("answer") || !j["answer"].is_string()) throw std::runtime_error("ok reply without answer");
      outcome.answer_text = j["answer"].get<std::string>();
    }
  } catch (const std::exception& e) {
    outcome.status = ExecStatus::ProtocolError;
    outcome.answer_text.reset();
    outcome.stderr_excerpt = std::string("malformed reply: ") + e.what();
  }
  return outcome;
}

}  // namespace mathlearner
