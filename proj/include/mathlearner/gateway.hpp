#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mathlearner {

enum class Role { Decompose, Sketch, Synthesize, Repair, Featurize, AugmentedSolve, DirectSolve };

inline constexpr Role kAllRoles[] = {Role::Decompose, Role::Sketch,         Role::Synthesize, Role::Repair,
                                     Role::Featurize, Role::AugmentedSolve, Role::DirectSolve};

std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

using Bindings = std::map<std::string, std::string>;

/// Template text with `{name}` placeholders; name is [a-z_][a-z0-9_]*. Other
/// brace usage is left alone. Substituted values are never re-scanned.
struct PromptTemplate {
  std::string name;
  Role role = Role::DirectSolve;
  std::string text;

  std::vector<std::string> placeholders() const;
  /// Throws Error(UnboundPlaceholder) listing every missing name.
  std::string render(const Bindings& bindings) const;
};

/// One template per role, loaded from `<dir>/<role>.txt`.
class TemplateSet {
 public:
  static TemplateSet load_directory(const std::filesystem::path& dir);

  void set(PromptTemplate tmpl);
  const PromptTemplate& get(Role role) const;

 private:
  std::map<Role, PromptTemplate> templates_;
};

struct TokenUsage {
  int prompt_tokens = 0;
  int completion_tokens = 0;
};

struct CompletionResult {
  std::string text;
  std::string backend_id;
  std::optional<TokenUsage> token_usage;
};

struct CompletionRequest {
  Role role = Role::DirectSolve;
  /// Correlation key, normally the problem id. Scripted backends dispatch on it.
  std::string key;
  std::string prompt;
};

/// Backends throw Error(BackendUnavailable) or Error(RateLimited) for
/// transient failures; the Gateway retries those.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  virtual std::string id() const = 0;
};

/// Test double: per (role, key) an ordered queue of responses, popped in order.
class ScriptedBackend final : public CompletionBackend {
 public:
  using Script = std::map<Role, std::map<std::string, std::vector<std::string>>>;

  explicit ScriptedBackend(Script script);
  ScriptedBackend(ScriptedBackend&& other) noexcept
      : queues_(std::move(other.queues_)), log_(std::move(other.log_)) {}
  /// JSON object: {"<role>": {"<key>": ["response", ...]}}.
  static ScriptedBackend from_json(std::string_view json_text);
  static ScriptedBackend from_file(const std::filesystem::path& path);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string id() const override { return "scripted"; }

  std::vector<CompletionRequest> requests() const;
  std::size_t remaining(Role role, const std::string& key) const;

 private:
  mutable std::mutex mutex_;
  std::map<Role, std::map<std::string, std::deque<std::string>>> queues_;
  std::vector<CompletionRequest> log_;
};

struct GatewayOptions {
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  int max_in_flight = 4;
  /// 0 disables the budget.
  int requests_per_window = 0;
  std::chrono::milliseconds budget_window{60'000};
};

/// Shareable front door to a completion backend: renders templates, bounds
/// concurrency and request rate, retries transient failures with exponential
/// backoff.
class Gateway {
 public:
  Gateway(std::shared_ptr<CompletionBackend> backend, GatewayOptions options = {});

  /// `feedback`, when non-empty, is appended to the rendered prompt.
  CompletionResult complete(const PromptTemplate& tmpl, const Bindings& bindings, const std::string& key,
                            std::string_view feedback = {});

  std::string backend_id() const { return backend_->id(); }
  int peak_in_flight() const;

 private:
  void acquire_slot();
  void release_slot();
  void wait_for_budget();

  std::shared_ptr<CompletionBackend> backend_;
  GatewayOptions options_;
  mutable std::mutex mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;
  int peak_in_flight_ = 0;
  std::deque<std::chrono::steady_clock::time_point> sent_;
};

}  // namespace mathlearner
