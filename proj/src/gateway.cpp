#include "mathlearner/gateway.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

std::string_view to_string(Role role) {
  switch (role) {
    case Role::Decompose: return "decompose";
    case Role::Sketch: return "sketch";
    case Role::Synthesize: return "synthesize";
    case Role::Repair: return "repair";
    case Role::Featurize: return "featurize";
    case Role::AugmentedSolve: return "augmented_solve";
    case Role::DirectSolve: return "direct_solve";
  }
  return "unknown";
}

Role role_from_string(std::string_view name) {
  for (Role role : kAllRoles) {
    if (to_string(role) == name) return role;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown prompt role '" + std::string(name) + "'");
}

namespace {

bool placeholder_start(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }
bool placeholder_char(char c) { return placeholder_start(c) || (c >= '0' && c <= '9'); }

// Calls on_text for literal spans and on_name for each {name} occurrence.
template <typename OnText, typename OnName>
void scan_template(std::string_view text, OnText on_text, OnName on_name) {
  std::size_t literal_start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{' || i + 1 >= text.size() || !placeholder_start(text[i + 1])) continue;
    std::size_t j = i + 1;
    while (j < text.size() && placeholder_char(text[j])) ++j;
    if (j >= text.size() || text[j] != '}') continue;
    on_text(text.substr(literal_start, i - literal_start));
    on_name(text.substr(i + 1, j - i - 1));
    literal_start = j + 1;
    i = j;
  }
  on_text(text.substr(literal_start));
}

}  // namespace

std::vector<std::string> PromptTemplate::placeholders() const {
  std::vector<std::string> names;
  scan_template(
      text, [](std::string_view) {},
      [&](std::string_view name) {
        for (const auto& n : names) {
          if (n == name) return;
        }
        names.emplace_back(name);
      });
  return names;
}

std::string PromptTemplate::render(const Bindings& bindings) const {
  std::string missing;
  for (const auto& name : placeholders()) {
    if (!bindings.contains(name)) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty()) {
    throw Error(ErrorCode::UnboundPlaceholder, "template '" + this->name + "' needs: " + missing);
  }
  std::string out;
  scan_template(
      text, [&](std::string_view literal) { out.append(literal); },
      [&](std::string_view n) { out += bindings.at(std::string(n)); });
  return out;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
  TemplateSet set;
  for (Role role : kAllRoles) {
    auto path = dir / (std::string(to_string(role)) + ".txt");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::InvalidArgument, "missing prompt template " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    set.set({std::string(to_string(role)), role, buffer.str()});
  }
  return set;
}

void TemplateSet::set(PromptTemplate tmpl) {
  Role role = tmpl.role;
  templates_[role] = std::move(tmpl);
}

const PromptTemplate& TemplateSet::get(Role role) const {
  auto it = templates_.find(role);
  if (it == templates_.end()) {
    throw Error(ErrorCode::InvalidArgument, "no template for role " + std::string(to_string(role)));
  }
  return it->second;
}

ScriptedBackend::ScriptedBackend(Script script) {
  for (auto& [role, by_key] : script) {
    for (auto& [key, responses] : by_key) {
      queues_[role][key] = std::deque<std::string>(responses.begin(), responses.end());
    }
  }
}

ScriptedBackend ScriptedBackend::from_json(std::string_view json_text) {
  auto doc = nlohmann::json::parse(json_text);
  Script script;
  for (const auto& [role_name, by_key] : doc.items()) {
    Role role = role_from_string(role_name);
    for (const auto& [key, responses] : by_key.items()) {
      script[role][key] = responses.get<std::vector<std::string>>();
    }
  }
  return ScriptedBackend(std::move(script));
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::InvalidArgument, "cannot read script " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return from_json(buffer.str());
}

CompletionResult ScriptedBackend::complete(const CompletionRequest& request) {
  std::lock_guard lock(mutex_);
  log_.push_back(request);
  auto describe = [&] { return std::string(to_string(request.role)) + "/" + request.key; };
  auto role_it = queues_.find(request.role);
  if (role_it == queues_.end()) throw Error(ErrorCode::UnscriptedRequest, describe());
  auto key_it = role_it->second.find(request.key);
  if (key_it == role_it->second.end()) throw Error(ErrorCode::UnscriptedRequest, describe());
  if (key_it->second.empty()) throw Error(ErrorCode::ScriptExhausted, describe());
  CompletionResult result{std::move(key_it->second.front()), id(), std::nullopt};
  key_it->second.pop_front();
  return result;
}

std::vector<CompletionRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t ScriptedBackend::remaining(Role role, const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto role_it = queues_.find(role);
  if (role_it == queues_.end()) return 0;
  auto key_it = role_it->second.find(key);
  return key_it == role_it->second.end() ? 0 : key_it->second.size();
}

Gateway::Gateway(std::shared_ptr<CompletionBackend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options) {
  if (!backend_) throw Error(ErrorCode::InvalidArgument, "gateway needs a backend");
  if (options_.max_in_flight < 1) options_.max_in_flight = 1;
}

void Gateway::acquire_slot() {
  std::unique_lock lock(mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
  peak_in_flight_ = std::max(peak_in_flight_, in_flight_);
}

void Gateway::release_slot() {
  {
    std::lock_guard lock(mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void Gateway::wait_for_budget() {
  if (options_.requests_per_window <= 0) return;
  std::unique_lock lock(mutex_);
  for (;;) {
    auto now = std::chrono::steady_clock::now();
    while (!sent_.empty() && now - sent_.front() >= options_.budget_window) sent_.pop_front();
    if (static_cast<int>(sent_.size()) < options_.requests_per_window) {
      sent_.push_back(now);
      return;
    }
    auto wake = sent_.front() + options_.budget_window;
    lock.unlock();
    std::this_thread::sleep_until(wake);
    lock.lock();
  }
}

int Gateway::peak_in_flight() const {
  std::lock_guard lock(mutex_);
  return peak_in_flight_;
}

CompletionResult Gateway::complete(const PromptTemplate& tmpl, const Bindings& bindings, const std::string& key,
                                   std::string_view feedback) {
  CompletionRequest request{tmpl.role, key, tmpl.render(bindings)};
  if (!feedback.empty()) {
    request.prompt += "\n\n";
    request.prompt += feedback;
  }

  for (int attempt = 0;; ++attempt) {
    wait_for_budget();
    acquire_slot();
    CompletionResult result;
    try {
      result = backend_->complete(request);
    } catch (const Error& e) {
      release_slot();
      bool transient = e.code() == ErrorCode::BackendUnavailable || e.code() == ErrorCode::RateLimited;
      if (!transient || attempt >= options_.max_retries) throw;
      std::this_thread::sleep_for(options_.backoff_base * (1LL << attempt));
      continue;
    } catch (...) {
      release_slot();
      throw;
    }
    release_slot();
    if (result.text.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::EmptyCompletion, std::string(to_string(tmpl.role)) + "/" + key);
    }
    return result;
  }
}

}  // namespace mathlearner
