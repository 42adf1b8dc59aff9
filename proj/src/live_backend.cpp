#include "mathlearner/live_backend.hpp"

#include <cstdlib>

#include "httplib.h"
#include "json.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

using nlohmann::json;

namespace {

struct Endpoint {
  std::string scheme_host_port;
  std::string path_prefix;
};

Endpoint split_base_url(const std::string& base_url) {
  auto scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) {
    throw Error(ErrorCode::InvalidArgument, "base_url needs a scheme: " + base_url);
  }
  auto path_start = base_url.find('/', scheme_end + 3);
  Endpoint ep;
  if (path_start == std::string::npos) {
    ep.scheme_host_port = base_url;
  } else {
    ep.scheme_host_port = base_url.substr(0, path_start);
    ep.path_prefix = base_url.substr(path_start);
    while (!ep.path_prefix.empty() && ep.path_prefix.back() == '/') ep.path_prefix.pop_back();
  }
  return ep;
}

json post_json(const LiveBackendOptions& options, const std::string& path, const json& body) {
  Endpoint ep = split_base_url(options.base_url);
  httplib::Client client(ep.scheme_host_port);
  client.set_connection_timeout(options.timeout_s, 0);
  client.set_read_timeout(options.timeout_s, 0);
  client.set_write_timeout(options.timeout_s, 0);
  httplib::Headers headers;
  if (!options.api_key.empty()) headers.emplace("Authorization", "Bearer " + options.api_key);

  auto res = client.Post(ep.path_prefix + path, headers, body.dump(), "application/json");
  if (!res) {
    throw Error(ErrorCode::BackendUnavailable, "transport error: " + httplib::to_string(res.error()));
  }
  if (res->status == 429) throw Error(ErrorCode::RateLimited, "HTTP 429 from " + path);
  if (res->status < 200 || res->status >= 300) {
    throw Error(ErrorCode::BackendUnavailable, "HTTP " + std::to_string(res->status) + " from " + path);
  }
  try {
    return json::parse(res->body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BackendUnavailable, std::string("malformed reply: ") + e.what());
  }
}

}  // namespace

std::string api_key_from_environment() {
  const char* key = std::getenv(kApiKeyEnv);
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorCode::BackendUnavailable, std::string(kApiKeyEnv) + " is not set");
  }
  return key;
}

LiveBackend::LiveBackend(LiveBackendOptions options) : options_(std::move(options)) {}

CompletionResult LiveBackend::complete(const CompletionRequest& request) {
  json body = {{"model", options_.model},
               {"temperature", options_.temperature},
               {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  json reply = post_json(options_, "/chat/completions", body);
  CompletionResult result;
  result.backend_id = id();
  try {
    result.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::BackendUnavailable, "reply has no choices[0].message.content");
  }
  if (auto usage = reply.find("usage"); usage != reply.end() && usage->is_object()) {
    result.token_usage = TokenUsage{usage->value("prompt_tokens", 0), usage->value("completion_tokens", 0)};
  }
  return result;
}

LiveEmbedder::LiveEmbedder(LiveBackendOptions options, int dimension)
    : options_(std::move(options)), dimension_(dimension) {}

EmbeddingVector LiveEmbedder::embed(std::string_view text) {
  json body = {{"model", options_.embedding_model}, {"input", std::string(text)}};
  if (dimension_ > 0) body["dimensions"] = dimension_;
  json reply = post_json(options_, "/embeddings", body);
  EmbeddingVector out;
  try {
    out.values = reply.at("data").at(0).at("embedding").get<std::vector<float>>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::BackendUnavailable, "reply has no data[0].embedding");
  }
  if (static_cast<int>(out.values.size()) != dimension_) {
    throw Error(ErrorCode::DimensionMismatch, "embedding has " + std::to_string(out.values.size()) +
                                                  " components, expected " + std::to_string(dimension_));
  }
  normalize(out.values);
  return out;
}

}  // namespace mathlearner
