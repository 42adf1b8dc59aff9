#pragma once

#include <string>

#include "mathlearner/embedding.hpp"
#include "mathlearner/gateway.hpp"

namespace mathlearner {

inline constexpr const char* kApiKeyEnv = "MATHLEARNER_API_KEY";

struct LiveBackendOptions {
  /// Scheme, host, optional port and path prefix, e.g. "https://api.openai.com/v1".
  std::string base_url = "https://api.openai.com/v1";
  std::string model = "gpt-4";
  std::string embedding_model = "text-embedding-3-small";
  double temperature = 0.0;
  int timeout_s = 120;
  std::string api_key;
};

/// Reads the API key from MATHLEARNER_API_KEY; throws BackendUnavailable if unset.
std::string api_key_from_environment();

/// OpenAI-compatible chat-completions client. 429 maps to RateLimited,
/// transport failures and other non-2xx replies to BackendUnavailable.
class LiveBackend final : public CompletionBackend {
 public:
  explicit LiveBackend(LiveBackendOptions options);

  CompletionResult complete(const CompletionRequest& request) override;
  std::string id() const override { return "live:" + options_.model; }

 private:
  LiveBackendOptions options_;
};

/// OpenAI-compatible embeddings client; output is L2-normalized and must
/// have the configured dimension.
class LiveEmbedder final : public Embedder {
 public:
  LiveEmbedder(LiveBackendOptions options, int dimension);

  EmbeddingVector embed(std::string_view text) override;
  std::string id() const override { return "live:" + options_.embedding_model; }
  int dimension() const override { return dimension_; }

 private:
  LiveBackendOptions options_;
  int dimension_;
};

}  // namespace mathlearner
