#include "mathlearner/embedding.hpp"

#include <cmath>

#include "mathlearner/error.hpp"

namespace mathlearner {

double EmbeddingVector::norm() const {
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v) * v;
  return std::sqrt(sum);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::vector<std::string> hash_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if ((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9')) {
      current.push_back(ch);
    } else if (ch >= 'A' && ch <= 'Z') {
      current.push_back(static_cast<char>(ch - 'A' + 'a'));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

void normalize(std::span<float> values) {
  double sum = 0.0;
  for (float v : values) sum += static_cast<double>(v) * v;
  if (sum == 0.0) return;
  double inv = 1.0 / std::sqrt(sum);
  for (float& v : values) v = static_cast<float>(v * inv);
}

EmbeddingVector hash_embed(std::string_view text, int dimension) {
  if (dimension < 2) throw Error(ErrorCode::InvalidArgument, "hash_embed dimension must be >= 2");
  // Integer accumulation keeps the result independent of summation order.
  std::vector<std::int64_t> buckets(static_cast<std::size_t>(dimension), 0);
  for (const auto& token : hash_tokens(text)) {
    std::uint64_t h = fnv1a64(token);
    buckets[h % static_cast<std::uint64_t>(dimension)] += (h >> 63) ? -1 : 1;
  }
  double sum = 0.0;
  for (auto b : buckets) sum += static_cast<double>(b) * static_cast<double>(b);
  EmbeddingVector out;
  out.values.resize(buckets.size(), 0.0f);
  if (sum == 0.0) return out;
  double inv = 1.0 / std::sqrt(sum);
  for (std::size_t i = 0; i < buckets.size(); ++i) {
    out.values[i] = static_cast<float>(static_cast<double>(buckets[i]) * inv);
  }
  return out;
}

HashEmbedder::HashEmbedder(int dimension) : dimension_(dimension) {
  if (dimension < 2) throw Error(ErrorCode::InvalidArgument, "hash embedder dimension must be >= 2");
}

}  // namespace mathlearner
