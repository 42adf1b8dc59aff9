#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mathlearner {

struct EmbeddingVector {
  std::vector<float> values;

  std::size_t dimension() const { return values.size(); }
  double norm() const;
  bool operator==(const EmbeddingVector&) const = default;
};

/// 64-bit FNV-1a over the bytes of text.
std::uint64_t fnv1a64(std::string_view text);

/// Lowercases ASCII and splits on anything that is not [a-z0-9].
std::vector<std::string> hash_tokens(std::string_view text);

/// Signed feature hashing: each token adds +1 (top hash bit clear) or -1 to
/// bucket hash % dimension; the sum is L2-normalized, an all-zero sum stays zero.
EmbeddingVector hash_embed(std::string_view text, int dimension);

/// In-place L2 normalization; zero vectors are left untouched.
void normalize(std::span<float> values);

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual EmbeddingVector embed(std::string_view text) = 0;
  virtual std::string id() const = 0;
  virtual int dimension() const = 0;
};

class HashEmbedder final : public Embedder {
 public:
  explicit HashEmbedder(int dimension);

  EmbeddingVector embed(std::string_view text) override { return hash_embed(text, dimension_); }
  std::string id() const override { return "fnv1a-sign-hash-v1"; }
  int dimension() const override { return dimension_; }

 private:
  int dimension_;
};

}  // namespace mathlearner
