#include "mathlearner/feature_store.hpp"

#include <fcntl.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <mutex>
#include <shared_mutex>
#include <sstream>
#include <unordered_set>

#include "json.hpp"
#include "mathlearner/error.hpp"

namespace mathlearner {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kRecordsFile = "records.jsonl";

std::string dump(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

json sketch_to_json(const SolutionSketch& sketch) {
  json functions = json::array();
  for (const auto& f : sketch.functions) {
    functions.push_back({{"name", f.name},
                         {"purpose", f.purpose},
                         {"inputs", f.inputs},
                         {"output", f.output},
                         {"dependencies", f.dependencies}});
  }
  return {{"steps", sketch.steps}, {"functions", functions}};
}

SolutionSketch sketch_from_json(const json& j) {
  SolutionSketch sketch;
  sketch.steps = j.at("steps").get<std::vector<std::string>>();
  for (const auto& f : j.at("functions")) {
    sketch.functions.push_back({f.at("name").get<std::string>(), f.at("purpose").get<std::string>(),
                                f.at("inputs").get<std::vector<std::string>>(), f.at("output").get<std::string>(),
                                f.at("dependencies").get<std::vector<std::string>>()});
  }
  return sketch;
}

json record_body(const LearnedRecord& r) {
  return {{"record_id", r.record_id},
          {"problem_id", r.problem_id},
          {"created_at", r.created_at},
          {"features", {{"category", r.feature_set.category_feature}, {"steps", r.feature_set.step_features}}},
          {"category_vector", encode_vector(r.category_vector)},
          {"steps_vector", encode_vector(r.steps_vector)},
          {"program",
           {{"source", r.program.source},
            {"entry_point", r.program.entry_point},
            {"verified", r.program.verified},
            {"attempts", r.program.attempts},
            {"sketch", sketch_to_json(r.program.sketch)}}}};
}

json manifest_to_json(const StoreManifest& m) {
  return {{"format_version", m.format_version},
          {"dimension", m.dimension},
          {"embedder_id", m.embedder_id},
          {"record_count", m.record_count},
          {"checksum", m.checksum}};
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::StorageFailure, "cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void fsync_path(const fs::path& path) {
  int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
  if (fd >= 0) {
    ::fsync(fd);
    ::close(fd);
  }
}

// Write to a temporary sibling, flush to disk, then rename over the target.
void write_atomically(const fs::path& path, std::string_view content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::StorageFailure, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::StorageFailure, "short write to " + tmp.string());
  }
  fsync_path(tmp);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "rename " + tmp.string() + ": " + ec.message());
}

StoreManifest read_manifest(const fs::path& dir) {
  StoreManifest m;
  try {
    json j = json::parse(read_text(dir / kManifestFile));
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kStoreFormatVersion) {
      throw Error(ErrorCode::FormatVersionUnsupported, "store format_version " + std::to_string(m.format_version));
    }
    m.dimension = j.at("dimension").get<int>();
    m.embedder_id = j.at("embedder_id").get<std::string>();
    m.record_count = j.at("record_count").get<std::size_t>();
    m.checksum = j.value("checksum", "crc32");
  } catch (const json::exception& e) {
    throw Error(ErrorCode::StorageFailure, std::string("malformed manifest: ") + e.what());
  }
  if (m.checksum != "crc32") throw Error(ErrorCode::FormatVersionUnsupported, "checksum algorithm " + m.checksum);
  return m;
}

}  // namespace

std::string record_id_for(std::string_view problem_id) {
  char buf[18];
  std::snprintf(buf, sizeof buf, "r%016llx", static_cast<unsigned long long>(fnv1a64(problem_id)));
  return buf;
}

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error(ErrorCode::DimensionMismatch,
                std::to_string(a.dimension()) + " vs " + std::to_string(b.dimension()));
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    double x = a.values[i], y = b.values[i];
    dot += x * y;
    na += x * x;
    nb += y * y;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::string join_steps(const std::vector<std::string>& steps) {
  std::string out;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    if (i) out += '\n';
    out += steps[i];
  }
  return out;
}

QueryVectors embed_features(Embedder& embedder, const FeatureSet& features) {
  auto embed_or_zero = [&](const std::string& text) {
    if (text.empty()) return EmbeddingVector{std::vector<float>(static_cast<std::size_t>(embedder.dimension()), 0.0f)};
    return embedder.embed(text);
  };
  return {embed_or_zero(features.category_feature), embed_or_zero(join_steps(features.step_features))};
}

LearnedRecord make_record(std::string problem_id, FeatureSet features, SolutionProgram program, Embedder& embedder,
                          std::int64_t created_at) {
  LearnedRecord record;
  record.record_id = record_id_for(problem_id);
  record.problem_id = std::move(problem_id);
  auto vectors = embed_features(embedder, features);
  record.category_vector = std::move(vectors.category);
  record.steps_vector = std::move(vectors.steps);
  record.feature_set = std::move(features);
  record.program = std::move(program);
  record.created_at = created_at;
  record.embedder_id = embedder.id();
  return record;
}

std::string base64_encode(std::string_view bytes) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) | (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                      static_cast<unsigned char>(bytes[i + 2]);
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += kAlphabet[(n >> 6) & 63];
    out += kAlphabet[n & 63];
  }
  if (std::size_t rest = bytes.size() - i; rest > 0) {
    std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    if (rest == 2) n |= static_cast<unsigned char>(bytes[i + 1]) << 8;
    out += kAlphabet[(n >> 18) & 63];
    out += kAlphabet[(n >> 12) & 63];
    out += rest == 2 ? kAlphabet[(n >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (text.size() % 4 != 0) throw Error(ErrorCode::StorageFailure, "base64 length not a multiple of 4");
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    std::uint32_t n = 0;
    for (std::size_t j = 0; j < 4; ++j) {
      char c = text[i + j];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        ++pad;
        n <<= 6;
        continue;
      }
      int v = value(c);
      if (v < 0 || pad > 0) throw Error(ErrorCode::StorageFailure, "invalid base64");
      n = (n << 6) | static_cast<std::uint32_t>(v);
    }
    out += static_cast<char>((n >> 16) & 0xff);
    if (pad < 2) out += static_cast<char>((n >> 8) & 0xff);
    if (pad < 1) out += static_cast<char>(n & 0xff);
  }
  return out;
}

std::string encode_vector(const EmbeddingVector& v) {
  std::string bytes;
  bytes.reserve(v.values.size() * 4);
  for (float f : v.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, sizeof bits);
    for (int shift = 0; shift < 32; shift += 8) bytes += static_cast<char>((bits >> shift) & 0xff);
  }
  return base64_encode(bytes);
}

EmbeddingVector decode_vector(std::string_view base64) {
  std::string bytes = base64_decode(base64);
  if (bytes.size() % 4 != 0) throw Error(ErrorCode::StorageFailure, "vector byte length not a multiple of 4");
  EmbeddingVector v;
  v.values.resize(bytes.size() / 4);
  for (std::size_t i = 0; i < v.values.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
    std::memcpy(&v.values[i], &bits, sizeof bits);
  }
  return v;
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

std::string serialize_record(const LearnedRecord& record) {
  json body = record_body(record);
  body["crc32"] = hex32(crc32_of(dump(body)));
  return dump(body);
}

LearnedRecord parse_record_line(std::string_view line) {
  json body;
  try {
    body = json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::StorageFailure, std::string("unparseable record line: ") + e.what());
  }
  if (!body.is_object() || !body.contains("crc32") || !body["crc32"].is_string()) {
    throw Error(ErrorCode::ChecksumMismatch, "record line lacks crc32");
  }
  std::string stored = body["crc32"].get<std::string>();
  body.erase("crc32");
  if (hex32(crc32_of(dump(body))) != stored) {
    throw Error(ErrorCode::ChecksumMismatch, "record crc32 mismatch");
  }
  try {
    LearnedRecord r;
    r.record_id = body.at("record_id").get<std::string>();
    r.problem_id = body.at("problem_id").get<std::string>();
    r.created_at = body.at("created_at").get<std::int64_t>();
    r.feature_set.category_feature = body.at("features").at("category").get<std::string>();
    r.feature_set.step_features = body.at("features").at("steps").get<std::vector<std::string>>();
    r.category_vector = decode_vector(body.at("category_vector").get<std::string>());
    r.steps_vector = decode_vector(body.at("steps_vector").get<std::string>());
    const auto& p = body.at("program");
    r.program.source = p.at("source").get<std::string>();
    r.program.entry_point = p.at("entry_point").get<std::string>();
    r.program.verified = p.at("verified").get<bool>();
    r.program.attempts = p.at("attempts").get<int>();
    r.program.sketch = sketch_from_json(p.at("sketch"));
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::StorageFailure, std::string("malformed record: ") + e.what());
  }
}

struct FeatureStore::Impl {
  mutable std::shared_mutex mutex;
  StoreManifest manifest;
  std::vector<LearnedRecord> records;
  std::unordered_set<std::string> ids;
  std::unordered_set<std::string> problems;
  // Row-major copies of the vectors for the scan loop, plus their norms.
  std::vector<float> category_rows;
  std::vector<float> steps_rows;
  std::vector<double> category_norms;
  std::vector<double> steps_norms;
  std::optional<fs::path> attached;

  void validate(const LearnedRecord& r) const {
    auto d = static_cast<std::size_t>(manifest.dimension);
    if (r.category_vector.dimension() != d || r.steps_vector.dimension() != d) {
      throw Error(ErrorCode::DimensionMismatch, "record " + r.record_id + " vectors have dimension " +
                                                    std::to_string(r.category_vector.dimension()) + "/" +
                                                    std::to_string(r.steps_vector.dimension()) + ", store expects " +
                                                    std::to_string(d));
    }
    if (!r.embedder_id.empty() && r.embedder_id != manifest.embedder_id) {
      throw Error(ErrorCode::EmbedderMismatch, r.embedder_id + " vs " + manifest.embedder_id);
    }
    if (!r.program.verified) throw Error(ErrorCode::InvalidArgument, "record " + r.record_id + " is not verified");
    if (ids.contains(r.record_id)) throw Error(ErrorCode::DuplicateRecord, r.record_id);
  }

  void append(LearnedRecord r) {
    category_rows.insert(category_rows.end(), r.category_vector.values.begin(), r.category_vector.values.end());
    steps_rows.insert(steps_rows.end(), r.steps_vector.values.begin(), r.steps_vector.values.end());
    category_norms.push_back(r.category_vector.norm());
    steps_norms.push_back(r.steps_vector.norm());
    ids.insert(r.record_id);
    problems.insert(r.problem_id);
    records.push_back(std::move(r));
    manifest.record_count = records.size();
  }

  static std::unique_ptr<Impl> read_dir(const fs::path& dir) {
    auto impl = std::make_unique<Impl>();
    impl->manifest = read_manifest(dir);
    std::size_t declared = impl->manifest.record_count;
    impl->manifest.record_count = 0;
    std::string text = read_text(dir / kRecordsFile);
    if (!text.empty() && text.back() != '\n') {
      throw Error(ErrorCode::StorageFailure, "records file does not end with a newline (truncated?)");
    }
    std::size_t pos = 0;
    while (pos < text.size()) {
      auto nl = text.find('\n', pos);
      std::string_view line(text.data() + pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      LearnedRecord r = parse_record_line(line);
      r.embedder_id = impl->manifest.embedder_id;
      impl->validate(r);
      impl->append(std::move(r));
    }
    if (impl->records.size() != declared) {
      throw Error(ErrorCode::StorageFailure, "manifest declares " + std::to_string(declared) + " records, found " +
                                                 std::to_string(impl->records.size()));
    }
    return impl;
  }
};

FeatureStore::FeatureStore(int dimension, std::string embedder_id) : impl_(std::make_unique<Impl>()) {
  if (dimension < 1) throw Error(ErrorCode::InvalidArgument, "store dimension must be positive");
  impl_->manifest.dimension = dimension;
  impl_->manifest.embedder_id = std::move(embedder_id);
}

FeatureStore::~FeatureStore() = default;
FeatureStore::FeatureStore(FeatureStore&&) noexcept = default;
FeatureStore& FeatureStore::operator=(FeatureStore&&) noexcept = default;

FeatureStore FeatureStore::load(const fs::path& dir) {
  FeatureStore store(1, "");
  store.impl_ = Impl::read_dir(dir);
  return store;
}

FeatureStore FeatureStore::open(const fs::path& dir, int dimension, const std::string& embedder_id) {
  if (fs::exists(dir / kManifestFile)) {
    FeatureStore store = load(dir);
    if (store.dimension() != dimension) {
      throw Error(ErrorCode::DimensionMismatch, "store at " + dir.string() + " has dimension " +
                                                    std::to_string(store.dimension()));
    }
    if (store.embedder_id() != embedder_id) {
      throw Error(ErrorCode::EmbedderMismatch, "store at " + dir.string() + " uses " + store.embedder_id());
    }
    store.impl_->attached = dir;
    return store;
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());
  FeatureStore store(dimension, embedder_id);
  store.persist(dir);
  store.impl_->attached = dir;
  return store;
}

void FeatureStore::persist(const fs::path& dir) const {
  std::shared_lock lock(impl_->mutex);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::StorageFailure, "cannot create " + dir.string() + ": " + ec.message());
  std::string lines;
  for (const auto& r : impl_->records) {
    lines += serialize_record(r);
    lines += '\n';
  }
  write_atomically(dir / kRecordsFile, lines);
  write_atomically(dir / kManifestFile, manifest_to_json(impl_->manifest).dump(2) + "\n");
}

std::string FeatureStore::put(LearnedRecord record) {
  std::unique_lock lock(impl_->mutex);
  if (record.embedder_id.empty()) record.embedder_id = impl_->manifest.embedder_id;
  impl_->validate(record);
  if (impl_->attached) {
    const fs::path& dir = *impl_->attached;
    std::string line = serialize_record(record) + "\n";
    int fd = ::open((dir / kRecordsFile).c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorCode::StorageFailure, "open records file: " + std::string(std::strerror(errno)));
    bool ok = ::write(fd, line.data(), line.size()) == static_cast<ssize_t>(line.size()) && ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw Error(ErrorCode::StorageFailure, "append to records file failed");
    StoreManifest next = impl_->manifest;
    next.record_count += 1;
    write_atomically(dir / kManifestFile, manifest_to_json(next).dump(2) + "\n");
  }
  std::string id = record.record_id;
  impl_->append(std::move(record));
  return id;
}

std::vector<SimilarityHit> FeatureStore::query(const QueryVectors& q, int k, double tau, double alpha) const {
  if (k < 1) throw Error(ErrorCode::InvalidArgument, "k must be positive");
  std::shared_lock lock(impl_->mutex);
  const auto d = static_cast<std::size_t>(impl_->manifest.dimension);
  if (q.category.dimension() != d || q.steps.dimension() != d) {
    throw Error(ErrorCode::DimensionMismatch, "query vectors do not match store dimension " + std::to_string(d));
  }
  const double qc_norm = q.category.norm();
  const double qs_norm = q.steps.norm();
  const float* qc = q.category.values.data();
  const float* qs = q.steps.values.data();

  std::vector<SimilarityHit> hits;
  const std::size_t n = impl_->records.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float* rc = impl_->category_rows.data() + i * d;
    const float* rs = impl_->steps_rows.data() + i * d;
    double dc = 0.0, ds = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      dc += static_cast<double>(qc[j]) * rc[j];
      ds += static_cast<double>(qs[j]) * rs[j];
    }
    double cn = qc_norm * impl_->category_norms[i];
    double sn = qs_norm * impl_->steps_norms[i];
    double cs = cn == 0.0 ? 0.0 : dc / cn;
    double ss = sn == 0.0 ? 0.0 : ds / sn;
    double score = alpha * cs + (1.0 - alpha) * ss;
    if (score >= tau) hits.push_back({impl_->records[i].record_id, score, cs, ss});
  }
  auto better = [](const SimilarityHit& a, const SimilarityHit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.record_id < b.record_id;
  };
  std::size_t keep = std::min(hits.size(), static_cast<std::size_t>(k));
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), better);
  hits.resize(keep);
  return hits;
}

std::optional<LearnedRecord> FeatureStore::get(std::string_view record_id) const {
  std::shared_lock lock(impl_->mutex);
  for (const auto& r : impl_->records) {
    if (r.record_id == record_id) return r;
  }
  return std::nullopt;
}

bool FeatureStore::contains_problem(std::string_view problem_id) const {
  std::shared_lock lock(impl_->mutex);
  return impl_->problems.contains(std::string(problem_id));
}

std::vector<LearnedRecord> FeatureStore::records() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->records;
}

StoreManifest FeatureStore::manifest() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->manifest;
}

std::size_t FeatureStore::size() const {
  std::shared_lock lock(impl_->mutex);
  return impl_->records.size();
}

int FeatureStore::dimension() const { return impl_->manifest.dimension; }
const std::string& FeatureStore::embedder_id() const { return impl_->manifest.embedder_id; }

}  // namespace mathlearner
