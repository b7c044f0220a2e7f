#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class FaceVisibility { included, restricted, unknown };
enum class RangeBand { close, long_range, unknown };
enum class Platform { ground, uav, unknown };

inline const char* to_string(FaceVisibility v) {
  switch (v) {
    case FaceVisibility::included: return "included";
    case FaceVisibility::restricted: return "restricted";
    default: return "unknown";
  }
}

inline const char* to_string(RangeBand v) {
  switch (v) {
    case RangeBand::close: return "close";
    case RangeBand::long_range: return "long_range";
    default: return "unknown";
  }
}

inline const char* to_string(Platform v) {
  switch (v) {
    case Platform::ground: return "ground";
    case Platform::uav: return "uav";
    default: return "unknown";
  }
}

inline FaceVisibility face_visibility_from_string(const std::string& s) {
  if (s == "included") return FaceVisibility::included;
  if (s == "restricted") return FaceVisibility::restricted;
  if (s == "unknown") return FaceVisibility::unknown;
  fail("unknown face_visibility value: \"" + s + "\"");
}

inline RangeBand range_band_from_string(const std::string& s) {
  if (s == "close") return RangeBand::close;
  if (s == "long_range") return RangeBand::long_range;
  if (s == "unknown") return RangeBand::unknown;
  fail("unknown range_band value: \"" + s + "\"");
}

inline Platform platform_from_string(const std::string& s) {
  if (s == "ground") return Platform::ground;
  if (s == "uav") return Platform::uav;
  if (s == "unknown") return Platform::unknown;
  fail("unknown platform value: \"" + s + "\"");
}

/// Identifies one media item. clip_id is set for video-derived records and
/// frame_index selects the frame within the clip; stills carry neither.
struct MediaKey {
  std::string identity_id;
  std::string media_id;
  std::optional<std::string> clip_id;
  std::optional<std::uint64_t> frame_index;

  auto tuple() const { return std::tie(identity_id, media_id, clip_id, frame_index); }
  bool operator==(const MediaKey& o) const { return tuple() == o.tuple(); }
  bool operator<(const MediaKey& o) const { return tuple() < o.tuple(); }
};

struct ConditionTags {
  std::string clothing_set_id;
  FaceVisibility face_visibility = FaceVisibility::unknown;
  RangeBand range_band = RangeBand::unknown;
  Platform platform = Platform::unknown;
};

struct EmbeddingRecord {
  MediaKey key;
  ConditionTags tags;
  std::vector<double> vector;  // empty until embeddings are attached
};

/// Immutable after load; safe for concurrent readers.
struct Corpus {
  std::vector<EmbeddingRecord> records;
  std::size_t dim = 0;  // 0 while metadata-only
  std::map<std::string, std::vector<std::size_t>> identity_index;

  bool has_vectors() const { return dim > 0; }

  void rebuild_index() {
    identity_index.clear();
    for (std::size_t i = 0; i < records.size(); ++i)
      identity_index[records[i].key.identity_id].push_back(i);
  }
};

struct Violation {
  std::optional<std::size_t> record;  // absent for corpus-level rules
  std::string rule;
  std::string message;
};

// ---------------------------------------------------------------------------
// Manifest (JSONL)
// ---------------------------------------------------------------------------

namespace detail {

inline std::string manifest_string_field(const nlohmann::json& obj, const char* key,
                                         std::size_t line) {
  if (!obj.contains(key) || obj[key].is_null())
    fail("manifest line " + std::to_string(line) + ": missing required field \"" +
         key + "\"");
  if (!obj[key].is_string())
    fail("manifest line " + std::to_string(line) + ": field \"" + key +
         "\" must be a string");
  return obj[key].get<std::string>();
}

}  // namespace detail

/// Parses one record per line. Tag fields that are missing or null fall back
/// to the explicit `unknown` value; unknown enum strings are rejected.
inline Corpus load_manifest(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open manifest: " + path);

  Corpus corpus;
  std::set<MediaKey> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail("manifest line " + std::to_string(line_no) + ": malformed JSON (" +
           e.what() + ")");
    }
    if (!obj.is_object())
      fail("manifest line " + std::to_string(line_no) + ": expected a JSON object");

    EmbeddingRecord rec;
    rec.key.identity_id = detail::manifest_string_field(obj, "identity_id", line_no);
    rec.key.media_id = detail::manifest_string_field(obj, "media_id", line_no);
    if (obj.contains("clip_id") && !obj["clip_id"].is_null()) {
      if (!obj["clip_id"].is_string())
        fail("manifest line " + std::to_string(line_no) + ": clip_id must be a string");
      rec.key.clip_id = obj["clip_id"].get<std::string>();
    }
    if (obj.contains("frame_index") && !obj["frame_index"].is_null()) {
      if (!obj["frame_index"].is_number_unsigned())
        fail("manifest line " + std::to_string(line_no) +
             ": frame_index must be a non-negative integer");
      rec.key.frame_index = obj["frame_index"].get<std::uint64_t>();
    }
    if (obj.contains("clothing_set_id") && !obj["clothing_set_id"].is_null()) {
      if (!obj["clothing_set_id"].is_string())
        fail("manifest line " + std::to_string(line_no) +
             ": clothing_set_id must be a string");
      rec.tags.clothing_set_id = obj["clothing_set_id"].get<std::string>();
    }
    try {
      if (obj.contains("face_visibility") && !obj["face_visibility"].is_null())
        rec.tags.face_visibility =
            face_visibility_from_string(obj["face_visibility"].get<std::string>());
      if (obj.contains("range_band") && !obj["range_band"].is_null())
        rec.tags.range_band =
            range_band_from_string(obj["range_band"].get<std::string>());
      if (obj.contains("platform") && !obj["platform"].is_null())
        rec.tags.platform = platform_from_string(obj["platform"].get<std::string>());
    } catch (const Error& e) {
      fail("manifest line " + std::to_string(line_no) + ": " + e.what());
    }

    if (!seen.insert(rec.key).second)
      fail("manifest line " + std::to_string(line_no) + ": duplicate media key (" +
           rec.key.identity_id + ", " + rec.key.media_id + ")");
    corpus.records.push_back(std::move(rec));
  }
  corpus.rebuild_index();
  return corpus;
}

inline void save_manifest(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write manifest: " + path);
  for (const auto& rec : corpus.records) {
    nlohmann::json obj;
    obj["identity_id"] = rec.key.identity_id;
    obj["media_id"] = rec.key.media_id;
    obj["clip_id"] = rec.key.clip_id ? nlohmann::json(*rec.key.clip_id)
                                     : nlohmann::json(nullptr);
    obj["frame_index"] = rec.key.frame_index ? nlohmann::json(*rec.key.frame_index)
                                             : nlohmann::json(nullptr);
    obj["clothing_set_id"] = rec.tags.clothing_set_id;
    obj["face_visibility"] = to_string(rec.tags.face_visibility);
    obj["range_band"] = to_string(rec.tags.range_band);
    obj["platform"] = to_string(rec.tags.platform);
    out << obj.dump() << "\n";
  }
}

// ---------------------------------------------------------------------------
// Embedding sidecar (binary)
//
// Layout, little-endian: magic "BIDE", u32 version=1, u32 dim, u64 count,
// then count*dim float32 rows in record order.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::ofstream& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.write(b, 4);
}

inline void put_u64(std::ofstream& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.write(b, 8);
}

inline std::uint32_t get_u32(std::ifstream& in, const std::string& path) {
  char b[4];
  in.read(b, 4);
  require(in.gcount() == 4, "truncated embedding file: " + path);
  std::uint32_t v;
  std::memcpy(&v, b, 4);
  return v;
}

inline std::uint64_t get_u64(std::ifstream& in, const std::string& path) {
  char b[8];
  in.read(b, 8);
  require(in.gcount() == 8, "truncated embedding file: " + path);
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

}  // namespace detail

inline constexpr char kEmbeddingMagic[4] = {'B', 'I', 'D', 'E'};
inline constexpr std::uint32_t kEmbeddingVersion = 1;

inline void save_embeddings(const Corpus& corpus, const std::string& path) {
  require(corpus.has_vectors(), "corpus has no vectors to save");
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write embedding file: " + path);
  out.write(kEmbeddingMagic, 4);
  detail::put_u32(out, kEmbeddingVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(corpus.dim));
  detail::put_u64(out, static_cast<std::uint64_t>(corpus.records.size()));
  std::vector<float> row(corpus.dim);
  for (const auto& rec : corpus.records) {
    require(rec.vector.size() == corpus.dim, "record vector size does not match dim");
    for (std::size_t k = 0; k < corpus.dim; ++k)
      row[k] = static_cast<float>(rec.vector[k]);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  require(out.good(), "write failed: " + path);
}

/// Attaches row i to record i of `meta`. Storage is float32; arithmetic
/// downstream is double.
inline Corpus load_embeddings(const std::string& path, const Corpus& meta) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open embedding file: " + path);
  char magic[4];
  in.read(magic, 4);
  require(in.gcount() == 4 && std::memcmp(magic, kEmbeddingMagic, 4) == 0,
          "bad magic in embedding file: " + path);
  const std::uint32_t version = detail::get_u32(in, path);
  require(version == kEmbeddingVersion,
          "unsupported embedding file version " + std::to_string(version));
  const std::uint32_t dim = detail::get_u32(in, path);
  require(dim >= 1, "embedding file declares dim 0: " + path);
  const std::uint64_t count = detail::get_u64(in, path);
  require(count == meta.records.size(),
          "embedding count mismatch: file has " + std::to_string(count) +
              " rows, manifest has " + std::to_string(meta.records.size()) +
              " records");

  Corpus corpus = meta;
  corpus.dim = dim;
  std::vector<float> row(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(dim * sizeof(float)));
    require(in.gcount() == static_cast<std::streamsize>(dim * sizeof(float)),
            "truncated embedding file: " + path);
    auto& vec = corpus.records[i].vector;
    vec.resize(dim);
    for (std::uint32_t k = 0; k < dim; ++k) {
      if (!std::isfinite(row[k]))
        fail("non-finite value in embedding row " + std::to_string(i));
      vec[k] = static_cast<double>(row[k]);
    }
  }
  return corpus;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Violations are data, not failures: an empty result means all invariants hold.
inline std::vector<Violation> validate(const Corpus& corpus) {
  std::vector<Violation> out;
  std::set<MediaKey> seen;
  std::size_t dim = corpus.dim;
  for (std::size_t i = 0; i < corpus.records.size(); ++i) {
    const auto& rec = corpus.records[i];
    if (!seen.insert(rec.key).second)
      out.push_back({i, "duplicate_key", "media key duplicates an earlier record"});
    if (rec.key.clip_id.has_value() != rec.key.frame_index.has_value()) {
      const char* msg = rec.key.clip_id
                            ? "clip_id set on a still (no frame_index)"
                            : "frame_index set without a clip_id";
      out.push_back({i, "clip_frame_consistency", msg});
    }
    if (!rec.vector.empty()) {
      if (dim == 0) dim = rec.vector.size();
      if (rec.vector.size() != dim)
        out.push_back({i, "dimension",
                       "vector has dimension " + std::to_string(rec.vector.size()) +
                           ", expected " + std::to_string(dim)});
      if (!all_finite(rec.vector))
        out.push_back({i, "non_finite", "vector contains a non-finite value"});
    } else if (corpus.has_vectors()) {
      out.push_back({i, "dimension", "record has no vector in a loaded corpus"});
    }
  }
  if (corpus.has_vectors() && corpus.dim < 1)
    out.push_back({std::nullopt, "dimension", "corpus dimension must be >= 1"});
  return out;
}

}  // namespace bide
