#pragma once

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/corpus.hpp"
#include "bide/templates.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Split results
// ---------------------------------------------------------------------------

enum class SplitKind { half_temporal, clothing_disjoint, tag_filter };

inline const char* to_string(SplitKind k) {
  switch (k) {
    case SplitKind::half_temporal: return "half_temporal";
    case SplitKind::clothing_disjoint: return "clothing_disjoint";
    default: return "tag_filter";
  }
}

inline SplitKind split_kind_from_string(const std::string& s) {
  if (s == "half_temporal") return SplitKind::half_temporal;
  if (s == "clothing_disjoint") return SplitKind::clothing_disjoint;
  if (s == "tag_filter") return SplitKind::tag_filter;
  fail("unknown split kind: \"" + s + "\"");
}

struct Exclusion {
  std::size_t record = 0;
  std::string reason;
};

/// Gallery, probe and exclusions are disjoint and together cover the corpus.
struct SplitResult {
  SplitKind kind = SplitKind::half_temporal;
  std::vector<std::size_t> gallery;
  std::vector<std::size_t> probe;
  std::vector<Exclusion> exclusions;
};

// ---------------------------------------------------------------------------
// Half gallery/probe with temporal separation
// ---------------------------------------------------------------------------

/// Per identity, clips in temporal (clip id) order: the first half of the
/// clips goes to the gallery (floor on odd counts), the rest to the probe
/// side. No clip straddles the boundary. Single-clip identities are excluded.
inline SplitResult half_split_temporal(const Corpus& corpus) {
  SplitResult out;
  out.kind = SplitKind::half_temporal;
  for (const auto& [identity, rows] : corpus.identity_index) {
    std::map<std::string, std::vector<std::size_t>> clips;
    for (std::size_t r : rows) {
      const auto& key = corpus.records[r].key;
      require(key.clip_id.has_value(),
              "half_split_temporal: record without clip ordering (media \"" +
                  key.media_id + "\")");
      clips[*key.clip_id].push_back(r);
    }
    if (clips.size() < 2) {
      for (std::size_t r : rows)
        out.exclusions.push_back({r, "identity \"" + identity + "\" has a single clip"});
      continue;
    }
    const std::size_t gallery_clips = clips.size() / 2;
    std::size_t c = 0;
    for (const auto& [clip, members] : clips) {
      auto& dst = c < gallery_clips ? out.gallery : out.probe;
      dst.insert(dst.end(), members.begin(), members.end());
      ++c;
    }
  }
  std::sort(out.gallery.begin(), out.gallery.end());
  std::sort(out.probe.begin(), out.probe.end());
  return out;
}

// ---------------------------------------------------------------------------
// Clothing-disjoint restructuring
// ---------------------------------------------------------------------------

using ProbeClothingRule =
    std::function<std::string(const std::string& identity,
                              const std::vector<std::string>& clothing_sets)>;

/// One clothing set per identity becomes the probe side (lowest id under the
/// default rule); every record of the other sets goes to the gallery.
/// Identities with fewer than two clothing sets are excluded.
inline SplitResult clothing_disjoint_split(const Corpus& corpus,
                                           const ProbeClothingRule& rule = {}) {
  bool any_tag = false;
  for (const auto& rec : corpus.records)
    if (!rec.tags.clothing_set_id.empty()) {
      any_tag = true;
      break;
    }
  require(any_tag, "clothing_disjoint_split: corpus has no clothing tags");

  SplitResult out;
  out.kind = SplitKind::clothing_disjoint;
  for (const auto& [identity, rows] : corpus.identity_index) {
    std::set<std::string> sets;
    for (std::size_t r : rows) {
      const auto& set_id = corpus.records[r].tags.clothing_set_id;
      require(!set_id.empty(),
              "clothing_disjoint_split: record of identity \"" + identity +
                  "\" has no clothing_set_id");
      sets.insert(set_id);
    }
    if (sets.size() < 2) {
      for (std::size_t r : rows)
        out.exclusions.push_back(
            {r, "identity \"" + identity + "\" has a single clothing set"});
      continue;
    }
    const std::vector<std::string> ordered(sets.begin(), sets.end());
    const std::string probe_set = rule ? rule(identity, ordered) : ordered.front();
    require(sets.count(probe_set) > 0,
            "probe clothing rule chose \"" + probe_set +
                "\", which identity \"" + identity + "\" does not have");
    for (std::size_t r : rows) {
      auto& dst = corpus.records[r].tags.clothing_set_id == probe_set ? out.probe
                                                                      : out.gallery;
      dst.push_back(r);
    }
  }
  std::sort(out.gallery.begin(), out.gallery.end());
  std::sort(out.probe.begin(), out.probe.end());
  return out;
}

// ---------------------------------------------------------------------------
// Condition-tag predicates and probe subsets
// ---------------------------------------------------------------------------

using TagPredicate = std::function<bool(const ConditionTags&)>;

/// The four named BTS-style probe partitions.
inline TagPredicate named_tag_predicate(const std::string& name) {
  if (name == "face_included")
    return [](const ConditionTags& t) {
      return t.face_visibility == FaceVisibility::included;
    };
  if (name == "face_restricted")
    return [](const ConditionTags& t) {
      return t.face_visibility == FaceVisibility::restricted;
    };
  if (name == "long_range")
    return [](const ConditionTags& t) { return t.range_band == RangeBand::long_range; };
  if (name == "uav")
    return [](const ConditionTags& t) { return t.platform == Platform::uav; };
  fail("unknown probe subset predicate: \"" + name + "\"");
}

/// Order-preserving filter over probe embeddings.
inline std::vector<ProbeEmbedding> filter_probe_subset(
    const std::vector<ProbeEmbedding>& probes, const TagPredicate& predicate) {
  std::vector<ProbeEmbedding> out;
  for (const auto& p : probes)
    if (predicate(p.tags)) out.push_back(p);
  return out;
}

/// Generic split by tag predicate: matching records become probes.
inline SplitResult tag_filter_split(const Corpus& corpus, const TagPredicate& predicate) {
  SplitResult out;
  out.kind = SplitKind::tag_filter;
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    auto& dst = predicate(corpus.records[r].tags) ? out.probe : out.gallery;
    dst.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence (JSON), so evaluations are replayable
// ---------------------------------------------------------------------------

inline nlohmann::json split_to_json(const SplitResult& s) {
  nlohmann::json j;
  j["kind"] = to_string(s.kind);
  j["gallery"] = s.gallery;
  j["probe"] = s.probe;
  nlohmann::json ex = nlohmann::json::array();
  for (const auto& e : s.exclusions)
    ex.push_back({{"record", e.record}, {"reason", e.reason}});
  j["exclusions"] = std::move(ex);
  return j;
}

inline SplitResult split_from_json(const nlohmann::json& j) {
  SplitResult s;
  s.kind = split_kind_from_string(j.at("kind").get<std::string>());
  s.gallery = j.at("gallery").get<std::vector<std::size_t>>();
  s.probe = j.at("probe").get<std::vector<std::size_t>>();
  for (const auto& e : j.at("exclusions"))
    s.exclusions.push_back(
        {e.at("record").get<std::size_t>(), e.at("reason").get<std::string>()});
  return s;
}

inline void write_split_json(const SplitResult& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write split file: " + path);
  out << split_to_json(s).dump(2) << "\n";
}

inline SplitResult read_split_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open split file: " + path);
  nlohmann::json j;
  in >> j;
  return split_from_json(j);
}

/// Asserts the disjoint-union invariant; throws with a description on failure.
inline void check_split_partition(const Corpus& corpus, const SplitResult& s) {
  std::vector<int> seen(corpus.records.size(), 0);
  for (std::size_t r : s.gallery) ++seen.at(r);
  for (std::size_t r : s.probe) ++seen.at(r);
  for (const auto& e : s.exclusions) ++seen.at(e.record);
  for (std::size_t r = 0; r < seen.size(); ++r)
    require(seen[r] == 1, "split does not partition the corpus at record " +
                              std::to_string(r) + " (covered " +
                              std::to_string(seen[r]) + " times)");
}

}  // namespace bide
