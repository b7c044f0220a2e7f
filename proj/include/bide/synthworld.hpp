#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/corpus.hpp"
#include "bide/rng.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// World configuration
// ---------------------------------------------------------------------------

/// Identity signal lives in the first identity_dim coordinates; clothing
/// offsets are confined to the remaining nuisance coordinates, so a linear
/// head that suppresses them is guaranteed to exist.
struct WorldConfig {
  std::size_t n_identities = 200;
  std::size_t identity_dim = 16;
  std::size_t nuisance_dim = 48;
  std::size_t clothing_sets_per_id = 3;
  std::size_t clips_per_set = 2;
  std::size_t frames_per_clip = 4;
  double clothing_scale = 2.0;  // sigma_c, per nuisance coordinate
  double view_noise = 0.1;      // sigma_v, per clip
  double frame_noise = 0.05;    // sigma_f, per frame
  double latent_radius = 4.0;
  double min_latent_separation = 1.0;
  std::size_t n_descriptors = 30;
  std::uint64_t seed = 0;

  std::size_t dim() const { return identity_dim + nuisance_dim; }
  std::size_t record_count() const {
    return n_identities * clothing_sets_per_id * clips_per_set * frames_per_clip;
  }
};

inline void validate_world_config(const WorldConfig& c) {
  require(c.n_identities >= 1 && c.identity_dim >= 1 && c.nuisance_dim >= 1,
          "world config: dimensions and identity count must be >= 1");
  require(c.clothing_sets_per_id >= 1 && c.clips_per_set >= 1 && c.frames_per_clip >= 1,
          "world config: per-identity structure counts must be >= 1");
  require(c.clothing_scale >= 0 && c.view_noise >= 0 && c.frame_noise >= 0,
          "world config: noise scales must be >= 0");
  require(c.latent_radius > 0, "world config: latent_radius must be > 0");
  require(c.n_descriptors >= 1, "world config: n_descriptors must be >= 1");
}

struct GroundTruth {
  std::vector<std::string> identity_ids;
  Mat latents;         // n_identities x identity_dim
  Mat descriptors;     // n_identities x n_descriptors, = descriptor_map * latent
  Mat descriptor_map;  // n_descriptors x identity_dim
  Mat clothing_offsets;  // (n_identities * sets) x nuisance_dim
  Mat view_offsets;      // (n_identities * sets * clips) x dim
};

namespace detail {

inline std::string zero_padded(const char* prefix, std::size_t value, int width) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s%0*zu", prefix, width, value);
  return std::string(buf);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// record = [latent | 0] + clothing offset (per set, nuisance coords only)
///        + view offset (per clip) + frame noise. Identity latents sit on a
///  sphere of latent_radius with a minimum pairwise separation enforced by
///  rejection. Condition tags rotate round-robin over the four probe
///  categories at clip granularity. Bit-deterministic given the seed.
inline std::pair<Corpus, GroundTruth> generate(const WorldConfig& cfg) {
  validate_world_config(cfg);
  const std::size_t d = cfg.dim();
  Rng base(cfg.seed);

  GroundTruth gt;
  gt.latents = Mat(cfg.n_identities, cfg.identity_dim);
  Rng latent_rng = base.derive(1);
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
      std::vector<double> v(cfg.identity_dim);
      NeumaierSum norm_sq;
      for (auto& x : v) {
        x = latent_rng.normal();
        norm_sq.add(x * x);
      }
      const double norm = std::sqrt(norm_sq.value());
      if (norm == 0.0) continue;
      for (auto& x : v) x *= cfg.latent_radius / norm;
      bool separated = true;
      for (std::size_t j = 0; j < i && separated; ++j) {
        double dist_sq = 0.0;
        for (std::size_t k = 0; k < cfg.identity_dim; ++k) {
          const double diff = v[k] - gt.latents.at(j, k);
          dist_sq += diff * diff;
        }
        separated = std::sqrt(dist_sq) >= cfg.min_latent_separation;
      }
      if (separated) {
        std::copy(v.begin(), v.end(), gt.latents.row(i));
        placed = true;
      }
    }
    require(placed, "could not place identity latent " + std::to_string(i) +
                        " with the requested minimum separation");
  }

  Rng map_rng = base.derive(2);
  gt.descriptor_map = Mat(cfg.n_descriptors, cfg.identity_dim);
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(cfg.identity_dim));
  for (auto& v : gt.descriptor_map.a) v = map_rng.normal() * map_scale;

  gt.descriptors = Mat(cfg.n_identities, cfg.n_descriptors);
  for (std::size_t i = 0; i < cfg.n_identities; ++i)
    for (std::size_t r = 0; r < cfg.n_descriptors; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < cfg.identity_dim; ++k)
        acc += gt.descriptor_map.at(r, k) * gt.latents.at(i, k);
      gt.descriptors.at(i, r) = acc;
    }

  gt.clothing_offsets = Mat(cfg.n_identities * cfg.clothing_sets_per_id, cfg.nuisance_dim);
  gt.view_offsets =
      Mat(cfg.n_identities * cfg.clothing_sets_per_id * cfg.clips_per_set, d);

  Corpus corpus;
  corpus.dim = d;
  corpus.records.reserve(cfg.record_count());
  std::size_t clip_counter = 0;
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    const std::string identity = detail::zero_padded("id", i, 4);
    gt.identity_ids.push_back(identity);
    Rng rng = base.derive(1000 + i);
    for (std::size_t s = 0; s < cfg.clothing_sets_per_id; ++s) {
      const std::size_t set_row = i * cfg.clothing_sets_per_id + s;
      for (std::size_t k = 0; k < cfg.nuisance_dim; ++k)
        gt.clothing_offsets.at(set_row, k) = rng.normal() * cfg.clothing_scale;
      for (std::size_t c = 0; c < cfg.clips_per_set; ++c) {
        const std::size_t clip_row = set_row * cfg.clips_per_set + c;
        for (std::size_t k = 0; k < d; ++k)
          gt.view_offsets.at(clip_row, k) = rng.normal() * cfg.view_noise;

        // Condition tags rotate over the four probe categories per clip.
        ConditionTags tags;
        tags.clothing_set_id = detail::zero_padded("s", s, 2);
        switch (clip_counter % 4) {
          case 0:
            tags.face_visibility = FaceVisibility::included;
            tags.range_band = RangeBand::close;
            tags.platform = Platform::ground;
            break;
          case 1:
            tags.face_visibility = FaceVisibility::restricted;
            tags.range_band = RangeBand::close;
            tags.platform = Platform::ground;
            break;
          case 2:
            tags.range_band = RangeBand::long_range;
            tags.platform = Platform::ground;
            break;
          default:
            tags.platform = Platform::uav;
        }
        ++clip_counter;

        const std::string clip_id = detail::zero_padded("s", s, 2) +
                                    detail::zero_padded("c", c, 2);
        for (std::size_t f = 0; f < cfg.frames_per_clip; ++f) {
          EmbeddingRecord rec;
          rec.key.identity_id = identity;
          rec.key.clip_id = clip_id;
          rec.key.frame_index = f;
          rec.key.media_id = clip_id + detail::zero_padded("f", f, 2);
          rec.tags = tags;
          rec.vector.assign(d, 0.0);
          for (std::size_t k = 0; k < cfg.identity_dim; ++k)
            rec.vector[k] = gt.latents.at(i, k);
          for (std::size_t k = 0; k < cfg.nuisance_dim; ++k)
            rec.vector[cfg.identity_dim + k] += gt.clothing_offsets.at(set_row, k);
          for (std::size_t k = 0; k < d; ++k)
            rec.vector[k] += gt.view_offsets.at(clip_row, k) +
                             rng.normal() * cfg.frame_noise;
          corpus.records.push_back(std::move(rec));
        }
      }
    }
  }
  corpus.rebuild_index();
  return {std::move(corpus), std::move(gt)};
}

// ---------------------------------------------------------------------------
// Brute-force identification oracle
// ---------------------------------------------------------------------------

struct OracleResult {
  std::vector<std::string> identities;
  std::vector<bool> ambiguous;  // minimum achieved by more than one identity
};

/// Nearest identity latent over the identity coordinates only. Exact ties are
/// reported as ambiguous rather than silently resolved.
inline OracleResult oracle_identify(const Corpus& corpus, const GroundTruth& gt) {
  require(corpus.has_vectors(), "oracle_identify: corpus has no vectors");
  const std::size_t id_dim = gt.latents.cols;
  require(corpus.dim >= id_dim, "oracle_identify: corpus dim below identity dim");
  OracleResult out;
  out.identities.reserve(corpus.records.size());
  out.ambiguous.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    bool tie = false;
    for (std::size_t i = 0; i < gt.latents.rows; ++i) {
      double dist_sq = 0.0;
      for (std::size_t k = 0; k < id_dim; ++k) {
        const double diff = rec.vector[k] - gt.latents.at(i, k);
        dist_sq += diff * diff;
      }
      if (dist_sq < best) {
        best = dist_sq;
        best_i = i;
        tie = false;
      } else if (dist_sq == best) {
        tie = true;
      }
    }
    out.identities.push_back(gt.identity_ids[best_i]);
    out.ambiguous.push_back(tie);
  }
  return out;
}

/// Copy of the corpus restricted to the identity coordinates; used to measure
/// the learnable ceiling.
inline Corpus project_identity_coords(const Corpus& corpus, std::size_t identity_dim) {
  require(corpus.has_vectors() && corpus.dim >= identity_dim,
          "project_identity_coords: bad dimensions");
  Corpus out = corpus;
  out.dim = identity_dim;
  for (auto& rec : out.records) rec.vector.resize(identity_dim);
  return out;
}

// ---------------------------------------------------------------------------
// Ground-truth persistence
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json mat_to_json(const Mat& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t r = 0; r < m.rows; ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < m.cols; ++c) row.push_back(m.at(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Mat mat_from_json(const nlohmann::json& j) {
  Mat m;
  m.rows = j.size();
  m.cols = m.rows > 0 ? j[0].size() : 0;
  m.a.reserve(m.rows * m.cols);
  for (const auto& row : j) {
    require(row.size() == m.cols, "ground truth: ragged matrix");
    for (const auto& v : row) m.a.push_back(v.get<double>());
  }
  return m;
}

}  // namespace detail

inline void write_ground_truth_json(const GroundTruth& gt, const std::string& path) {
  nlohmann::json j;
  j["identity_ids"] = gt.identity_ids;
  j["latents"] = detail::mat_to_json(gt.latents);
  j["descriptors"] = detail::mat_to_json(gt.descriptors);
  j["descriptor_map"] = detail::mat_to_json(gt.descriptor_map);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write ground truth: " + path);
  out << j.dump() << "\n";
}

inline GroundTruth read_ground_truth_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open ground truth: " + path);
  nlohmann::json j;
  in >> j;
  GroundTruth gt;
  gt.identity_ids = j.at("identity_ids").get<std::vector<std::string>>();
  gt.latents = detail::mat_from_json(j.at("latents"));
  gt.descriptors = detail::mat_from_json(j.at("descriptors"));
  gt.descriptor_map = detail::mat_from_json(j.at("descriptor_map"));
  return gt;
}

/// Per-record descriptor targets: each record inherits its identity's row.
inline Mat record_descriptors(const Corpus& corpus, const GroundTruth& gt) {
  std::map<std::string, std::size_t> id_pos;
  for (std::size_t i = 0; i < gt.identity_ids.size(); ++i)
    id_pos[gt.identity_ids[i]] = i;
  Mat out(corpus.records.size(), gt.descriptors.cols);
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    const auto it = id_pos.find(corpus.records[r].key.identity_id);
    require(it != id_pos.end(), "record identity \"" +
                                    corpus.records[r].key.identity_id +
                                    "\" missing from ground truth");
    std::copy(gt.descriptors.row(it->second),
              gt.descriptors.row(it->second) + gt.descriptors.cols, out.row(r));
  }
  return out;
}

}  // namespace bide
