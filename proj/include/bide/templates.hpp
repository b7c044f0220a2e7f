#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/corpus.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Aggregated embeddings
// ---------------------------------------------------------------------------

/// Per-identity gallery vector: arithmetic mean of the selected record vectors.
struct GalleryTemplate {
  std::string identity_id;
  std::vector<double> vector;
  std::size_t source_count = 0;
};

/// Per-clip probe vector: mean over the clip's frame records.
struct ProbeEmbedding {
  std::string probe_id;  // identity_id + "/" + clip_id
  std::string true_identity;
  ConditionTags tags;
  std::vector<double> vector;
  std::size_t source_count = 0;
};

struct ProbeInfo {
  std::string probe_id;
  std::string true_identity;
  ConditionTags tags;
};

enum class ScoreMetric { cosine, negative_euclidean };

inline const char* to_string(ScoreMetric m) {
  return m == ScoreMetric::cosine ? "cosine" : "negative_euclidean";
}

inline ScoreMetric score_metric_from_string(const std::string& s) {
  if (s == "cosine") return ScoreMetric::cosine;
  if (s == "euclidean" || s == "negative_euclidean")
    return ScoreMetric::negative_euclidean;
  fail("unknown score metric: \"" + s + "\"");
}

// ---------------------------------------------------------------------------
// Vector helpers (64-bit compensated accumulation throughout)
// ---------------------------------------------------------------------------

inline double l2_norm(std::span<const double> v) {
  NeumaierSum acc;
  for (double x : v) acc.add(x * x);
  return std::sqrt(acc.value());
}

inline std::vector<double> l2_normalize(std::span<const double> v) {
  const double n = l2_norm(v);
  require(n > 0.0, "l2_normalize: zero vector");
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

/// Mean of the given record vectors, accumulated per coordinate with
/// compensated summation so the result is permutation-stable.
inline std::vector<double> mean_vector(const Corpus& corpus,
                                       std::span<const std::size_t> rows,
                                       bool normalize_inputs) {
  require(!rows.empty(), "mean_vector: no rows");
  const std::size_t d = corpus.records[rows[0]].vector.size();
  std::vector<NeumaierSum> acc(d);
  for (std::size_t r : rows) {
    const auto& rec = corpus.records[r];
    require(rec.vector.size() == d, "mean_vector: dimension mismatch in corpus");
    if (normalize_inputs) {
      const std::vector<double> nv = l2_normalize(rec.vector);
      for (std::size_t k = 0; k < d; ++k) acc[k].add(nv[k]);
    } else {
      for (std::size_t k = 0; k < d; ++k) acc[k].add(rec.vector[k]);
    }
  }
  std::vector<double> out(d);
  for (std::size_t k = 0; k < d; ++k)
    out[k] = acc[k].value() / static_cast<double>(rows.size());
  return out;
}

// ---------------------------------------------------------------------------
// Template building
// ---------------------------------------------------------------------------

/// Both orders of the normalize/average question are exposed:
/// normalize_inputs averages unit vectors, normalize_output scales the mean.
struct AggregationOptions {
  bool normalize_inputs = false;
  bool normalize_output = false;
};

inline std::vector<GalleryTemplate> build_gallery_templates(
    const Corpus& corpus, std::span<const std::size_t> selected,
    const AggregationOptions& opt = {}) {
  require(corpus.has_vectors(), "gallery templates need a loaded corpus");
  std::map<std::string, std::vector<std::size_t>> by_id;
  for (std::size_t r : selected) {
    require(r < corpus.records.size(), "record index out of range");
    by_id[corpus.records[r].key.identity_id].push_back(r);
  }
  std::vector<GalleryTemplate> out;
  out.reserve(by_id.size());
  for (const auto& [id, rows] : by_id) {
    GalleryTemplate t;
    t.identity_id = id;
    t.vector = mean_vector(corpus, rows, opt.normalize_inputs);
    if (opt.normalize_output) t.vector = l2_normalize(t.vector);
    t.source_count = rows.size();
    out.push_back(std::move(t));
  }
  return out;
}

/// Variant that checks a required identity list; an identity with zero
/// selected records is an error rather than a silent omission.
inline std::vector<GalleryTemplate> build_gallery_templates(
    const Corpus& corpus, std::span<const std::size_t> selected,
    std::span<const std::string> required_identities,
    const AggregationOptions& opt = {}) {
  auto out = build_gallery_templates(corpus, selected, opt);
  for (const auto& id : required_identities) {
    const bool found = std::any_of(out.begin(), out.end(),
                                   [&](const auto& t) { return t.identity_id == id; });
    require(found, "gallery identity \"" + id + "\" has zero selected records");
  }
  return out;
}

inline std::vector<ProbeEmbedding> build_probe_embeddings(
    const Corpus& corpus, std::span<const std::size_t> selected,
    const AggregationOptions& opt = {}) {
  require(corpus.has_vectors(), "probe embeddings need a loaded corpus");
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_clip;
  for (std::size_t r : selected) {
    require(r < corpus.records.size(), "record index out of range");
    const auto& rec = corpus.records[r];
    require(rec.key.clip_id.has_value(),
            "still image routed to probe builder (media \"" + rec.key.media_id +
                "\" has no clip_id)");
    by_clip[{rec.key.identity_id, *rec.key.clip_id}].push_back(r);
  }
  std::vector<ProbeEmbedding> out;
  out.reserve(by_clip.size());
  for (const auto& [key, rows] : by_clip) {
    ProbeEmbedding p;
    p.probe_id = key.first + "/" + key.second;
    p.true_identity = key.first;
    p.tags = corpus.records[rows.front()].tags;
    p.vector = mean_vector(corpus, rows, opt.normalize_inputs);
    if (opt.normalize_output) p.vector = l2_normalize(p.vector);
    p.source_count = rows.size();
    out.push_back(std::move(p));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Score matrix
// ---------------------------------------------------------------------------

struct ScoreMatrixOptions {
  ScoreMetric metric = ScoreMetric::cosine;
  std::size_t block_cols = 256;  // gallery tile width, cache locality knob
  unsigned workers = 1;          // probe rows are split across workers
};

/// Probes x gallery similarities. Higher means more similar under both
/// metrics. Probes whose identity is not enrolled are rejected up front.
struct ScoreMatrix {
  std::vector<ProbeInfo> probes;
  std::vector<std::string> gallery;
  std::vector<double> scores;  // row-major, probes x gallery
  ScoreMetric metric = ScoreMetric::cosine;
  std::map<std::string, std::size_t> gallery_pos;

  double at(std::size_t i, std::size_t j) const { return scores[i * gallery.size() + j]; }

  std::size_t gallery_col(const std::string& id) const {
    const auto it = gallery_pos.find(id);
    require(it != gallery_pos.end(), "identity \"" + id + "\" not in gallery");
    return it->second;
  }
};

namespace detail {

inline void score_rows(const std::vector<std::vector<double>>& probe_vecs,
                       const std::vector<std::vector<double>>& gallery_vecs,
                       ScoreMetric metric, std::size_t block_cols,
                       std::size_t row_begin, std::size_t row_end,
                       std::size_t n_gallery, double* out) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    const double* p = probe_vecs[i].data();
    const std::size_t d = probe_vecs[i].size();
    for (std::size_t jb = 0; jb < n_gallery; jb += block_cols) {
      const std::size_t je = std::min(jb + block_cols, n_gallery);
      for (std::size_t j = jb; j < je; ++j) {
        const double* g = gallery_vecs[j].data();
        double acc = 0.0;
        if (metric == ScoreMetric::cosine) {
          for (std::size_t k = 0; k < d; ++k) acc += p[k] * g[k];
        } else {
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = p[k] - g[k];
            acc += diff * diff;
          }
          acc = -std::sqrt(acc);
        }
        out[i * n_gallery + j] = acc;
      }
    }
  }
}

}  // namespace detail

inline ScoreMatrix score_matrix(const std::vector<ProbeEmbedding>& probes,
                                const std::vector<GalleryTemplate>& gallery,
                                const ScoreMatrixOptions& opt = {}) {
  require(!probes.empty(), "score_matrix: no probes");
  require(!gallery.empty(), "score_matrix: empty gallery");
  require(opt.block_cols >= 1, "score_matrix: block_cols must be >= 1");

  ScoreMatrix m;
  m.metric = opt.metric;
  const std::size_t d = gallery.front().vector.size();
  for (const auto& g : gallery) {
    require(g.vector.size() == d, "score_matrix: gallery dimension mismatch");
    require(m.gallery_pos.emplace(g.identity_id, m.gallery.size()).second,
            "score_matrix: duplicate gallery identity \"" + g.identity_id + "\"");
    m.gallery.push_back(g.identity_id);
  }
  for (const auto& p : probes) {
    require(p.vector.size() == d, "score_matrix: probe dimension mismatch");
    require(m.gallery_pos.count(p.true_identity) > 0,
            "open-set probe rejected: identity \"" + p.true_identity +
                "\" is not enrolled");
    m.probes.push_back({p.probe_id, p.true_identity, p.tags});
  }

  // Cosine works on L2-normalized copies; negative Euclidean on the raw vectors.
  std::vector<std::vector<double>> pv(probes.size()), gv(gallery.size());
  for (std::size_t i = 0; i < probes.size(); ++i)
    pv[i] = opt.metric == ScoreMetric::cosine ? l2_normalize(probes[i].vector)
                                              : probes[i].vector;
  for (std::size_t j = 0; j < gallery.size(); ++j)
    gv[j] = opt.metric == ScoreMetric::cosine ? l2_normalize(gallery[j].vector)
                                              : gallery[j].vector;

  m.scores.assign(probes.size() * gallery.size(), 0.0);
  const unsigned workers = std::max(1u, opt.workers);
  if (workers == 1 || probes.size() == 1) {
    detail::score_rows(pv, gv, opt.metric, opt.block_cols, 0, probes.size(),
                       gallery.size(), m.scores.data());
  } else {
    // Disjoint row ranges; output is identical for any worker count.
    std::vector<std::thread> pool;
    const std::size_t n = probes.size();
    const std::size_t chunk = (n + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t lo = std::min<std::size_t>(w * chunk, n);
      const std::size_t hi = std::min<std::size_t>(lo + chunk, n);
      if (lo >= hi) break;
      pool.emplace_back(detail::score_rows, std::cref(pv), std::cref(gv), opt.metric,
                        opt.block_cols, lo, hi, gallery.size(), m.scores.data());
    }
    for (auto& t : pool) t.join();
  }

  for (double s : m.scores)
    require(std::isfinite(s), "score_matrix: non-finite score");
  return m;
}

// ---------------------------------------------------------------------------
// Export: CSV of scores with a JSON metadata sidecar
// ---------------------------------------------------------------------------

inline void write_scores_csv(const ScoreMatrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write scores CSV: " + path);
  out << "probe_id";
  for (const auto& g : m.gallery) out << "," << g;
  out << "\n";
  for (std::size_t i = 0; i < m.probes.size(); ++i) {
    out << m.probes[i].probe_id;
    for (std::size_t j = 0; j < m.gallery.size(); ++j)
      out << "," << format_double(m.at(i, j));
    out << "\n";
  }
}

inline void write_scores_meta_json(const ScoreMatrix& m, const std::string& path) {
  nlohmann::json meta;
  meta["metric"] = to_string(m.metric);
  meta["n_probes"] = m.probes.size();
  meta["n_gallery"] = m.gallery.size();
  meta["gallery"] = m.gallery;
  nlohmann::json probes = nlohmann::json::array();
  for (const auto& p : m.probes) {
    probes.push_back({{"probe_id", p.probe_id},
                      {"true_identity", p.true_identity},
                      {"clothing_set_id", p.tags.clothing_set_id},
                      {"face_visibility", to_string(p.tags.face_visibility)},
                      {"range_band", to_string(p.tags.range_band)},
                      {"platform", to_string(p.tags.platform)}});
  }
  meta["probes"] = std::move(probes);
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write scores metadata: " + path);
  out << meta.dump(2) << "\n";
}

}  // namespace bide
