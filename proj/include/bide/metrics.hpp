#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/templates.hpp"

namespace bide {

// ---------------------------------------------------------------------------
// Curve types
// ---------------------------------------------------------------------------

/// values[k-1] = fraction of probes whose true identity ranks in the top k.
/// Length equals the gallery size; non-decreasing; ends at 1 when every
/// probe's identity is enrolled.
struct CmcCurve {
  std::vector<double> values;
};

struct RocPoint {
  double far = 0.0;
  double tar = 0.0;
};

/// Sorted by FAR ascending, from the (0, .) operating point down to (1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t genuine_count = 0;
  std::size_t impostor_count = 0;
};

struct TarFarPoint {
  double tar = 0.0;
  double achieved_far = 0.0;  // largest observed FAR <= the requested FAR
};

struct MetricsReport {
  double auc = 0.0;
  double tar_at_far_1e3 = 0.0;
  double tar_at_far_1e4 = 0.0;
  double achieved_far_1e3 = 0.0;
  double achieved_far_1e4 = 0.0;
  double rank1 = 0.0;
  double rank20 = 0.0;
  CmcCurve cmc;
  RocCurve roc;
  std::size_t genuine_count = 0;
  std::size_t impostor_count = 0;
};

// ---------------------------------------------------------------------------
// Identification: CMC
// ---------------------------------------------------------------------------

/// rank = 1 + number of wrong-identity scores >= the true-identity score.
/// Ties count against the probe.
inline CmcCurve cmc(const ScoreMatrix& m) {
  const std::size_t n = m.probes.size();
  const std::size_t g = m.gallery.size();
  require(n >= 1, "cmc: no probes");
  std::vector<std::size_t> rank_hist(g, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t col = m.gallery_col(m.probes[i].true_identity);
    const double s_true = m.at(i, col);
    std::size_t worse = 0;
    for (std::size_t j = 0; j < g; ++j)
      if (j != col && m.at(i, j) >= s_true) ++worse;
    ++rank_hist[worse];  // rank = worse + 1
  }
  CmcCurve curve;
  curve.values.resize(g);
  std::size_t cum = 0;
  for (std::size_t k = 0; k < g; ++k) {
    cum += rank_hist[k];
    curve.values[k] = static_cast<double>(cum) / static_cast<double>(n);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Verification: ROC / AUC / TAR@FAR
// ---------------------------------------------------------------------------

/// Genuine pair = (probe, its own identity's template); every other
/// probe-template pair is an impostor. The threshold sweep visits every
/// observed score, with a +inf sentinel so the FAR = 0 point always exists.
/// A score counts as an accept when it is >= the threshold.
inline RocCurve roc(const ScoreMatrix& m) {
  const std::size_t n = m.probes.size();
  const std::size_t g = m.gallery.size();
  std::vector<double> genuine, impostor;
  genuine.reserve(n);
  impostor.reserve(n * (g - 1));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t col = m.gallery_col(m.probes[i].true_identity);
    for (std::size_t j = 0; j < g; ++j)
      (j == col ? genuine : impostor).push_back(m.at(i, j));
  }
  require(!genuine.empty() && !impostor.empty(),
          "roc: degenerate pair sets (need at least one genuine and one impostor)");

  std::sort(genuine.begin(), genuine.end());
  std::sort(impostor.begin(), impostor.end());
  std::vector<double> thresholds;
  thresholds.reserve(genuine.size() + impostor.size());
  thresholds.insert(thresholds.end(), genuine.begin(), genuine.end());
  thresholds.insert(thresholds.end(), impostor.begin(), impostor.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                   thresholds.end());

  RocCurve curve;
  curve.genuine_count = genuine.size();
  curve.impostor_count = impostor.size();
  curve.points.push_back({0.0, 0.0});  // threshold above every observed score
  const double ng = static_cast<double>(genuine.size());
  const double ni = static_cast<double>(impostor.size());
  for (double t : thresholds) {
    const auto g_ge = genuine.end() - std::lower_bound(genuine.begin(), genuine.end(), t);
    const auto i_ge =
        impostor.end() - std::lower_bound(impostor.begin(), impostor.end(), t);
    curve.points.push_back({static_cast<double>(i_ge) / ni,
                            static_cast<double>(g_ge) / ng});
  }
  return curve;
}

/// Trapezoidal area; equal to the Mann-Whitney statistic
/// P(genuine > impostor) + P(tie) / 2 because the sweep visits every score.
inline double auc(const RocCurve& curve) {
  require(curve.points.size() >= 2, "auc: curve has fewer than two points");
  NeumaierSum area;
  for (std::size_t k = 0; k + 1 < curve.points.size(); ++k) {
    const auto& a = curve.points[k];
    const auto& b = curve.points[k + 1];
    area.add((b.far - a.far) * (a.tar + b.tar) * 0.5);
  }
  return area.value();
}

/// Step-function operating point: TAR at the largest observed FAR <= `far`.
/// No interpolation; the achieved FAR is reported alongside.
inline TarFarPoint tar_at_far_point(const RocCurve& curve, double far) {
  require(far > 0.0 && far <= 1.0, "tar_at_far: far must lie in (0, 1]");
  // Points are sorted by FAR ascending with TAR non-decreasing, so the last
  // qualifying point is the best operating point. (0, 0) always qualifies.
  TarFarPoint best{0.0, 0.0};
  for (const auto& p : curve.points) {
    if (p.far > far) break;
    best = {p.tar, p.far};
  }
  return best;
}

inline double tar_at_far(const RocCurve& curve, double far) {
  return tar_at_far_point(curve, far).tar;
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

inline MetricsReport report(const ScoreMatrix& m) {
  MetricsReport r;
  r.cmc = cmc(m);
  r.roc = roc(m);
  r.auc = auc(r.roc);
  const TarFarPoint p3 = tar_at_far_point(r.roc, 1e-3);
  const TarFarPoint p4 = tar_at_far_point(r.roc, 1e-4);
  r.tar_at_far_1e3 = p3.tar;
  r.achieved_far_1e3 = p3.achieved_far;
  r.tar_at_far_1e4 = p4.tar;
  r.achieved_far_1e4 = p4.achieved_far;
  r.rank1 = r.cmc.values.front();
  r.rank20 = r.cmc.values[std::min<std::size_t>(19, r.cmc.values.size() - 1)];
  r.genuine_count = r.roc.genuine_count;
  r.impostor_count = r.roc.impostor_count;
  return r;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline nlohmann::json report_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["auc"] = r.auc;
  j["tar_at_far_1e3"] = r.tar_at_far_1e3;
  j["tar_at_far_1e4"] = r.tar_at_far_1e4;
  j["achieved_far_1e3"] = r.achieved_far_1e3;
  j["achieved_far_1e4"] = r.achieved_far_1e4;
  j["rank1"] = r.rank1;
  j["rank20"] = r.rank20;
  j["genuine_count"] = r.genuine_count;
  j["impostor_count"] = r.impostor_count;
  j["cmc"] = r.cmc.values;
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : r.roc.points) pts.push_back({p.far, p.tar});
  j["roc"] = std::move(pts);
  return j;
}

inline void write_cmc_csv(const CmcCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write CMC CSV: " + path);
  out << "rank,value\n";
  for (std::size_t k = 0; k < curve.values.size(); ++k)
    out << (k + 1) << "," << format_double(curve.values[k]) << "\n";
}

inline void write_roc_csv(const RocCurve& curve, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write ROC CSV: " + path);
  out << "far,tar\n";
  for (const auto& p : curve.points)
    out << format_double(p.far) << "," << format_double(p.tar) << "\n";
}

}  // namespace bide
