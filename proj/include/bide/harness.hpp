#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "bide/common.hpp"
#include "bide/corpus.hpp"
#include "bide/metrics.hpp"
#include "bide/partitioner.hpp"
#include "bide/synthworld.hpp"
#include "bide/templates.hpp"
#include "bide/trainer.hpp"

namespace bide {

inline constexpr const char* kVersion = "bide 0.1.0";

// ---------------------------------------------------------------------------
// Corpus <-> trainer bridging
// ---------------------------------------------------------------------------

inline Mat features_from_corpus(const Corpus& corpus) {
  require(corpus.has_vectors(), "corpus has no vectors");
  Mat m(corpus.records.size(), corpus.dim);
  for (std::size_t r = 0; r < corpus.records.size(); ++r) {
    require(corpus.records[r].vector.size() == corpus.dim,
            "corpus record dimension mismatch");
    std::copy(corpus.records[r].vector.begin(), corpus.records[r].vector.end(),
              m.row(r));
  }
  return m;
}

/// Runs every record vector through the head's identification path.
inline Corpus apply_head(const Corpus& corpus, const HeadParams& head) {
  const Mat features = features_from_corpus(corpus);
  const Forward fwd = forward(head, features);
  Corpus out = corpus;
  out.dim = fwd.embeddings.cols;
  for (std::size_t r = 0; r < out.records.size(); ++r)
    out.records[r].vector.assign(fwd.embeddings.row(r),
                                 fwd.embeddings.row(r) + fwd.embeddings.cols);
  return out;
}

// ---------------------------------------------------------------------------
// Config file handling: declarative JSON, schema-checked before any work
// ---------------------------------------------------------------------------

namespace cfg {

inline nlohmann::json load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open config: " + path);
  try {
    nlohmann::json j;
    in >> j;
    require(j.is_object(), "config root must be a JSON object: " + path);
    return j;
  } catch (const nlohmann::json::parse_error& e) {
    fail("config " + path + ": malformed JSON (" + std::string(e.what()) + ")");
  }
}

/// Fail-fast schema check: required keys must exist, unknown keys are errors.
inline void check_keys(const nlohmann::json& obj, const std::string& ctx,
                       const std::vector<std::string>& required,
                       const std::vector<std::string>& optional) {
  require(obj.is_object(), ctx + " must be a JSON object");
  for (const auto& k : required)
    require(obj.contains(k), ctx + ": missing required key \"" + k + "\"");
  for (const auto& [k, v] : obj.items()) {
    const bool known =
        std::find(required.begin(), required.end(), k) != required.end() ||
        std::find(optional.begin(), optional.end(), k) != optional.end();
    require(known, ctx + ": unknown key \"" + k + "\"");
  }
}

template <class T>
T get_or(const nlohmann::json& obj, const std::string& key, T fallback) {
  if (!obj.contains(key) || obj[key].is_null()) return fallback;
  return obj[key].get<T>();
}

inline WorldConfig parse_world(const nlohmann::json& j, std::uint64_t seed) {
  check_keys(j, "world config", {},
             {"n_identities", "identity_dim", "nuisance_dim", "clothing_sets_per_id",
              "clips_per_set", "frames_per_clip", "clothing_scale", "view_noise",
              "frame_noise", "latent_radius", "min_latent_separation",
              "n_descriptors"});
  WorldConfig w;
  w.n_identities = get_or<std::size_t>(j, "n_identities", w.n_identities);
  w.identity_dim = get_or<std::size_t>(j, "identity_dim", w.identity_dim);
  w.nuisance_dim = get_or<std::size_t>(j, "nuisance_dim", w.nuisance_dim);
  w.clothing_sets_per_id =
      get_or<std::size_t>(j, "clothing_sets_per_id", w.clothing_sets_per_id);
  w.clips_per_set = get_or<std::size_t>(j, "clips_per_set", w.clips_per_set);
  w.frames_per_clip = get_or<std::size_t>(j, "frames_per_clip", w.frames_per_clip);
  w.clothing_scale = get_or<double>(j, "clothing_scale", w.clothing_scale);
  w.view_noise = get_or<double>(j, "view_noise", w.view_noise);
  w.frame_noise = get_or<double>(j, "frame_noise", w.frame_noise);
  w.latent_radius = get_or<double>(j, "latent_radius", w.latent_radius);
  w.min_latent_separation =
      get_or<double>(j, "min_latent_separation", w.min_latent_separation);
  w.n_descriptors = get_or<std::size_t>(j, "n_descriptors", w.n_descriptors);
  w.seed = seed;
  validate_world_config(w);
  return w;
}

inline TrainConfig parse_train(const nlohmann::json& j, std::uint64_t seed) {
  check_keys(j, "train config", {},
             {"learning_rate", "weight_decay", "margin", "identities_per_batch",
              "samples_per_identity", "epochs", "aux_weight", "head_kind",
              "embed_dim", "encoder_dims", "hardest_positive"});
  TrainConfig c;
  c.learning_rate = get_or<double>(j, "learning_rate", c.learning_rate);
  c.weight_decay = get_or<double>(j, "weight_decay", c.weight_decay);
  c.margin = get_or<double>(j, "margin", c.margin);
  c.identities_per_batch =
      get_or<std::size_t>(j, "identities_per_batch", c.identities_per_batch);
  c.samples_per_identity =
      get_or<std::size_t>(j, "samples_per_identity", c.samples_per_identity);
  c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
  c.aux_weight = get_or<double>(j, "aux_weight", c.aux_weight);
  if (j.contains("head_kind"))
    c.head_kind = head_kind_from_string(j["head_kind"].get<std::string>());
  c.embed_dim = get_or<std::size_t>(j, "embed_dim", c.embed_dim);
  if (j.contains("encoder_dims") && !j["encoder_dims"].is_null())
    c.encoder_dims = j["encoder_dims"].get<std::vector<std::size_t>>();
  c.hardest_positive = get_or<bool>(j, "hardest_positive", c.hardest_positive);
  c.seed = seed;
  validate_train_config(c);
  return c;
}

}  // namespace cfg

// ---------------------------------------------------------------------------
// Provenance
// ---------------------------------------------------------------------------

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

inline Provenance make_provenance(const nlohmann::json& effective_config,
                                  std::uint64_t seed) {
  return {to_hex(fnv1a64(effective_config.dump())), seed};
}

inline nlohmann::json provenance_json(const Provenance& p) {
  return {{"config_hash", p.config_hash}, {"seed", p.seed}, {"version", kVersion}};
}

inline void write_provenance(const Provenance& p, const std::string& stage,
                             const std::filesystem::path& out_dir) {
  nlohmann::json j = provenance_json(p);
  j["stage"] = stage;
  std::ofstream out(out_dir / (stage + "_provenance.json"), std::ios::binary);
  require(out.good(), "cannot write provenance record");
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Shared pipeline pieces
// ---------------------------------------------------------------------------

struct CommonOptions {
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> metric;
  std::optional<std::string> subset;
};

namespace detail {

inline std::filesystem::path resolve_out_dir(const nlohmann::json& config,
                                             const CommonOptions& opt) {
  std::string dir = opt.out_dir.value_or(cfg::get_or<std::string>(config, "out", ""));
  require(!dir.empty(), "no output directory: set \"out\" in the config or pass --out");
  std::filesystem::create_directories(dir);
  return dir;
}

inline std::uint64_t resolve_seed(const nlohmann::json& config,
                                  const CommonOptions& opt) {
  return opt.seed.value_or(cfg::get_or<std::uint64_t>(config, "seed", 0));
}

inline unsigned resolve_workers(const nlohmann::json& config, const CommonOptions& opt) {
  return opt.workers.value_or(cfg::get_or<unsigned>(config, "workers", 1));
}

inline Corpus load_corpus_section(const nlohmann::json& config, bool need_vectors) {
  require(config.contains("corpus"), "config: missing \"corpus\" section");
  const auto& c = config["corpus"];
  cfg::check_keys(c, "corpus section", {"manifest"}, {"embeddings"});
  Corpus meta = load_manifest(c["manifest"].get<std::string>());
  if (!need_vectors) return meta;
  require(c.contains("embeddings"),
          "config: corpus section needs an \"embeddings\" path for this stage");
  return load_embeddings(c["embeddings"].get<std::string>(), meta);
}

}  // namespace detail

/// Row-subset of a score matrix; used for the named probe partitions.
inline ScoreMatrix submatrix_rows(const ScoreMatrix& m,
                                  const std::vector<std::size_t>& rows) {
  ScoreMatrix out;
  out.gallery = m.gallery;
  out.gallery_pos = m.gallery_pos;
  out.metric = m.metric;
  for (std::size_t r : rows) {
    out.probes.push_back(m.probes.at(r));
    out.scores.insert(out.scores.end(), m.scores.begin() + r * m.gallery.size(),
                      m.scores.begin() + (r + 1) * m.gallery.size());
  }
  return out;
}

struct EvalOutcome {
  // subset name -> report; empty subsets are listed separately
  std::vector<std::pair<std::string, MetricsReport>> reports;
  std::vector<std::string> empty_subsets;
  ScoreMatrix matrix;  // full probe set
};

/// split -> gallery templates and probe-clip embeddings -> scores -> metrics,
/// once for the full probe set and once per requested named subset.
inline EvalOutcome run_eval_pipeline(const Corpus& corpus, const SplitResult& split,
                                     const HeadParams* head, ScoreMetric metric,
                                     const std::vector<std::string>& subsets,
                                     unsigned workers,
                                     const AggregationOptions& agg = {}) {
  const Corpus embedded = head ? apply_head(corpus, *head) : corpus;
  const auto gallery = build_gallery_templates(embedded, split.gallery, agg);
  const auto probes = build_probe_embeddings(embedded, split.probe, agg);
  ScoreMatrixOptions sopt;
  sopt.metric = metric;
  sopt.workers = workers;
  EvalOutcome out;
  out.matrix = score_matrix(probes, gallery, sopt);

  for (const auto& name : subsets) {
    if (name == "all") {
      out.reports.emplace_back("all", report(out.matrix));
      continue;
    }
    const TagPredicate pred = named_tag_predicate(name);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < out.matrix.probes.size(); ++i)
      if (pred(out.matrix.probes[i].tags)) rows.push_back(i);
    if (rows.empty()) {
      out.empty_subsets.push_back(name);
      continue;
    }
    out.reports.emplace_back(name, report(submatrix_rows(out.matrix, rows)));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline void cmd_synth(const std::string& config_path, const CommonOptions& opt) {
  nlohmann::json config = cfg::load(config_path);
  cfg::check_keys(config, "synth config", {}, {"world", "seed", "out", "workers"});
  const auto out_dir = detail::resolve_out_dir(config, opt);
  const std::uint64_t seed = detail::resolve_seed(config, opt);
  const WorldConfig world =
      cfg::parse_world(config.contains("world") ? config["world"] : nlohmann::json::object(),
                       seed);

  nlohmann::json effective = config;
  effective["seed"] = seed;
  const Provenance prov = make_provenance(effective, seed);

  auto [corpus, gt] = generate(world);
  save_manifest(corpus, (out_dir / "manifest.jsonl").string());
  save_embeddings(corpus, (out_dir / "embeddings.bide").string());
  write_ground_truth_json(gt, (out_dir / "ground_truth.json").string());
  write_provenance(prov, "synth", out_dir);
}

inline void cmd_split(const std::string& config_path, const CommonOptions& opt) {
  nlohmann::json config = cfg::load(config_path);
  cfg::check_keys(config, "split config", {"corpus", "split"}, {"seed", "out", "workers"});
  cfg::check_keys(config["split"], "split section", {"kind"}, {"predicate"});
  const auto out_dir = detail::resolve_out_dir(config, opt);
  const std::uint64_t seed = detail::resolve_seed(config, opt);
  const Provenance prov = make_provenance(config, seed);

  const Corpus corpus = detail::load_corpus_section(config, /*need_vectors=*/false);
  const SplitKind kind =
      split_kind_from_string(config["split"]["kind"].get<std::string>());
  SplitResult split;
  switch (kind) {
    case SplitKind::half_temporal:
      split = half_split_temporal(corpus);
      break;
    case SplitKind::clothing_disjoint:
      split = clothing_disjoint_split(corpus);
      break;
    case SplitKind::tag_filter: {
      require(config["split"].contains("predicate"),
              "split config: tag_filter needs a \"predicate\" name");
      split = tag_filter_split(
          corpus, named_tag_predicate(config["split"]["predicate"].get<std::string>()));
      break;
    }
  }
  write_split_json(split, (out_dir / "split.json").string());
  write_provenance(prov, "split", out_dir);
}

inline void cmd_train(const std::string& config_path, const CommonOptions& opt) {
  nlohmann::json config = cfg::load(config_path);
  cfg::check_keys(config, "train config", {"corpus"},
                  {"train", "descriptors", "seed", "out", "workers"});
  const auto out_dir = detail::resolve_out_dir(config, opt);
  const std::uint64_t seed = detail::resolve_seed(config, opt);
  const TrainConfig tc =
      cfg::parse_train(config.contains("train") ? config["train"] : nlohmann::json::object(),
                       seed);

  nlohmann::json effective = config;
  effective["seed"] = seed;
  const Provenance prov = make_provenance(effective, seed);

  const Corpus corpus = detail::load_corpus_section(config, /*need_vectors=*/true);
  const Mat features = features_from_corpus(corpus);
  std::vector<std::string> labels;
  labels.reserve(corpus.records.size());
  for (const auto& rec : corpus.records) labels.push_back(rec.key.identity_id);

  Mat descriptors;
  if (config.contains("descriptors") && !config["descriptors"].is_null()) {
    const GroundTruth gt =
        read_ground_truth_json(config["descriptors"].get<std::string>());
    descriptors = record_descriptors(corpus, gt);
  }

  const TrainResult result =
      train(features, labels, descriptors.empty() ? nullptr : &descriptors, tc);
  save_head(result.head, (out_dir / "head.bidh").string());
  write_train_log_jsonl(result.log, (out_dir / "train_log.jsonl").string());
  write_provenance(prov, "train", out_dir);
}

inline void cmd_eval(const std::string& config_path, const CommonOptions& opt) {
  nlohmann::json config = cfg::load(config_path);
  cfg::check_keys(config, "eval config", {"corpus", "split"},
                  {"head", "metric", "subsets", "export_scores", "aggregation", "seed",
                   "out", "workers"});
  const auto out_dir = detail::resolve_out_dir(config, opt);
  const std::uint64_t seed = detail::resolve_seed(config, opt);
  const unsigned workers = detail::resolve_workers(config, opt);

  const ScoreMetric metric = score_metric_from_string(
      opt.metric.value_or(cfg::get_or<std::string>(config, "metric", "cosine")));
  std::vector<std::string> subsets =
      cfg::get_or<std::vector<std::string>>(config, "subsets", {"all"});
  if (opt.subset) subsets = {*opt.subset};

  AggregationOptions agg;
  if (config.contains("aggregation")) {
    cfg::check_keys(config["aggregation"], "aggregation section", {},
                    {"normalize_inputs", "normalize_output"});
    agg.normalize_inputs =
        cfg::get_or<bool>(config["aggregation"], "normalize_inputs", false);
    agg.normalize_output =
        cfg::get_or<bool>(config["aggregation"], "normalize_output", false);
  }

  nlohmann::json effective = config;
  effective["metric"] = to_string(metric);
  effective["subsets"] = subsets;
  const Provenance prov = make_provenance(effective, seed);

  const Corpus corpus = detail::load_corpus_section(config, /*need_vectors=*/true);
  const SplitResult split = read_split_json(config["split"].get<std::string>());

  std::optional<HeadParams> head;
  if (config.contains("head") && !config["head"].is_null())
    head = load_head(config["head"].get<std::string>());

  const EvalOutcome outcome = run_eval_pipeline(
      corpus, split, head ? &*head : nullptr, metric, subsets, workers, agg);

  for (const auto& [name, rep] : outcome.reports) {
    nlohmann::json j;
    j["subset"] = name;
    j["metric"] = to_string(metric);
    j["metrics"] = report_to_json(rep);
    j["provenance"] = provenance_json(prov);
    std::ofstream out(out_dir / ("report_" + name + ".json"), std::ios::binary);
    require(out.good(), "cannot write report for subset " + name);
    out << j.dump(2) << "\n";
    write_cmc_csv(rep.cmc, (out_dir / ("cmc_" + name + ".csv")).string());
    write_roc_csv(rep.roc, (out_dir / ("roc_" + name + ".csv")).string());
  }
  for (const auto& name : outcome.empty_subsets) {
    nlohmann::json j;
    j["subset"] = name;
    j["empty"] = true;
    j["provenance"] = provenance_json(prov);
    std::ofstream out(out_dir / ("report_" + name + ".json"), std::ios::binary);
    out << j.dump(2) << "\n";
  }
  if (cfg::get_or<bool>(config, "export_scores", false)) {
    write_scores_csv(outcome.matrix, (out_dir / "scores_all.csv").string());
    write_scores_meta_json(outcome.matrix, (out_dir / "scores_all.meta.json").string());
  }
  write_provenance(prov, "eval", out_dir);
}

// ---------------------------------------------------------------------------
// Ablation grid
// ---------------------------------------------------------------------------

/// The four scalar columns of the ablation table.
struct AblationMetrics {
  double tar_at_far_1e3 = 0.0;
  double tar_at_far_1e4 = 0.0;
  double rank1 = 0.0;
  double rank20 = 0.0;
};

struct AblationCell {
  std::string label;
  std::string source;  // "fixed" or "run"
  AblationMetrics metrics;
};

struct AblationDelta {
  std::string label;
  std::string minuend;
  std::string subtrahend;
  AblationMetrics delta;
};

inline AblationMetrics ablation_metrics_from_report(const MetricsReport& r) {
  return {r.tar_at_far_1e3, r.tar_at_far_1e4, r.rank1, r.rank20};
}

/// Delta rows are plain cell-pair differences, one per scalar metric.
inline AblationMetrics ablation_delta(const AblationMetrics& minuend,
                                      const AblationMetrics& subtrahend) {
  return {minuend.tar_at_far_1e3 - subtrahend.tar_at_far_1e3,
          minuend.tar_at_far_1e4 - subtrahend.tar_at_far_1e4,
          minuend.rank1 - subtrahend.rank1, minuend.rank20 - subtrahend.rank20};
}

namespace detail {

inline std::string signed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.4f", v);
  return std::string(buf);
}

}  // namespace detail

inline void cmd_ablate(const std::string& config_path, const CommonOptions& opt) {
  nlohmann::json config = cfg::load(config_path);
  cfg::check_keys(config, "ablate config", {"cells", "deltas"},
                  {"seed", "out", "workers", "metric"});
  const auto out_dir = detail::resolve_out_dir(config, opt);
  const std::uint64_t seed = detail::resolve_seed(config, opt);
  const unsigned workers = detail::resolve_workers(config, opt);
  const ScoreMetric metric = score_metric_from_string(
      opt.metric.value_or(cfg::get_or<std::string>(config, "metric", "cosine")));
  const Provenance prov = make_provenance(config, seed);

  std::vector<AblationCell> cells;
  std::map<std::string, AblationMetrics> by_label;
  for (const auto& cj : config["cells"]) {
    cfg::check_keys(cj, "ablation cell", {"label"}, {"fixed", "run"});
    AblationCell cell;
    cell.label = cj["label"].get<std::string>();
    require(by_label.count(cell.label) == 0,
            "ablation: duplicate cell label \"" + cell.label + "\"");
    if (cj.contains("fixed")) {
      cfg::check_keys(cj["fixed"], "fixed cell metrics",
                      {"tar_at_far_1e3", "tar_at_far_1e4", "rank1", "rank20"}, {});
      cell.source = "fixed";
      cell.metrics = {cj["fixed"]["tar_at_far_1e3"].get<double>(),
                      cj["fixed"]["tar_at_far_1e4"].get<double>(),
                      cj["fixed"]["rank1"].get<double>(),
                      cj["fixed"]["rank20"].get<double>()};
    } else if (cj.contains("run")) {
      cfg::check_keys(cj["run"], "run cell", {}, {"world", "train", "seed"});
      cell.source = "run";
      const std::uint64_t cell_seed = cfg::get_or<std::uint64_t>(cj["run"], "seed", seed);
      try {
        const WorldConfig world = cfg::parse_world(
            cj["run"].contains("world") ? cj["run"]["world"] : nlohmann::json::object(),
            cell_seed);
        const TrainConfig tc = cfg::parse_train(
            cj["run"].contains("train") ? cj["run"]["train"] : nlohmann::json::object(),
            cell_seed);
        auto [corpus, gt] = generate(world);
        const SplitResult split = clothing_disjoint_split(corpus);
        const Mat features = features_from_corpus(corpus);
        std::vector<std::string> labels;
        for (const auto& rec : corpus.records) labels.push_back(rec.key.identity_id);
        const Mat descriptors = record_descriptors(corpus, gt);
        const TrainResult tr = train(features, labels, &descriptors, tc);
        const EvalOutcome outcome =
            run_eval_pipeline(corpus, split, &tr.head, metric, {"all"}, workers);
        cell.metrics = ablation_metrics_from_report(outcome.reports.front().second);
      } catch (const Error& e) {
        fail("ablation cell \"" + cell.label + "\" failed: " + e.what());
      }
    } else {
      fail("ablation cell \"" + cell.label + "\" needs either \"fixed\" or \"run\"");
    }
    by_label[cell.label] = cell.metrics;
    cells.push_back(std::move(cell));
  }

  std::vector<AblationDelta> deltas;
  for (const auto& dj : config["deltas"]) {
    cfg::check_keys(dj, "delta row", {"label", "minuend", "subtrahend"}, {});
    AblationDelta d;
    d.label = dj["label"].get<std::string>();
    d.minuend = dj["minuend"].get<std::string>();
    d.subtrahend = dj["subtrahend"].get<std::string>();
    require(by_label.count(d.minuend) > 0,
            "delta row \"" + d.label + "\" references unknown cell \"" + d.minuend + "\"");
    require(by_label.count(d.subtrahend) > 0,
            "delta row \"" + d.label + "\" references unknown cell \"" + d.subtrahend +
                "\"");
    d.delta = ablation_delta(by_label[d.minuend], by_label[d.subtrahend]);
    deltas.push_back(std::move(d));
  }

  nlohmann::json j;
  j["provenance"] = provenance_json(prov);
  nlohmann::json jcells = nlohmann::json::array();
  for (const auto& c : cells)
    jcells.push_back({{"label", c.label},
                      {"source", c.source},
                      {"tar_at_far_1e3", c.metrics.tar_at_far_1e3},
                      {"tar_at_far_1e4", c.metrics.tar_at_far_1e4},
                      {"rank1", c.metrics.rank1},
                      {"rank20", c.metrics.rank20}});
  j["cells"] = std::move(jcells);
  nlohmann::json jdeltas = nlohmann::json::array();
  for (const auto& d : deltas)
    jdeltas.push_back({{"label", d.label},
                       {"minuend", d.minuend},
                       {"subtrahend", d.subtrahend},
                       {"tar_at_far_1e3", d.delta.tar_at_far_1e3},
                       {"tar_at_far_1e4", d.delta.tar_at_far_1e4},
                       {"rank1", d.delta.rank1},
                       {"rank20", d.delta.rank20}});
  j["deltas"] = std::move(jdeltas);
  {
    std::ofstream out(out_dir / "ablation.json", std::ios::binary);
    require(out.good(), "cannot write ablation.json");
    out << j.dump(2) << "\n";
  }
  {
    std::ofstream out(out_dir / "ablation.csv", std::ios::binary);
    require(out.good(), "cannot write ablation.csv");
    out << "label,tar_at_far_1e3,tar_at_far_1e4,rank1,rank20\n";
    for (const auto& c : cells)
      out << c.label << "," << format_double(c.metrics.tar_at_far_1e3) << ","
          << format_double(c.metrics.tar_at_far_1e4) << ","
          << format_double(c.metrics.rank1) << "," << format_double(c.metrics.rank20)
          << "\n";
    for (const auto& d : deltas)
      out << d.label << "," << detail::signed4(d.delta.tar_at_far_1e3) << ","
          << detail::signed4(d.delta.tar_at_far_1e4) << ","
          << detail::signed4(d.delta.rank1) << "," << detail::signed4(d.delta.rank20)
          << "\n";
  }
  write_provenance(prov, "ablate", out_dir);
}

}  // namespace bide
