#include <catch_amalgamated.hpp>

#include "bide/templates.hpp"
#include "test_util.hpp"

using namespace bide;

namespace {

Corpus tiny_corpus(const std::vector<std::vector<double>>& vectors,
                   const std::vector<std::string>& identities,
                   const std::vector<std::string>& clips = {}) {
  Corpus corpus;
  corpus.dim = vectors.empty() ? 0 : vectors[0].size();
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    EmbeddingRecord rec;
    rec.key.identity_id = identities[i];
    rec.key.media_id = "m" + std::to_string(i);
    if (!clips.empty()) {
      rec.key.clip_id = clips[i];
      rec.key.frame_index = i;
    }
    rec.tags.clothing_set_id = "s0";
    rec.vector = vectors[i];
    corpus.records.push_back(std::move(rec));
  }
  corpus.rebuild_index();
  return corpus;
}

std::vector<std::size_t> all_rows(const Corpus& c) {
  std::vector<std::size_t> rows(c.records.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return rows;
}

ProbeEmbedding probe_of(const std::string& id, std::vector<double> v) {
  ProbeEmbedding p;
  p.probe_id = id + "/c0";
  p.true_identity = id;
  p.vector = std::move(v);
  return p;
}

GalleryTemplate template_of(const std::string& id, std::vector<double> v) {
  GalleryTemplate t;
  t.identity_id = id;
  t.vector = std::move(v);
  t.source_count = 1;
  return t;
}

}  // namespace

TEST_CASE("gallery template is the mean of its records") {
  const Corpus corpus = tiny_corpus({{1.0, 0.0}, {0.0, 1.0}}, {"a", "a"});
  const auto templates = build_gallery_templates(corpus, all_rows(corpus));
  REQUIRE(templates.size() == 1);
  CHECK(templates[0].vector == std::vector<double>{0.5, 0.5});
  CHECK(templates[0].source_count == 2);
}

TEST_CASE("single-record template equals the record") {
  const Corpus corpus = tiny_corpus({{3.0, -1.0, 2.0}}, {"a"});
  const auto templates = build_gallery_templates(corpus, all_rows(corpus));
  REQUIRE(templates.size() == 1);
  CHECK(templates[0].vector == corpus.records[0].vector);
}

TEST_CASE("template mean matches the naive summation oracle") {
  // Independent oracle: plain sum then divide, no compensation.
  Rng rng(21);
  std::vector<std::vector<double>> vecs(3, std::vector<double>(8));
  for (auto& v : vecs)
    for (auto& x : v) x = rng.normal();
  const Corpus corpus = tiny_corpus(vecs, {"a", "a", "a"});
  const auto templates = build_gallery_templates(corpus, all_rows(corpus));
  REQUIRE(templates.size() == 1);
  for (std::size_t k = 0; k < 8; ++k) {
    double naive = 0.0;
    for (const auto& v : vecs) naive += v[k];
    naive /= 3.0;
    CHECK(std::abs(templates[0].vector[k] - naive) < 1e-15);
  }
}

TEST_CASE("missing required identity is an error") {
  const Corpus corpus = tiny_corpus({{1.0, 0.0}}, {"a"});
  const std::vector<std::string> required{"a", "b"};
  CHECK_THROWS_WITH(
      build_gallery_templates(corpus, all_rows(corpus), required),
      Catch::Matchers::ContainsSubstring("zero selected records"));
}

TEST_CASE("probe embeddings: one per clip") {
  const Corpus corpus = tiny_corpus(
      {{1.0}, {2.0}, {3.0}, {4.0}, {5.0}, {6.0}}, {"a", "a", "a", "a", "a", "a"},
      {"c0", "c0", "c0", "c1", "c1", "c1"});
  const auto probes = build_probe_embeddings(corpus, all_rows(corpus));
  REQUIRE(probes.size() == 2);
  CHECK(probes[0].probe_id == "a/c0");
  CHECK(probes[0].vector[0] == 2.0);
  CHECK(probes[1].vector[0] == 5.0);
}

TEST_CASE("single-frame probe equals the frame vector") {
  const Corpus corpus = tiny_corpus({{7.0, 8.0}}, {"a"}, {"c0"});
  const auto probes = build_probe_embeddings(corpus, all_rows(corpus));
  REQUIRE(probes.size() == 1);
  CHECK(probes[0].vector == corpus.records[0].vector);
}

TEST_CASE("probe mean matches brute-force frame average") {
  Rng rng(33);
  std::vector<std::vector<double>> vecs(5, std::vector<double>(6));
  for (auto& v : vecs)
    for (auto& x : v) x = rng.normal();
  const Corpus corpus =
      tiny_corpus(vecs, {"a", "a", "a", "a", "a"}, {"c0", "c0", "c0", "c0", "c0"});
  const auto probes = build_probe_embeddings(corpus, all_rows(corpus));
  REQUIRE(probes.size() == 1);
  for (std::size_t k = 0; k < 6; ++k) {
    double naive = 0.0;
    for (const auto& v : vecs) naive += v[k];
    naive /= 5.0;
    CHECK(std::abs(probes[0].vector[k] - naive) < 1e-12);
  }
}

TEST_CASE("still image routed to probe builder is an error") {
  const Corpus corpus = tiny_corpus({{1.0}}, {"a"});  // no clip ids
  CHECK_THROWS_WITH(build_probe_embeddings(corpus, all_rows(corpus)),
                    Catch::Matchers::ContainsSubstring("still image"));
}

TEST_CASE("l2_normalize") {
  const std::vector<double> v{3.0, 4.0};
  CHECK(l2_normalize(v) == std::vector<double>{0.6, 0.8});

  const std::vector<double> unit{1.0, 0.0, 0.0};
  CHECK(l2_normalize(unit) == unit);

  Rng rng(2);
  std::vector<double> r(32);
  for (auto& x : r) x = rng.normal();
  CHECK(std::abs(l2_norm(l2_normalize(r)) - 1.0) < 1e-12);

  CHECK_THROWS_AS(l2_normalize(std::vector<double>{0.0, 0.0}), Error);
}

TEST_CASE("cosine scores for identical and orthogonal vectors") {
  const auto probes = std::vector<ProbeEmbedding>{probe_of("a", {1.0, 0.0})};
  const auto gallery = std::vector<GalleryTemplate>{template_of("a", {1.0, 0.0}),
                                                    template_of("b", {0.0, 1.0})};
  const ScoreMatrix m = score_matrix(probes, gallery);
  CHECK(m.at(0, 0) == 1.0);
  CHECK(m.at(0, 1) == 0.0);
}

TEST_CASE("score matrix matches the scalar double-loop oracle") {
  Rng rng(55);
  std::vector<ProbeEmbedding> probes;
  std::vector<GalleryTemplate> gallery;
  const std::size_t d = 24;
  for (int i = 0; i < 5; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    probes.push_back(probe_of("g" + std::to_string(i % 3), std::move(v)));
  }
  for (int j = 0; j < 3; ++j) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    gallery.push_back(template_of("g" + std::to_string(j), std::move(v)));
  }

  for (ScoreMetric metric : {ScoreMetric::cosine, ScoreMetric::negative_euclidean}) {
    ScoreMatrixOptions opt;
    opt.metric = metric;
    const ScoreMatrix m = score_matrix(probes, gallery, opt);
    for (std::size_t i = 0; i < probes.size(); ++i)
      for (std::size_t j = 0; j < gallery.size(); ++j) {
        double expect = 0.0;
        if (metric == ScoreMetric::cosine) {
          double pp = 0.0, gg = 0.0, pg = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            pp += probes[i].vector[k] * probes[i].vector[k];
            gg += gallery[j].vector[k] * gallery[j].vector[k];
            pg += probes[i].vector[k] * gallery[j].vector[k];
          }
          expect = pg / (std::sqrt(pp) * std::sqrt(gg));
        } else {
          double acc = 0.0;
          for (std::size_t k = 0; k < d; ++k) {
            const double diff = probes[i].vector[k] - gallery[j].vector[k];
            acc += diff * diff;
          }
          expect = -std::sqrt(acc);
        }
        CHECK(std::abs(m.at(i, j) - expect) < 1e-12);
      }
  }
}

TEST_CASE("open-set probe is rejected at construction") {
  const auto probes = std::vector<ProbeEmbedding>{probe_of("zz", {1.0, 0.0})};
  const auto gallery = std::vector<GalleryTemplate>{template_of("a", {1.0, 0.0})};
  CHECK_THROWS_WITH(score_matrix(probes, gallery),
                    Catch::Matchers::ContainsSubstring("open-set"));
}

TEST_CASE("dimension mismatch is rejected") {
  const auto probes = std::vector<ProbeEmbedding>{probe_of("a", {1.0, 0.0, 0.0})};
  const auto gallery = std::vector<GalleryTemplate>{template_of("a", {1.0, 0.0})};
  CHECK_THROWS_WITH(score_matrix(probes, gallery),
                    Catch::Matchers::ContainsSubstring("dimension"));
}

TEST_CASE("template building is permutation invariant within 1e-12") {
  Rng rng(77);
  const std::size_t n = 64, d = 48;
  std::vector<std::vector<double>> vecs(n, std::vector<double>(d));
  for (auto& v : vecs)
    for (auto& x : v) x = rng.normal() * 1000.0;
  std::vector<std::string> ids(n, "a");
  const Corpus forward_order = tiny_corpus(vecs, ids);

  std::vector<std::vector<double>> shuffled = vecs;
  rng.shuffle(shuffled);
  const Corpus shuffled_order = tiny_corpus(shuffled, ids);

  const auto t1 = build_gallery_templates(forward_order, all_rows(forward_order));
  const auto t2 = build_gallery_templates(shuffled_order, all_rows(shuffled_order));
  for (std::size_t k = 0; k < d; ++k)
    CHECK(std::abs(t1[0].vector[k] - t2[0].vector[k]) <=
          1e-12 * std::max(1.0, std::abs(t1[0].vector[k])));
}

TEST_CASE("self-score is maximal for both metrics") {
  Rng rng(13);
  const std::size_t d = 16;
  std::vector<GalleryTemplate> gallery;
  for (int j = 0; j < 10; ++j) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    gallery.push_back(template_of("g" + std::to_string(j), std::move(v)));
  }
  std::vector<ProbeEmbedding> probes;
  for (int j = 0; j < 10; ++j)
    probes.push_back(probe_of("g" + std::to_string(j), gallery[j].vector));

  for (ScoreMetric metric : {ScoreMetric::cosine, ScoreMetric::negative_euclidean}) {
    ScoreMatrixOptions opt;
    opt.metric = metric;
    const ScoreMatrix m = score_matrix(probes, gallery, opt);
    for (std::size_t i = 0; i < probes.size(); ++i)
      for (std::size_t j = 0; j < gallery.size(); ++j)
        if (i != j) CHECK(m.at(i, i) >= m.at(i, j));
  }
}

TEST_CASE("blocked and parallel scoring equal the naive loop") {
  Rng rng(91);
  const std::size_t d = 40;
  std::vector<ProbeEmbedding> probes;
  std::vector<GalleryTemplate> gallery;
  for (int j = 0; j < 17; ++j) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    gallery.push_back(template_of("g" + std::to_string(j), std::move(v)));
  }
  for (int i = 0; i < 23; ++i) {
    std::vector<double> v(d);
    for (auto& x : v) x = rng.normal();
    probes.push_back(probe_of("g" + std::to_string(i % 17), std::move(v)));
  }

  ScoreMatrixOptions naive;
  naive.block_cols = 1u << 20;
  naive.workers = 1;
  const ScoreMatrix base = score_matrix(probes, gallery, naive);

  ScoreMatrixOptions tiled;
  tiled.block_cols = 3;
  tiled.workers = 4;
  const ScoreMatrix fancy = score_matrix(probes, gallery, tiled);

  REQUIRE(base.scores.size() == fancy.scores.size());
  for (std::size_t i = 0; i < base.scores.size(); ++i)
    CHECK(std::abs(base.scores[i] - fancy.scores[i]) <= 1e-10);
}

TEST_CASE("score CSV and metadata export") {
  testutil::TempDir dir("scores");
  const auto probes = std::vector<ProbeEmbedding>{probe_of("a", {1.0, 0.0}),
                                                  probe_of("b", {0.0, 1.0})};
  const auto gallery = std::vector<GalleryTemplate>{template_of("a", {1.0, 0.0}),
                                                    template_of("b", {0.0, 1.0})};
  const ScoreMatrix m = score_matrix(probes, gallery);
  write_scores_csv(m, dir.file("s.csv"));
  write_scores_meta_json(m, dir.file("s.meta.json"));

  const std::string csv = testutil::slurp(dir.file("s.csv"));
  CHECK(csv.rfind("probe_id,a,b\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);

  const auto meta = nlohmann::json::parse(testutil::slurp(dir.file("s.meta.json")));
  CHECK(meta["metric"] == "cosine");
  CHECK(meta["n_probes"] == 2);
  CHECK(meta["gallery"].size() == 2);
}
