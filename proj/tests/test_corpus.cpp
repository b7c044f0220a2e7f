#include <catch_amalgamated.hpp>

#include "bide/corpus.hpp"
#include "test_util.hpp"

using namespace bide;
using testutil::TempDir;

namespace {

const char* kLine1 =
    R"({"identity_id":"a","media_id":"m1","clip_id":"c1","frame_index":0,)"
    R"("clothing_set_id":"s1","face_visibility":"included","range_band":"close","platform":"ground"})";
const char* kLine2 =
    R"({"identity_id":"b","media_id":"m2","clip_id":null,"frame_index":null,)"
    R"("clothing_set_id":"s2","face_visibility":"restricted","range_band":"long_range","platform":"uav"})";

}  // namespace

TEST_CASE("manifest with distinct keys loads in order") {
  TempDir dir("manifest");
  testutil::spit(dir.file("m.jsonl"), std::string(kLine1) + "\n" + kLine2 + "\n");
  const Corpus corpus = load_manifest(dir.file("m.jsonl"));
  REQUIRE(corpus.records.size() == 2);
  CHECK(corpus.records[0].key.identity_id == "a");
  CHECK(corpus.records[0].key.clip_id == "c1");
  CHECK(corpus.records[0].key.frame_index == 0);
  CHECK(corpus.records[0].tags.face_visibility == FaceVisibility::included);
  CHECK(corpus.records[1].key.identity_id == "b");
  CHECK_FALSE(corpus.records[1].key.clip_id.has_value());
  CHECK(corpus.records[1].tags.platform == Platform::uav);
  CHECK(corpus.identity_index.at("a") == std::vector<std::size_t>{0});
}

TEST_CASE("duplicate media key is rejected") {
  TempDir dir("manifest_dup");
  testutil::spit(dir.file("m.jsonl"), std::string(kLine1) + "\n" + kLine1 + "\n");
  CHECK_THROWS_WITH(load_manifest(dir.file("m.jsonl")),
                    Catch::Matchers::ContainsSubstring("duplicate media key") &&
                        Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("unknown enum value is rejected with its line number") {
  TempDir dir("manifest_enum");
  std::string bad = kLine1;
  const auto pos = bad.find("included");
  bad.replace(pos, 8, "blurred");
  testutil::spit(dir.file("m.jsonl"), bad + "\n");
  CHECK_THROWS_WITH(load_manifest(dir.file("m.jsonl")),
                    Catch::Matchers::ContainsSubstring("blurred") &&
                        Catch::Matchers::ContainsSubstring("line 1"));
}

TEST_CASE("malformed line reports its line number") {
  TempDir dir("manifest_bad");
  testutil::spit(dir.file("m.jsonl"), std::string(kLine1) + "\n{oops\n");
  CHECK_THROWS_WITH(load_manifest(dir.file("m.jsonl")),
                    Catch::Matchers::ContainsSubstring("line 2"));
}

TEST_CASE("missing tags default to unknown") {
  TempDir dir("manifest_defaults");
  testutil::spit(dir.file("m.jsonl"), R"({"identity_id":"a","media_id":"m1"})"
                                      "\n");
  const Corpus corpus = load_manifest(dir.file("m.jsonl"));
  REQUIRE(corpus.records.size() == 1);
  CHECK(corpus.records[0].tags.face_visibility == FaceVisibility::unknown);
  CHECK(corpus.records[0].tags.range_band == RangeBand::unknown);
  CHECK(corpus.records[0].tags.platform == Platform::unknown);
  CHECK(corpus.records[0].tags.clothing_set_id.empty());
}

TEST_CASE("embedding file attaches rows to records") {
  TempDir dir("embed");
  Corpus meta;
  for (int i = 0; i < 2; ++i) {
    EmbeddingRecord rec;
    rec.key.identity_id = "a";
    rec.key.media_id = "m" + std::to_string(i);
    meta.records.push_back(rec);
  }
  meta.rebuild_index();

  Corpus full = meta;
  full.dim = 4;
  full.records[0].vector = {1.0, 2.0, 3.0, 4.0};
  full.records[1].vector = {5.0, 6.0, 7.0, 8.0};
  save_embeddings(full, dir.file("e.bide"));

  const Corpus loaded = load_embeddings(dir.file("e.bide"), meta);
  REQUIRE(loaded.dim == 4);
  CHECK(loaded.records[0].vector == std::vector<double>{1.0, 2.0, 3.0, 4.0});
  CHECK(loaded.records[1].vector == std::vector<double>{5.0, 6.0, 7.0, 8.0});
}

TEST_CASE("embedding count mismatch is an error") {
  TempDir dir("embed_count");
  Corpus three = testutil::make_corpus(1, 1, 3, 4, 7);
  save_embeddings(three, dir.file("e.bide"));
  Corpus two = three;
  two.records.pop_back();
  two.rebuild_index();
  CHECK_THROWS_WITH(load_embeddings(dir.file("e.bide"), two),
                    Catch::Matchers::ContainsSubstring("count mismatch"));
}

TEST_CASE("non-finite payload is an error") {
  TempDir dir("embed_nan");
  Corpus corpus = testutil::make_corpus(1, 1, 1, 2, 7);
  corpus.records[0].vector = {1.0, std::numeric_limits<double>::quiet_NaN()};
  // save_embeddings happily casts; the check happens on load
  save_embeddings(corpus, dir.file("e.bide"));
  Corpus meta = corpus;
  for (auto& r : meta.records) r.vector.clear();
  meta.dim = 0;
  CHECK_THROWS_WITH(load_embeddings(dir.file("e.bide"), meta),
                    Catch::Matchers::ContainsSubstring("non-finite"));
}

TEST_CASE("bad magic and version are rejected") {
  TempDir dir("embed_magic");
  testutil::spit(dir.file("bad.bide"), "NOPE....................");
  Corpus meta;
  CHECK_THROWS_WITH(load_embeddings(dir.file("bad.bide"), meta),
                    Catch::Matchers::ContainsSubstring("magic"));

  Corpus corpus = testutil::make_corpus(1, 1, 1, 2, 7);
  save_embeddings(corpus, dir.file("v.bide"));
  std::string bytes = testutil::slurp(dir.file("v.bide"));
  bytes[4] = 9;  // version field
  testutil::spit(dir.file("v.bide"), bytes);
  Corpus meta1 = corpus;
  for (auto& r : meta1.records) r.vector.clear();
  meta1.dim = 0;
  CHECK_THROWS_WITH(load_embeddings(dir.file("v.bide"), meta1),
                    Catch::Matchers::ContainsSubstring("version"));
}

TEST_CASE("validate accepts a well-formed corpus") {
  const Corpus corpus = testutil::make_corpus(3, 2, 2, 8, 42);
  CHECK(validate(corpus).empty());
}

TEST_CASE("validate flags mixed dimensions once") {
  Corpus corpus = testutil::make_corpus(2, 1, 2, 4, 42);
  corpus.records[2].vector.resize(8, 0.0);
  const auto violations = validate(corpus);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].rule == "dimension");
  CHECK(violations[0].record == 2);
}

TEST_CASE("validate flags clip_id on a still") {
  Corpus corpus = testutil::make_corpus(1, 1, 2, 4, 42);
  corpus.records[0].key.frame_index.reset();  // clip_id stays set
  const auto violations = validate(corpus);
  REQUIRE(violations.size() == 1);
  CHECK(violations[0].rule == "clip_frame_consistency");
}

TEST_CASE("validate flags non-finite vectors and duplicate keys") {
  Corpus corpus = testutil::make_corpus(1, 1, 2, 4, 42);
  corpus.records[1].key = corpus.records[0].key;
  corpus.records[0].vector[1] = std::numeric_limits<double>::infinity();
  const auto violations = validate(corpus);
  REQUIRE(violations.size() == 2);
  CHECK(violations[0].rule == "non_finite");
  CHECK(violations[1].rule == "duplicate_key");
}

TEST_CASE("save/load round-trips bit-exactly") {
  // Property: for any valid corpus on disk, load then save reproduces the bytes.
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    TempDir dir("roundtrip");
    const Corpus corpus = testutil::make_corpus(4, 2, 3, 16, seed);
    save_manifest(corpus, dir.file("m.jsonl"));
    save_embeddings(corpus, dir.file("e.bide"));

    const Corpus meta = load_manifest(dir.file("m.jsonl"));
    const Corpus loaded = load_embeddings(dir.file("e.bide"), meta);
    save_manifest(loaded, dir.file("m2.jsonl"));
    save_embeddings(loaded, dir.file("e2.bide"));

    CHECK(testutil::slurp(dir.file("m.jsonl")) == testutil::slurp(dir.file("m2.jsonl")));
    CHECK(testutil::slurp(dir.file("e.bide")) == testutil::slurp(dir.file("e2.bide")));
  }
}

TEST_CASE("record order and index are deterministic functions of file content") {
  TempDir dir("determinism");
  const Corpus corpus = testutil::make_corpus(3, 2, 2, 4, 5);
  save_manifest(corpus, dir.file("m.jsonl"));
  const Corpus a = load_manifest(dir.file("m.jsonl"));
  const Corpus b = load_manifest(dir.file("m.jsonl"));
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i)
    CHECK(a.records[i].key == b.records[i].key);
  CHECK(a.identity_index == b.identity_index);
}
