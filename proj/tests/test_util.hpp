#pragma once

#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "bide/corpus.hpp"
#include "bide/rng.hpp"

namespace testutil {

/// Unique scratch directory, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bide_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

/// In-memory corpus with video-frame records and round-robin clothing sets.
inline bide::Corpus make_corpus(std::size_t n_identities, std::size_t clips_per_id,
                                std::size_t frames_per_clip, std::size_t dim,
                                std::uint64_t seed, std::size_t clothing_sets = 2) {
  bide::Corpus corpus;
  corpus.dim = dim;
  bide::Rng rng(seed);
  for (std::size_t i = 0; i < n_identities; ++i) {
    for (std::size_t c = 0; c < clips_per_id; ++c) {
      for (std::size_t f = 0; f < frames_per_clip; ++f) {
        bide::EmbeddingRecord rec;
        rec.key.identity_id = "id" + std::to_string(i);
        char clip[16];
        std::snprintf(clip, sizeof(clip), "c%03zu", c);
        rec.key.clip_id = clip;
        rec.key.frame_index = f;
        rec.key.media_id = std::string(clip) + "_f" + std::to_string(f);
        rec.tags.clothing_set_id = "s" + std::to_string(c % clothing_sets);
        rec.vector.resize(dim);
        for (auto& v : rec.vector)
          v = static_cast<double>(static_cast<float>(rng.normal()));
        corpus.records.push_back(std::move(rec));
      }
    }
  }
  corpus.rebuild_index();
  return corpus;
}

}  // namespace testutil
