#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "dlava/dataset.hpp"
#include "dlava/error.hpp"

namespace dlava::testing {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("dlava-test-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << contents;
}

inline dataset::Corpus small_corpus(std::int32_t n = 8, std::uint64_t seed = 7) {
  dataset::SynthConfig cfg;
  cfg.n_documents = n;
  cfg.seed = seed;
  return dataset::generate_synthetic(cfg);
}

// Runs f and returns the ErrorKind it throws; fails the test otherwise.
template <typename F>
ErrorKind error_kind(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::logic_error("expected a dlava::Error");
}

}  // namespace dlava::testing
