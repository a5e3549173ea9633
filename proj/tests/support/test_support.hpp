#ifndef CSD_TEST_SUPPORT_HPP
#define CSD_TEST_SUPPORT_HPP

#include <atomic>
#include <chrono>
#include <filesystem>
#include <random>
#include <string>

#include "csd/corpus.hpp"
#include "csd/model.hpp"
#include "csd/synth.hpp"

namespace csd::fixtures {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    const auto stamp = std::chrono::steady_clock::now().time_since_epoch().count();
    path_ = std::filesystem::temp_directory_path() /
            ("csd_test_" + std::to_string(stamp) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline Corpus synthetic(std::uint64_t seed, int n, int min_utt = 2, int max_utt = 10) {
  return synthesize_corpus(seed, n, TemplateBank::standard(), {min_utt, max_utt});
}

inline ModelConfig tiny_config(int vocab_size, int d_model = 16) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.d_model = d_model;
  c.n_heads = 2;
  c.n_layers_encoder = 1;
  c.n_layers_decoder = 1;
  c.ffn_dim = 2 * d_model;
  c.max_len = 128;
  c.cnn_kernel_sizes = {2, 3};
  c.cnn_channels = 8;
  return c;
}

}  // namespace csd::fixtures

#endif  // CSD_TEST_SUPPORT_HPP
