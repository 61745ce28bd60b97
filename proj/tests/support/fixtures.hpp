#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <unistd.h>

#include "catres/dataset.hpp"
#include "catres/extraction.hpp"

namespace fixtures {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("catres-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
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

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

inline catres::ActivationProfile profile(int layer, int index,
                                         std::initializer_list<std::pair<catres::TokenId, double>> entries) {
  catres::ActivationProfile p;
  p.neuron = {layer, index};
  for (const auto& [id, a] : entries) p.entries.push_back({id, "t" + std::to_string(id), a});
  std::sort(p.entries.begin(), p.entries.end(), catres::activation_order);
  return p;
}

// Table with each row set from `rows` (dimension taken from the first row).
inline catres::EmbeddingTable table(const std::vector<std::vector<float>>& rows) {
  std::vector<float> data;
  std::map<catres::TokenId, std::string> surfaces;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    data.insert(data.end(), rows[i].begin(), rows[i].end());
    surfaces[static_cast<catres::TokenId>(i)] = "t" + std::to_string(i);
  }
  return catres::EmbeddingTable(rows.empty() ? 0 : rows.front().size(), std::move(data), std::move(surfaces));
}

inline catres::EmbeddingTable random_table(std::size_t n, std::size_t dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g(0.0f, 1.0f);
  std::vector<std::vector<float>> rows(n, std::vector<float>(dim));
  for (auto& r : rows) {
    for (auto& v : r) v = g(rng);
  }
  return table(rows);
}

inline catres::LayerWeights weights(std::size_t targets, std::size_t sources, std::vector<float> matrix,
                                    std::vector<float> bias = {}) {
  catres::LayerWeights w;
  w.target_size = targets;
  w.source_size = sources;
  w.matrix = std::move(matrix);
  w.bias = bias.empty() ? std::vector<float>(targets, 0.0f) : std::move(bias);
  return w;
}

inline catres::CoreTokenSet core(int layer, int index, std::initializer_list<std::pair<catres::TokenId, double>> entries) {
  return catres::core_tokens(profile(layer, index, entries), entries.size());
}

}  // namespace fixtures
