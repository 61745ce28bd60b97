#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace catres {

// Identity of a formal neuron: (layer, index within layer).
struct NeuronRef {
  int layer = 0;
  int index = 0;

  auto operator<=>(const NeuronRef&) const = default;
};

std::string to_string(const NeuronRef& ref);

using TokenId = std::int32_t;

struct TokenEntry {
  TokenId id = 0;
  std::string surface;  // verbatim, leading whitespace preserved
  double activation = 0.0;

  bool operator==(const TokenEntry&) const = default;
};

// Descending activation; equal activations ordered by ascending token id.
bool activation_order(const TokenEntry& a, const TokenEntry& b);

struct ActivationProfile {
  NeuronRef neuron;
  std::vector<TokenEntry> entries;

  std::optional<double> activation_of(TokenId id) const;
  bool operator==(const ActivationProfile&) const = default;
};

using ProfileMap = std::map<NeuronRef, ActivationProfile>;

// Dense inter-layer connection weights. Row i holds target neuron i's
// incoming weights over all source neurons.
struct LayerWeights {
  int source_layer = 0;
  int target_layer = 1;
  std::size_t target_size = 0;
  std::size_t source_size = 0;
  std::vector<float> matrix;  // row-major, target_size * source_size
  std::vector<float> bias;    // target_size

  std::span<const float> row(std::size_t target) const;
  float at(std::size_t target, std::size_t source) const { return matrix[target * source_size + source]; }

  bool operator==(const LayerWeights&) const = default;
};

// Token-id indexed embedding rows. Row r belongs to token id r.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  // Throws ValidationError on an all-zero or non-finite row.
  EmbeddingTable(std::size_t dimension, std::vector<float> data,
                 std::map<TokenId, std::string> surfaces = {});

  std::size_t dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return norms_.size(); }
  bool contains(TokenId id) const noexcept { return id >= 0 && static_cast<std::size_t>(id) < size(); }

  // Throws NotFoundError for ids outside the table.
  std::span<const float> row(TokenId id) const;
  double norm(TokenId id) const;

  const std::vector<float>& data() const noexcept { return data_; }
  const std::map<TokenId, std::string>& surfaces() const noexcept { return surfaces_; }

  bool operator==(const EmbeddingTable& other) const {
    return dimension_ == other.dimension_ && data_ == other.data_ && surfaces_ == other.surfaces_;
  }

 private:
  std::size_t dimension_ = 0;
  std::vector<float> data_;
  std::vector<double> norms_;
  std::map<TokenId, std::string> surfaces_;
};

// Immutable snapshot of the three inputs, cross-validated.
class ModelDataset {
 public:
  ModelDataset(ProfileMap profiles, LayerWeights weights, EmbeddingTable embeddings,
               std::string source_description);

  const ProfileMap& profiles() const noexcept { return profiles_; }
  const LayerWeights& weights() const noexcept { return weights_; }
  const EmbeddingTable& embeddings() const noexcept { return embeddings_; }
  const std::string& content_hash() const noexcept { return content_hash_; }
  const std::string& provenance() const noexcept { return provenance_; }

  const ActivationProfile* find(const NeuronRef& ref) const;
  std::size_t layer_size(int layer) const;

 private:
  ProfileMap profiles_;
  LayerWeights weights_;
  EmbeddingTable embeddings_;
  std::string content_hash_;
  std::string provenance_;
};

// Order-independent SHA-256 over profiles, weights and embeddings.
std::string content_hash(const ProfileMap& profiles, const LayerWeights& weights,
                         const EmbeddingTable& embeddings);

ProfileMap parse_profiles(std::istream& in, const std::string& source_name = "<stream>");
ProfileMap load_profiles(const std::filesystem::path& path);
void write_profiles(const std::filesystem::path& path, const ProfileMap& profiles);

LayerWeights load_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const LayerWeights& weights);

std::map<TokenId, std::string> load_vocabulary(const std::filesystem::path& path);
void write_vocabulary(const std::filesystem::path& path, const std::map<TokenId, std::string>& surfaces);

// Companion vocabulary defaults to "<path>.vocab.jsonl" and is optional.
std::filesystem::path default_vocabulary_path(const std::filesystem::path& embeddings_path);
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::filesystem::path> vocabulary = std::nullopt);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

ModelDataset assemble_dataset(ProfileMap profiles, LayerWeights weights, EmbeddingTable embeddings,
                              std::string source_description = "in-memory");

}  // namespace catres
