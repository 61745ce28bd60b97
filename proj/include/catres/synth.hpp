#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "catres/dataset.hpp"
#include "catres/extraction.hpp"

namespace catres {

// sum_j w_j * x_j + b, accumulated left to right in double precision.
double forward_aggregate(std::span<const double> weights_row, std::span<const double> activations, double bias);

struct SynthConfig {
  std::uint64_t seed = 0;
  std::size_t vocab_size = 2000;
  std::size_t layer0_size = 64;
  std::size_t layer1_size = 64;
  std::size_t embedding_dim = 64;
  std::size_t precursor_fanin = 4;   // designated precursors per target
  double phasing_strength = 0.0;     // co-activation level of phased tokens
  double attention_contrast = 0.0;   // weight bonus on designated precursors
  double priming_sharpness = 0.5;    // log-normal spread of native activations
  double noise_scale = 0.5;          // spherical embedding noise around group directions
  std::size_t group_size = 20;
  std::size_t groups_per_neuron = 5;
  std::size_t phased_tokens = 16;    // per target
  double phasing_noise = 0.25;       // independent per-(precursor, token) relative jitter
  bool remix_targets = false;        // phased set drawn as sub-groups of every precursor
  double activation_noise = 0.05;
  double weight_scale = 1.0;
  std::size_t layer1_profile_size = 120;

  void validate() const;
};

inline constexpr double kHighPhasing = 8.0;

// Stock configurations used by the planted-effect checks.
SynthConfig unphased_config(std::uint64_t seed);
SynthConfig phased_config(std::uint64_t seed, double phasing_strength);
SynthConfig remix_config(std::uint64_t seed);

struct PlantedGroup {
  enum class Kind { native, phased };
  Kind kind = Kind::native;
  TokenSet tokens;
};

struct IntendedTaken {
  NeuronRef precursor;
  NeuronRef target;
  TokenSet tokens;
};

struct GroundTruth {
  std::vector<std::vector<PlantedGroup>> planted;  // per layer-0 neuron
  std::vector<std::vector<std::size_t>> designated;  // per target: layer-0 indices
  std::vector<IntendedTaken> intended;
  std::vector<TokenSet> semantic_groups;  // token groups sharing an embedding direction
};

struct SynthOutput {
  ModelDataset dataset;
  GroundTruth truth;
};

// Deterministic under config.seed.
SynthOutput generate(const SynthConfig& config);

// Layer-0 activation matrix [layer0_size x vocab] rebuilt from the profiles
// (absent tokens are zero).
std::vector<std::vector<double>> layer0_matrix(const ModelDataset& dataset);

void write_ground_truth(std::ostream& out, const GroundTruth& truth);

// profiles.jsonl, weights.bin, embeddings.bin (+ vocab), ground_truth.jsonl
void write_synth(const std::filesystem::path& dir, const SynthOutput& out);

}  // namespace catres
