#include "catres/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "catres/error.hpp"
#include "json.hpp"

namespace catres {

namespace {

using Rng = std::mt19937_64;

std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  double norm = 0.0;
  do {
    norm = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
  } while (norm == 0.0);
  norm = std::sqrt(norm);
  for (auto& x : v) x /= norm;
  return v;
}

std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t population, std::size_t count) {
  std::vector<std::size_t> idx(population);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, population - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(count);
  return idx;
}

// Pronounceable surface per token; every third carries the leading space
// byte-pair vocabularies use for word starts.
std::string surface_for(TokenId id) {
  static const char* onset[] = {"b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "st"};
  static const char* vowel[] = {"a", "e", "i", "o", "u", "ai", "ou", "ea"};
  std::string word = id % 3 == 0 ? " " : "";
  auto n = static_cast<std::uint32_t>(id);
  do {
    word += onset[n % 16];
    n /= 16;
    word += vowel[n % 8];
    n /= 8;
  } while (n > 0);
  return word;
}

}  // namespace

double forward_aggregate(std::span<const double> weights_row, std::span<const double> activations, double bias) {
  if (weights_row.size() != activations.size()) throw DomainError("forward_aggregate: length mismatch");
  double sum = 0.0;
  for (std::size_t j = 0; j < weights_row.size(); ++j) sum += weights_row[j] * activations[j];
  return sum + bias;
}

void SynthConfig::validate() const {
  if (vocab_size == 0 || layer0_size == 0 || layer1_size == 0 || embedding_dim == 0 || group_size == 0) {
    throw ValidationError("synth: sizes must be >= 1");
  }
  for (double v : {phasing_strength, attention_contrast, priming_sharpness, noise_scale, phasing_noise,
                   activation_noise, weight_scale}) {
    if (!std::isfinite(v) || v < 0.0) throw ValidationError("synth: strengths and scales must be finite and >= 0");
  }
  if (groups_per_neuron == 0) throw ValidationError("synth: groups_per_neuron = 0 leaves layer-0 profiles empty");
  if (layer1_profile_size == 0) throw ValidationError("synth: layer1_profile_size = 0 leaves layer-1 profiles empty");
  const std::size_t n_groups = vocab_size / group_size;
  if (groups_per_neuron > n_groups) throw ValidationError("synth: groups_per_neuron exceeds the number of token groups");
  if (precursor_fanin == 0 || precursor_fanin > layer0_size) {
    throw ValidationError("synth: precursor_fanin must lie in [1, layer0_size]");
  }
  if (vocab_size > static_cast<std::size_t>(std::numeric_limits<TokenId>::max())) {
    throw ValidationError("synth: vocab_size too large");
  }
}

SynthConfig unphased_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.seed = seed;
  cfg.attention_contrast = 4.0;
  return cfg;
}

SynthConfig phased_config(std::uint64_t seed, double phasing_strength) {
  SynthConfig cfg = unphased_config(seed);
  cfg.phasing_strength = phasing_strength;
  return cfg;
}

SynthConfig remix_config(std::uint64_t seed) {
  SynthConfig cfg = phased_config(seed, kHighPhasing);
  cfg.remix_targets = true;
  return cfg;
}

SynthOutput generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  std::normal_distribution<double> normal;

  // token embeddings around group directions
  const std::size_t n_groups = cfg.vocab_size / cfg.group_size;
  GroundTruth truth;
  std::vector<float> emb(cfg.vocab_size * cfg.embedding_dim);
  std::vector<std::vector<double>> directions;
  for (std::size_t g = 0; g < n_groups; ++g) directions.push_back(random_unit(rng, cfg.embedding_dim));
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
    const std::size_t g = t / cfg.group_size;
    std::vector<double> v = random_unit(rng, cfg.embedding_dim);
    for (std::size_t d = 0; d < cfg.embedding_dim; ++d) {
      const double centre = g < n_groups ? directions[g][d] : 0.0;
      const double noise = g < n_groups ? cfg.noise_scale : 1.0;
      emb[t * cfg.embedding_dim + d] = static_cast<float>(centre + noise * v[d]);
    }
  }
  for (std::size_t g = 0; g < n_groups; ++g) {
    TokenSet ids;
    for (std::size_t k = 0; k < cfg.group_size; ++k) ids.push_back(static_cast<TokenId>(g * cfg.group_size + k));
    truth.semantic_groups.push_back(std::move(ids));
  }
  std::map<TokenId, std::string> surfaces;
  for (std::size_t t = 0; t < cfg.vocab_size; ++t) surfaces.emplace(static_cast<TokenId>(t), surface_for(static_cast<TokenId>(t)));

  // layer-0 activations: native groups with log-normal priming
  std::vector<std::vector<double>> x(cfg.layer0_size, std::vector<double>(cfg.vocab_size, 0.0));
  std::vector<std::vector<std::size_t>> native(cfg.layer0_size);
  truth.planted.resize(cfg.layer0_size);
  for (std::size_t j = 0; j < cfg.layer0_size; ++j) {
    native[j] = sample_without_replacement(rng, n_groups, cfg.groups_per_neuron);
    for (std::size_t g : native[j]) {
      truth.planted[j].push_back({PlantedGroup::Kind::native, truth.semantic_groups[g]});
      for (TokenId t : truth.semantic_groups[g]) {
        const double a = std::exp(cfg.priming_sharpness * normal(rng)) + cfg.activation_noise * normal(rng);
        x[j][static_cast<std::size_t>(t)] = std::max(a, 0.01);
      }
    }
  }

  // designated precursors and phased token sets
  truth.designated.resize(cfg.layer1_size);
  std::vector<TokenSet> phased(cfg.layer1_size);
  // separate stream so the phasing knob leaves weights and embeddings untouched
  Rng phase_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  // balanced designation: concatenated permutations of layer 0, sliced per target
  std::vector<std::size_t> deck;
  while (deck.size() < cfg.layer1_size * cfg.precursor_fanin) {
    const auto perm = sample_without_replacement(rng, cfg.layer0_size, cfg.layer0_size);
    deck.insert(deck.end(), perm.begin(), perm.end());
  }
  for (std::size_t i = 0; i < cfg.layer1_size; ++i) {
    auto& chosen_precursors = truth.designated[i];
    chosen_precursors.assign(deck.begin() + static_cast<std::ptrdiff_t>(i * cfg.precursor_fanin),
                             deck.begin() + static_cast<std::ptrdiff_t>((i + 1) * cfg.precursor_fanin));
    auto sorted = chosen_precursors;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      chosen_precursors = sample_without_replacement(rng, cfg.layer0_size, cfg.precursor_fanin);
    }
    std::vector<TokenId> chosen;
    if (cfg.remix_targets) {
      const std::size_t per = (cfg.phased_tokens + cfg.precursor_fanin - 1) / cfg.precursor_fanin;
      for (std::size_t j : truth.designated[i]) {
        const std::size_t g = native[j][std::uniform_int_distribution<std::size_t>(0, native[j].size() - 1)(rng)];
        for (std::size_t k : sample_without_replacement(rng, cfg.group_size, std::min(per, cfg.group_size))) {
          chosen.push_back(truth.semantic_groups[g][k]);
        }
      }
    } else {
      const std::size_t lead = truth.designated[i].front();
      const std::size_t g = native[lead][std::uniform_int_distribution<std::size_t>(0, native[lead].size() - 1)(rng)];
      for (std::size_t k : sample_without_replacement(rng, cfg.group_size, std::min(cfg.phased_tokens, cfg.group_size))) {
        chosen.push_back(truth.semantic_groups[g][k]);
      }
    }
    phased[i] = make_token_set(std::move(chosen));
    if (cfg.phasing_strength <= 0.0) continue;
    for (std::size_t j : truth.designated[i]) {
      truth.planted[j].push_back({PlantedGroup::Kind::phased, phased[i]});
      for (TokenId t : phased[i]) {
        const double v = std::max(0.1, 1.0 + cfg.phasing_noise * normal(phase_rng));
        auto& cell = x[j][static_cast<std::size_t>(t)];
        cell = std::max(cell, cfg.phasing_strength * v);
      }
      truth.intended.push_back({NeuronRef{0, static_cast<int>(j)}, NeuronRef{1, static_cast<int>(i)}, phased[i]});
    }
  }

  // weights: exchangeable noise plus attention on designated precursors
  LayerWeights weights;
  weights.source_layer = 0;
  weights.target_layer = 1;
  weights.target_size = cfg.layer1_size;
  weights.source_size = cfg.layer0_size;
  weights.matrix.resize(cfg.layer1_size * cfg.layer0_size);
  weights.bias.resize(cfg.layer1_size);
  for (std::size_t i = 0; i < cfg.layer1_size; ++i) {
    for (std::size_t j = 0; j < cfg.layer0_size; ++j) {
      weights.matrix[i * cfg.layer0_size + j] = static_cast<float>(cfg.weight_scale * normal(rng));
    }
    for (std::size_t j : truth.designated[i]) {
      weights.matrix[i * cfg.layer0_size + j] += static_cast<float>(cfg.attention_contrast);
    }
    weights.bias[i] = static_cast<float>(0.1 * normal(rng));
  }

  ProfileMap profiles;
  for (std::size_t j = 0; j < cfg.layer0_size; ++j) {
    ActivationProfile p{NeuronRef{0, static_cast<int>(j)}, {}};
    for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
      if (x[j][t] != 0.0) p.entries.push_back({static_cast<TokenId>(t), surfaces.at(static_cast<TokenId>(t)), x[j][t]});
    }
    if (p.entries.empty()) throw ValidationError("synth: layer-0 neuron " + std::to_string(j) + " has an empty profile");
    std::sort(p.entries.begin(), p.entries.end(), activation_order);
    profiles.emplace(p.neuron, std::move(p));
  }

  // layer-1 activations through the aggregation function, then re-ranked
  std::vector<double> column(cfg.layer0_size);
  std::vector<double> row(cfg.layer0_size);
  for (std::size_t i = 0; i < cfg.layer1_size; ++i) {
    const auto w = weights.row(i);
    std::copy(w.begin(), w.end(), row.begin());
    ActivationProfile p{NeuronRef{1, static_cast<int>(i)}, {}};
    p.entries.reserve(cfg.vocab_size);
    for (std::size_t t = 0; t < cfg.vocab_size; ++t) {
      for (std::size_t j = 0; j < cfg.layer0_size; ++j) column[j] = x[j][t];
      const double y = forward_aggregate(row, column, weights.bias[i]);
      p.entries.push_back({static_cast<TokenId>(t), surfaces.at(static_cast<TokenId>(t)), y});
    }
    const std::size_t keep = std::min(cfg.layer1_profile_size, p.entries.size());
    std::partial_sort(p.entries.begin(), p.entries.begin() + static_cast<std::ptrdiff_t>(keep), p.entries.end(),
                      activation_order);
    p.entries.resize(keep);
    profiles.emplace(p.neuron, std::move(p));
  }

  EmbeddingTable table(cfg.embedding_dim, std::move(emb), std::move(surfaces));
  ModelDataset dataset(std::move(profiles), std::move(weights), std::move(table),
                       "synthetic seed=" + std::to_string(cfg.seed));
  return SynthOutput{std::move(dataset), std::move(truth)};
}

std::vector<std::vector<double>> layer0_matrix(const ModelDataset& dataset) {
  const std::size_t n = dataset.layer_size(0);
  std::vector<std::vector<double>> x(n, std::vector<double>(dataset.embeddings().size(), 0.0));
  for (const auto& [ref, profile] : dataset.profiles()) {
    if (ref.layer != 0) continue;
    for (const auto& e : profile.entries) x[static_cast<std::size_t>(ref.index)][static_cast<std::size_t>(e.id)] = e.activation;
  }
  return x;
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  using nlohmann::json;
  for (std::size_t j = 0; j < truth.planted.size(); ++j) {
    json groups = json::array();
    for (const auto& g : truth.planted[j]) {
      groups.push_back({{"kind", g.kind == PlantedGroup::Kind::native ? "native" : "phased"}, {"ids", g.tokens}});
    }
    out << json{{"record", "planted"}, {"layer", 0}, {"neuron", j}, {"groups", groups}}.dump() << '\n';
  }
  for (std::size_t i = 0; i < truth.designated.size(); ++i) {
    out << json{{"record", "designated"}, {"layer", 1}, {"neuron", i}, {"precursors", truth.designated[i]}}.dump()
        << '\n';
  }
  for (const auto& it : truth.intended) {
    out << json{{"record", "intended_taken"},
                {"precursor", {it.precursor.layer, it.precursor.index}},
                {"target", {it.target.layer, it.target.index}},
                {"ids", it.tokens}}
               .dump()
        << '\n';
  }
}

void write_synth(const std::filesystem::path& dir, const SynthOutput& out) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_profiles(dir / "profiles.jsonl", out.dataset.profiles());
  write_weights(dir / "weights.bin", out.dataset.weights());
  write_embeddings(dir / "embeddings.bin", out.dataset.embeddings());
  std::ofstream gt(dir / "ground_truth.jsonl", std::ios::trunc);
  if (!gt) throw IoError("cannot write " + (dir / "ground_truth.jsonl").string());
  write_ground_truth(gt, out.truth);
}

}  // namespace catres
