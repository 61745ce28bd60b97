#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "catres/dataset.hpp"
#include "catres/extraction.hpp"

namespace catres {

// dot(u,v) / (|u||v|), clamped to [-1, 1]. Throws DomainError on a zero
// vector or a dimension mismatch.
double cosine(std::span<const double> u, std::span<const double> v);
double cosine(std::span<const float> u, std::span<const float> v);

// Cosine between two tokens of the embedding table.
double token_cosine(const EmbeddingTable& emb, TokenId a, TokenId b);

// Linear interpolation between order statistics at rank 1 + (n-1)q
// (Hyndman-Fan type 7). Throws DomainError on an empty list or q outside [0,1].
double quantile(std::vector<double> values, double q);

struct ConfluenceValue {
  double m = 0.0;
  std::size_t pair_count = 0;
};

// Mean cosine over cross pairs (a in x, b in y, a != b). Returns nullopt when
// a set is below `min_cardinality` or no cross pair remains.
std::optional<ConfluenceValue> confluence_m(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb,
                                            std::size_t min_cardinality = 1);

using ActivationMap = std::unordered_map<TokenId, double>;
ActivationMap activation_map(const ActivationProfile& profile);
ActivationMap activation_map(const CoreTokenSet& core);

// mean |a_i - a_j| over unordered taken pairs minus the first quartile of
// |a_n - a_m| over unordered core pairs. Activations come from one neuron's
// view (precursor or target).
double dispersion_d(const TokenSet& taken, const TokenSet& core, const ActivationMap& activation_of);

// mean cos over cross pairs (equal ids skipped) minus mean cos over unordered
// distinct pairs within x. nullopt when either term has no pair or a set is
// below `min_cardinality`.
std::optional<double> distancing_d(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb,
                                   std::size_t min_cardinality = 1);

struct CommonTokenIndex {
  std::size_t n = 0;
  double d_prime = 0.0;  // n - |x| / 10
};
CommonTokenIndex common_token_index(const TokenSet& x, const TokenSet& y);

// Explicit cosine populations, used for rank tests on distancing pairs.
std::vector<double> cross_cosines(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb);
std::vector<double> within_cosines(const TokenSet& x, const EmbeddingTable& emb);

// ---------------------------------------------------------------------------
// records

struct ConfluenceRecord {
  NeuronRef target;
  NeuronRef precursor_x;
  NeuronRef precursor_y;
  std::size_t size_x = 0;
  std::size_t size_y = 0;
  double m = 0.0;
  std::size_t pair_count = 0;
};

enum class ActivationSide { precursor, target };
const char* to_string(ActivationSide side);

struct DispersionRecord {
  NeuronRef target;
  NeuronRef precursor;
  ActivationSide side = ActivationSide::precursor;
  std::size_t taken_size = 0;
  std::size_t core_size = 0;
  double d = 0.0;
};

struct ClusterRef {
  NeuronRef neuron;
  std::size_t cluster = 0;
};

struct DistancingRecord {
  ClusterRef source;  // precursor-layer cluster x
  ClusterRef target;  // target-layer cluster y
  std::size_t size_x = 0;
  std::size_t size_y = 0;
  double d = 0.0;
  double kw_statistic = 0.0;
  double kw_p = 1.0;
  std::size_t n_common = 0;
  double d_prime = 0.0;
  double binomial_p = 1.0;
};

// CSV with a fixed header row and column order; doubles use %.17g.
void write_confluence_csv(std::ostream& out, std::span<const ConfluenceRecord> records);
void write_dispersion_csv(std::ostream& out, std::span<const DispersionRecord> records);
void write_distancing_csv(std::ostream& out, std::span<const DistancingRecord> records);

}  // namespace catres
