#pragma once

#include <cstddef>
#include <map>
#include <vector>

#include "catres/dataset.hpp"

namespace catres {

// Sorted, duplicate-free token ids.
using TokenSet = std::vector<TokenId>;

TokenSet make_token_set(std::vector<TokenId> ids);
TokenSet set_intersection(const TokenSet& a, const TokenSet& b);
TokenSet set_difference(const TokenSet& a, const TokenSet& b);

// The k highest-activation entries of a profile: the neuron's categorical
// extension.
struct CoreTokenSet {
  NeuronRef neuron;
  std::vector<TokenEntry> tokens;  // descending activation, ties by ascending id
  bool short_profile = false;      // profile held fewer than k entries

  TokenSet ids() const;
  std::size_t size() const noexcept { return tokens.size(); }
};

// Ties at the cut are resolved by ascending token id.
CoreTokenSet core_tokens(const ActivationProfile& profile, std::size_t k);

struct Precursor {
  NeuronRef neuron;
  double weight = 0.0;

  bool operator==(const Precursor&) const = default;
};

struct PrecursorSet {
  NeuronRef target;
  std::vector<Precursor> precursors;  // descending weight, all > 0
};

// Up to m source neurons with strictly positive weight into `target`.
// Weight ties go to the lower source index.
PrecursorSet top_precursors(const LayerWeights& weights, const NeuronRef& target, std::size_t m);

struct TakenPartition {
  NeuronRef precursor;
  NeuronRef target;
  TokenSet taken;  // precursor core ids that are also target core ids
  TokenSet left;   // remaining precursor core ids

  bool operator==(const TakenPartition&) const = default;
};

TakenPartition taken_partition(const CoreTokenSet& precursor_core, const CoreTokenSet& target_core);

struct PairEntry {
  NeuronRef target;
  std::size_t rank = 0;  // position in the target's precursor list
  Precursor precursor;
  TakenPartition partition;

  bool operator==(const PairEntry&) const = default;
};

struct PairEnumeration {
  std::vector<PairEntry> pairs;  // target index, then precursor rank
  std::size_t targets_without_precursors = 0;
};

using CoreMap = std::map<NeuronRef, CoreTokenSet>;

// Core sets for every neuron of both layers; neurons without a profile get
// an empty, short core.
CoreMap compute_cores(const ModelDataset& dataset, std::size_t k, unsigned workers = 1);

PairEnumeration enumerate_pairs(const ModelDataset& dataset, const CoreMap& cores, std::size_t m,
                                unsigned workers = 1);
PairEnumeration enumerate_pairs(const ModelDataset& dataset, std::size_t k, std::size_t m, unsigned workers = 1);

}  // namespace catres
