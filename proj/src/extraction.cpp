#include "catres/extraction.hpp"

#include <algorithm>
#include <iterator>

#include <spdlog/spdlog.h>

#include "catres/error.hpp"
#include "catres/parallel.hpp"

namespace catres {

TokenSet make_token_set(std::vector<TokenId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

TokenSet set_intersection(const TokenSet& a, const TokenSet& b) {
  TokenSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

TokenSet set_difference(const TokenSet& a, const TokenSet& b) {
  TokenSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

TokenSet CoreTokenSet::ids() const {
  std::vector<TokenId> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.id);
  return make_token_set(std::move(out));
}

CoreTokenSet core_tokens(const ActivationProfile& profile, std::size_t k) {
  if (k == 0) throw DomainError("core_tokens: k must be at least 1");
  CoreTokenSet core;
  core.neuron = profile.neuron;
  core.tokens = profile.entries;
  core.short_profile = core.tokens.size() < k;
  const std::size_t keep = std::min(k, core.tokens.size());
  std::partial_sort(core.tokens.begin(), core.tokens.begin() + static_cast<std::ptrdiff_t>(keep), core.tokens.end(),
                    activation_order);
  core.tokens.resize(keep);
  return core;
}

PrecursorSet top_precursors(const LayerWeights& weights, const NeuronRef& target, std::size_t m) {
  if (m == 0) throw DomainError("top_precursors: m must be at least 1");
  if (target.layer != weights.target_layer || target.index < 0 ||
      static_cast<std::size_t>(target.index) >= weights.target_size) {
    throw NotFoundError("top_precursors: " + to_string(target) + " is not in the target layer");
  }
  PrecursorSet out;
  out.target = target;
  const auto row = weights.row(static_cast<std::size_t>(target.index));
  std::vector<std::size_t> positive;
  for (std::size_t s = 0; s < row.size(); ++s) {
    if (row[s] > 0.0f) positive.push_back(s);
  }
  const std::size_t keep = std::min(m, positive.size());
  std::partial_sort(positive.begin(), positive.begin() + static_cast<std::ptrdiff_t>(keep), positive.end(),
                    [&](std::size_t a, std::size_t b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
  for (std::size_t i = 0; i < keep; ++i) {
    out.precursors.push_back({NeuronRef{weights.source_layer, static_cast<int>(positive[i])}, row[positive[i]]});
  }
  return out;
}

TakenPartition taken_partition(const CoreTokenSet& precursor_core, const CoreTokenSet& target_core) {
  TakenPartition p;
  p.precursor = precursor_core.neuron;
  p.target = target_core.neuron;
  const TokenSet pre = precursor_core.ids();
  p.taken = set_intersection(pre, target_core.ids());
  p.left = set_difference(pre, p.taken);
  return p;
}

CoreMap compute_cores(const ModelDataset& dataset, std::size_t k, unsigned workers) {
  std::vector<NeuronRef> refs;
  for (int layer : {dataset.weights().source_layer, dataset.weights().target_layer}) {
    for (std::size_t i = 0; i < dataset.layer_size(layer); ++i) refs.push_back({layer, static_cast<int>(i)});
  }
  std::vector<CoreTokenSet> slots(refs.size());
  parallel_for(refs.size(), workers, [&](std::size_t i) {
    if (const auto* profile = dataset.find(refs[i])) {
      slots[i] = core_tokens(*profile, k);
    } else {
      slots[i].neuron = refs[i];
      slots[i].short_profile = true;
    }
  });
  CoreMap out;
  for (std::size_t i = 0; i < refs.size(); ++i) out.emplace(refs[i], std::move(slots[i]));
  return out;
}

PairEnumeration enumerate_pairs(const ModelDataset& dataset, const CoreMap& cores, std::size_t m, unsigned workers) {
  const auto& w = dataset.weights();
  std::vector<std::vector<PairEntry>> per_target(w.target_size);
  parallel_for(w.target_size, workers, [&](std::size_t t) {
    const NeuronRef target{w.target_layer, static_cast<int>(t)};
    const auto precursors = top_precursors(w, target, m);
    const auto& target_core = cores.at(target);
    for (std::size_t r = 0; r < precursors.precursors.size(); ++r) {
      const auto& pre = precursors.precursors[r];
      per_target[t].push_back({target, r, pre, taken_partition(cores.at(pre.neuron), target_core)});
    }
  });
  PairEnumeration out;
  for (auto& entries : per_target) {
    if (entries.empty()) ++out.targets_without_precursors;
    for (auto& e : entries) out.pairs.push_back(std::move(e));
  }
  if (out.targets_without_precursors > 0) {
    spdlog::info("skipped {} target neurons without a positive-weight precursor", out.targets_without_precursors);
  }
  return out;
}

PairEnumeration enumerate_pairs(const ModelDataset& dataset, std::size_t k, std::size_t m, unsigned workers) {
  return enumerate_pairs(dataset, compute_cores(dataset, k, workers), m, workers);
}

}  // namespace catres
