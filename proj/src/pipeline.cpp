#include "catres/pipeline.hpp"

#include <array>
#include <map>
#include <utility>

#include <spdlog/spdlog.h>

#include "catres/error.hpp"
#include "catres/parallel.hpp"

namespace catres {

namespace {

using Range = std::pair<std::size_t, std::size_t>;

// [begin, end) of each target's run in the (target, rank)-ordered pair list.
std::vector<Range> target_ranges(const PairEnumeration& pairs) {
  std::vector<Range> out;
  for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
    if (out.empty() || pairs.pairs[out.back().first].target != pairs.pairs[i].target) out.push_back({i, i});
    out.back().second = i + 1;
  }
  return out;
}

double pct(std::size_t hits, std::size_t n) {
  return n == 0 ? 0.0 : 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

template <typename T, typename Fn>
double mean_of(const std::vector<T>& items, Fn&& value) {
  if (items.empty()) return 0.0;
  double s = 0.0;
  for (const auto& it : items) s += value(it);
  return s / static_cast<double>(items.size());
}

template <typename T>
void append(std::vector<T>& dst, std::vector<T>& src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

std::vector<std::size_t> qualifying(const ClusterPartition& part, std::size_t minimum) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < part.clusters.size(); ++i) {
    if (part.clusters[i].token_ids.size() >= minimum) out.push_back(i);
  }
  return out;
}

}  // namespace

void RunConfig::validate() const {
  if (k == 0 || m == 0 || c == 0 || min_cluster == 0) throw ValidationError("k, precursors, clusters and min-cluster must be >= 1");
  if (workers == 0) throw ValidationError("workers must be >= 1");
  if (method == ClusterMethod::llm) {
    if (!labeler) throw ValidationError("method llm needs a labeler endpoint");
    labeler->validate();
  }
}

stats::TestResult split_chi_square(std::size_t hits, std::size_t n) {
  if (n == 0) {
    stats::TestResult r;
    r.test = stats::TestKind::chi_square_gof;
    r.skipped = true;
    r.notes = "no records";
    return r;
  }
  const std::array<double, 2> observed{static_cast<double>(hits), static_cast<double>(n - hits)};
  return stats::chi_square_gof(observed);
}

// ---------------------------------------------------------------------------
// confluence

ConfluenceRun run_confluence(const ModelDataset& dataset, const PairEnumeration& pairs, const RunConfig& cfg) {
  struct Slot {
    std::vector<ConfluenceRecord> records;
    std::size_t skipped_cardinality = 0;
    std::size_t skipped_no_pairs = 0;
  };
  const auto ranges = target_ranges(pairs);
  std::vector<Slot> slots(ranges.size());
  parallel_for(ranges.size(), cfg.workers, [&](std::size_t r) {
    auto& slot = slots[r];
    const auto [begin, end] = ranges[r];
    for (std::size_t a = begin; a < end; ++a) {
      for (std::size_t b = a + 1; b < end; ++b) {
        const auto& x = pairs.pairs[a].partition.taken;
        const auto& y = pairs.pairs[b].partition.taken;
        if (x.size() < cfg.min_cluster || y.size() < cfg.min_cluster) {
          ++slot.skipped_cardinality;
          continue;
        }
        const auto value = confluence_m(x, y, dataset.embeddings(), cfg.min_cluster);
        if (!value) {
          ++slot.skipped_no_pairs;
          continue;
        }
        slot.records.push_back({pairs.pairs[a].target, pairs.pairs[a].precursor.neuron, pairs.pairs[b].precursor.neuron,
                                x.size(), y.size(), value->m, value->pair_count});
      }
    }
  });

  ConfluenceRun run;
  for (auto& s : slots) {
    append(run.records, s.records);
    run.summary.skipped_cardinality += s.skipped_cardinality;
    run.summary.skipped_no_pairs += s.skipped_no_pairs;
  }
  auto& sum = run.summary;
  sum.n_effective = run.records.size();
  sum.skipped = sum.n_effective == 0;
  sum.mean_m = mean_of(run.records, [](const auto& r) { return r.m; });
  std::size_t below = 0;
  for (const auto& r : run.records) below += r.m < 0.5;
  sum.pct_below_half = pct(below, sum.n_effective);
  sum.chi2 = split_chi_square(below, sum.n_effective);
  return run;
}

ConfluenceRun run_confluence(const ModelDataset& dataset, const RunConfig& cfg) {
  return run_confluence(dataset, enumerate_pairs(dataset, cfg.k, cfg.m, cfg.workers), cfg);
}

// ---------------------------------------------------------------------------
// dispersion

DispersionRun run_dispersion(const CoreMap& cores, const PairEnumeration& pairs, const RunConfig& cfg,
                             ActivationSide side) {
  std::map<NeuronRef, ActivationMap> activations;
  std::map<NeuronRef, TokenSet> core_ids;
  for (const auto& [ref, core] : cores) {
    activations.emplace(ref, activation_map(core));
    core_ids.emplace(ref, core.ids());
  }

  std::vector<std::optional<DispersionRecord>> slots(pairs.pairs.size());
  parallel_for(pairs.pairs.size(), cfg.workers, [&](std::size_t i) {
    const auto& p = pairs.pairs[i];
    if (p.partition.taken.size() < std::max<std::size_t>(cfg.min_cluster, 2)) return;
    const NeuronRef& owner = side == ActivationSide::precursor ? p.precursor.neuron : p.target;
    const auto& ids = core_ids.at(owner);
    slots[i] = DispersionRecord{p.target,   p.precursor.neuron, side, p.partition.taken.size(), ids.size(),
                                dispersion_d(p.partition.taken, ids, activations.at(owner))};
  });

  DispersionRun run;
  run.summary.side = side;
  for (auto& s : slots) {
    if (s) {
      run.records.push_back(*s);
    } else {
      ++run.summary.skipped_cardinality;
    }
  }
  auto& sum = run.summary;
  sum.n = run.records.size();
  sum.skipped = sum.n == 0;
  sum.mean_d = mean_of(run.records, [](const auto& r) { return r.d; });
  std::size_t positive = 0;
  for (const auto& r : run.records) positive += r.d > 0.0;
  sum.pct_positive = pct(positive, sum.n);
  sum.chi2 = split_chi_square(positive, sum.n);
  return run;
}

DispersionRun run_dispersion(const ModelDataset& dataset, const RunConfig& cfg, ActivationSide side) {
  const auto cores = compute_cores(dataset, cfg.k, cfg.workers);
  return run_dispersion(cores, enumerate_pairs(dataset, cores, cfg.m, cfg.workers), cfg, side);
}

// ---------------------------------------------------------------------------
// clustering

PartitionMap compute_partitions(const ModelDataset& dataset, const CoreMap& cores, const RunConfig& cfg,
                                std::size_t* label_failures) {
  std::vector<const CoreTokenSet*> todo;
  for (const auto& [ref, core] : cores) {
    if (!core.tokens.empty()) todo.push_back(&core);
  }
  std::vector<ClusterPartition> parts(todo.size());
  parallel_for(todo.size(), cfg.workers, [&](std::size_t i) {
    parts[i] = cluster_deterministic(*todo[i], dataset.embeddings(), cfg.c, cfg.seed);
  });
  PartitionMap out;
  for (auto& p : parts) {
    const NeuronRef key = p.neuron;
    out.emplace(key, std::move(p));
  }

  if (cfg.partitions_path) {
    PartitionMap supplied;
    try {
      supplied = load_partitions(*cfg.partitions_path, dataset.embeddings());
    } catch (const NotFoundError& e) {
      throw ValidationError(cfg.partitions_path->string() + ": " + e.what());
    }
    std::size_t replaced = 0;
    for (auto& [ref, part] : supplied) {
      out.insert_or_assign(ref, std::move(part));
      ++replaced;
    }
    spdlog::info("using {} supplied partitions; {} neurons fall back to deterministic clustering", replaced,
                 out.size() >= replaced ? out.size() - replaced : 0);
  } else if (cfg.method == ClusterMethod::llm) {
    ClusterLabeler labeler(*cfg.labeler);
    auto batch = label_clusters_llm(out, dataset.embeddings(), labeler, cfg.labeler->concurrency);
    spdlog::info("labeler: {} network calls, {} cache hits, {} failures", batch.network_calls, batch.cache_hits,
                 batch.failures.size());
    if (label_failures) *label_failures = batch.failures.size();
    out = std::move(batch.partitions);
  }
  return out;
}

// ---------------------------------------------------------------------------
// distancing

DistancingRun run_distancing(const ModelDataset& dataset, const PairEnumeration& pairs,
                             const PartitionMap& partitions, const RunConfig& cfg) {
  const auto& emb = dataset.embeddings();

  // within-x cosine populations, shared by every target a precursor feeds
  std::vector<NeuronRef> sources;
  for (const auto& p : pairs.pairs) sources.push_back(p.precursor.neuron);
  std::sort(sources.begin(), sources.end());
  sources.erase(std::unique(sources.begin(), sources.end()), sources.end());
  std::vector<std::vector<std::vector<double>>> within_lists(sources.size());
  parallel_for(sources.size(), cfg.workers, [&](std::size_t s) {
    auto it = partitions.find(sources[s]);
    if (it == partitions.end()) return;
    const auto& clusters = it->second.clusters;
    within_lists[s].resize(clusters.size());
    for (std::size_t ci = 0; ci < clusters.size(); ++ci) {
      if (clusters[ci].token_ids.size() >= std::max<std::size_t>(cfg.min_cluster, 2)) {
        within_lists[s][ci] = within_cosines(clusters[ci].token_ids, emb);
      }
    }
  });
  auto within_of = [&](const NeuronRef& ref) -> const std::vector<std::vector<double>>& {
    const auto pos = std::lower_bound(sources.begin(), sources.end(), ref) - sources.begin();
    return within_lists[static_cast<std::size_t>(pos)];
  };

  const auto ranges = target_ranges(pairs);
  std::vector<std::vector<DistancingRecord>> slots(ranges.size());
  parallel_for(ranges.size(), cfg.workers, [&](std::size_t r) {
    const auto [begin, end] = ranges[r];
    const NeuronRef target = pairs.pairs[begin].target;
    auto tp = partitions.find(target);
    if (tp == partitions.end()) return;
    const auto ys = qualifying(tp->second, cfg.min_cluster);
    for (std::size_t pi = begin; pi < end; ++pi) {
      const NeuronRef source = pairs.pairs[pi].precursor.neuron;
      auto sp = partitions.find(source);
      if (sp == partitions.end()) continue;
      const auto& within = within_of(source);
      for (std::size_t xi : qualifying(sp->second, std::max<std::size_t>(cfg.min_cluster, 2))) {
        const auto& x = sp->second.clusters[xi].token_ids;
        for (std::size_t yi : ys) {
          const auto& y = tp->second.clusters[yi].token_ids;
          const auto d = distancing_d(x, y, emb, cfg.min_cluster);
          if (!d) continue;
          DistancingRecord rec;
          rec.source = {source, xi};
          rec.target = {target, yi};
          rec.size_x = x.size();
          rec.size_y = y.size();
          rec.d = *d;
          const auto kw = stats::kruskal_wallis({cross_cosines(x, y, emb), within[xi]}, 1);
          rec.kw_statistic = kw.statistic;
          rec.kw_p = kw.p_value;
          const auto common = common_token_index(x, y);
          rec.n_common = common.n;
          rec.d_prime = common.d_prime;
          rec.binomial_p = stats::binomial_test(static_cast<std::int64_t>(common.n), static_cast<std::int64_t>(x.size()),
                                                kCommonTokenBaseRate, stats::Alternative::less)
                               .p_value;
          slots[r].push_back(rec);
        }
      }
    }
  });

  DistancingRun run;
  std::size_t n_targets = 0;
  for (auto& s : slots) {
    n_targets += !s.empty();
    append(run.records, s);
  }
  const std::size_t n = run.records.size();
  std::size_t negative = 0, kw_sig = 0, dp_negative = 0, binom_sig = 0;
  for (const auto& r : run.records) {
    negative += r.d < 0.0;
    kw_sig += r.kw_p < kSignificance;
    dp_negative += r.d_prime < 0.0;
    binom_sig += r.binomial_p < kSignificance;
  }

  auto& t4 = run.table4;
  t4.n_d = n;
  t4.n_targets = n_targets;
  t4.skipped = n == 0;
  t4.mean_d = mean_of(run.records, [](const auto& r) { return r.d; });
  t4.pct_negative = pct(negative, n);
  t4.chi2 = split_chi_square(negative, n);
  t4.pct_kw_significant = pct(kw_sig, n);
  t4.chi2_kw = split_chi_square(kw_sig, n);

  auto& t5 = run.table5;
  t5.n_d = n;
  t5.skipped = n == 0;
  t5.mean_n = mean_of(run.records, [](const auto& r) { return static_cast<double>(r.n_common); });
  t5.mean_d_prime = mean_of(run.records, [](const auto& r) { return r.d_prime; });
  t5.pct_negative = pct(dp_negative, n);
  t5.chi2 = split_chi_square(dp_negative, n);
  t5.pct_binomial_significant = pct(binom_sig, n);
  t5.chi2_binomial = split_chi_square(binom_sig, n);
  return run;
}

DistancingRun run_distancing(const ModelDataset& dataset, const RunConfig& cfg) {
  const auto cores = compute_cores(dataset, cfg.k, cfg.workers);
  const auto pairs = enumerate_pairs(dataset, cores, cfg.m, cfg.workers);
  return run_distancing(dataset, pairs, compute_partitions(dataset, cores, cfg), cfg);
}

// ---------------------------------------------------------------------------

AnalysisReport analyze(const ModelDataset& dataset, const RunConfig& cfg) {
  cfg.validate();
  AnalysisReport report;
  report.config = cfg;
  report.provenance = dataset.provenance();
  report.content_hash = dataset.content_hash();

  report.cores = compute_cores(dataset, cfg.k, cfg.workers);
  report.pairs = enumerate_pairs(dataset, report.cores, cfg.m, cfg.workers);
  report.confluence = run_confluence(dataset, report.pairs, cfg);
  report.dispersion_precursor = run_dispersion(report.cores, report.pairs, cfg, ActivationSide::precursor);
  report.dispersion_target = run_dispersion(report.cores, report.pairs, cfg, ActivationSide::target);
  report.partitions = compute_partitions(dataset, report.cores, cfg, &report.label_failures);
  report.distancing = run_distancing(dataset, report.pairs, report.partitions, cfg);

  spdlog::info("analysis: {} pairs, {} confluence, {}+{} dispersion, {} distancing records", report.pairs.pairs.size(),
               report.confluence.records.size(), report.dispersion_precursor.records.size(),
               report.dispersion_target.records.size(), report.distancing.records.size());
  return report;
}

}  // namespace catres
