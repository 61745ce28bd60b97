#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "catres/clustering.hpp"
#include "catres/dataset.hpp"
#include "catres/extraction.hpp"
#include "catres/labeler.hpp"
#include "catres/metrics.hpp"
#include "catres/stats.hpp"

namespace catres {

struct RunConfig {
  std::size_t k = 100;           // core tokens per neuron
  std::size_t m = 10;            // precursor cap per target
  std::size_t c = 5;             // clusters per neuron
  std::size_t min_cluster = 6;   // minimum cardinality of compared sets
  ClusterMethod method = ClusterMethod::deterministic;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::optional<LabelerConfig> labeler;
  std::optional<std::filesystem::path> partitions_path;  // externally supplied clusters

  // echoed only; not read by analyze()
  std::filesystem::path profiles;
  std::filesystem::path weights;
  std::filesystem::path embeddings;

  void validate() const;
};

struct ConfluenceSummary {
  std::size_t n_effective = 0;
  std::size_t skipped_cardinality = 0;  // taken-cluster pairs below min_cluster
  std::size_t skipped_no_pairs = 0;     // every cross pair was a shared id
  double mean_m = 0.0;
  double pct_below_half = 0.0;
  stats::TestResult chi2;
  bool skipped = false;
};

struct DispersionSummary {
  ActivationSide side = ActivationSide::precursor;
  std::size_t n = 0;
  std::size_t skipped_cardinality = 0;
  double mean_d = 0.0;
  double pct_positive = 0.0;
  stats::TestResult chi2;
  bool skipped = false;
};

struct DistancingSummary {
  std::size_t n_d = 0;
  std::size_t n_targets = 0;
  double mean_d = 0.0;
  double pct_negative = 0.0;
  stats::TestResult chi2;
  double pct_kw_significant = 0.0;
  stats::TestResult chi2_kw;
  bool skipped = false;
};

struct CommonTokenSummary {
  std::size_t n_d = 0;
  double mean_n = 0.0;
  double mean_d_prime = 0.0;
  double pct_negative = 0.0;
  stats::TestResult chi2;
  double pct_binomial_significant = 0.0;
  stats::TestResult chi2_binomial;
  bool skipped = false;
};

struct ConfluenceRun {
  std::vector<ConfluenceRecord> records;
  ConfluenceSummary summary;
};

struct DispersionRun {
  std::vector<DispersionRecord> records;
  DispersionSummary summary;
};

struct DistancingRun {
  std::vector<DistancingRecord> records;
  DistancingSummary table4;
  CommonTokenSummary table5;
};

struct PaperDelta {
  std::string key;
  double expected = 0.0;
  std::optional<double> computed;
};

struct AnalysisReport {
  RunConfig config;
  std::string provenance;
  std::string content_hash;

  CoreMap cores;
  PairEnumeration pairs;
  PartitionMap partitions;

  ConfluenceRun confluence;
  DispersionRun dispersion_precursor;
  DispersionRun dispersion_target;
  DistancingRun distancing;

  std::size_t label_failures = 0;
  std::vector<PaperDelta> paper_compare;
};

inline constexpr double kSignificance = 0.05;
// Binomial test on d' negativity: common tokens out of |x| against a base
// rate of one in ten, lower tail.
inline constexpr double kCommonTokenBaseRate = 0.1;

// Below/above split under equiprobability.
stats::TestResult split_chi_square(std::size_t hits, std::size_t n);

ConfluenceRun run_confluence(const ModelDataset& dataset, const PairEnumeration& pairs, const RunConfig& cfg);
ConfluenceRun run_confluence(const ModelDataset& dataset, const RunConfig& cfg);

DispersionRun run_dispersion(const CoreMap& cores, const PairEnumeration& pairs, const RunConfig& cfg,
                             ActivationSide side);
DispersionRun run_dispersion(const ModelDataset& dataset, const RunConfig& cfg, ActivationSide side);

// Deterministic partitions for every neuron with a nonempty core, replaced by
// externally supplied partitions where given and relabelled by the LLM when
// the method asks for it.
PartitionMap compute_partitions(const ModelDataset& dataset, const CoreMap& cores, const RunConfig& cfg,
                                std::size_t* label_failures = nullptr);

DistancingRun run_distancing(const ModelDataset& dataset, const PairEnumeration& pairs,
                             const PartitionMap& partitions, const RunConfig& cfg);
DistancingRun run_distancing(const ModelDataset& dataset, const RunConfig& cfg);

AnalysisReport analyze(const ModelDataset& dataset, const RunConfig& cfg);

}  // namespace catres
