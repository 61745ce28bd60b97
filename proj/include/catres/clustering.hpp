#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "catres/dataset.hpp"
#include "catres/extraction.hpp"

namespace catres {

struct Cluster {
  std::string label;
  TokenSet token_ids;
  std::vector<double> centroid;  // arithmetic mean of member embeddings

  bool operator==(const Cluster&) const = default;
};

enum class ClusterMethod { deterministic, llm };
const char* to_string(ClusterMethod method);
ClusterMethod parse_cluster_method(const std::string& text);

struct ClusterPartition {
  NeuronRef neuron;
  std::vector<Cluster> clusters;
  ClusterMethod method = ClusterMethod::deterministic;
  std::uint64_t seed = 0;
  bool underfilled = false;  // fewer core tokens than requested clusters
  std::size_t iterations = 0;

  bool operator==(const ClusterPartition&) const = default;
};

using PartitionMap = std::map<NeuronRef, ClusterPartition>;

inline constexpr std::size_t kKMeansIterationCap = 50;

// Spherical k-means over unit-normalised embeddings of the core tokens.
// Farthest-point seeding from a seeded start, at most 50 Lloyd iterations,
// empty clusters refilled with the point farthest from its own centroid.
// Clusters are ordered by descending size (ties: smallest member id) and
// labelled "cluster-<i>".
ClusterPartition cluster_deterministic(const CoreTokenSet& core, const EmbeddingTable& emb, std::size_t c,
                                       std::uint64_t seed);

// Clusters with at least `minimum` members, order preserved.
std::vector<Cluster> filter_min_cardinality(std::vector<Cluster> clusters, std::size_t minimum);

std::vector<double> centroid_of(const TokenSet& ids, const EmbeddingTable& emb);

// JSONL, one line per neuron:
// {"layer","neuron","method","clusters":[{"label","ids":[...]}]}
void write_partitions(std::ostream& out, const PartitionMap& partitions);
void write_partitions(const std::filesystem::path& path, const PartitionMap& partitions);
// Centroids are recomputed from `emb`.
PartitionMap load_partitions(const std::filesystem::path& path, const EmbeddingTable& emb);

}  // namespace catres
