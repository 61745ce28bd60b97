#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "catres/clustering.hpp"

namespace catres {

struct LabelerConfig {
  std::string endpoint;  // http(s)://host[:port]/path
  std::string model = "gpt-4o";
  std::chrono::milliseconds timeout{30000};
  int max_retries = 2;
  std::filesystem::path cache_path;  // empty: in-memory only
  std::chrono::milliseconds backoff_base{200};
  unsigned concurrency = 4;
  std::filesystem::path prompt_path;  // empty: bundled template

  void validate() const;
};

// One POST of {model, prompt}; returns the raw response body or throws.
class LabelTransport {
 public:
  virtual ~LabelTransport() = default;
  virtual std::string post(const std::string& body) = 0;
};

class HttpTransport final : public LabelTransport {
 public:
  explicit HttpTransport(const LabelerConfig& cfg);
  std::string post(const std::string& body) override;

 private:
  std::string base_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

// Extracts a label from {"label"}, {"response"}, {"choices":[{"text"}]} or
// {"choices":[{"message":{"content"}}]} bodies and sanitises it to at most
// five words. Returns nullopt on anything else.
std::optional<std::string> parse_label_response(const std::string& body);
std::string sanitize_label(const std::string& raw);

// Cache key: "<layer>:<index>:<sha256 of the sorted id list>".
std::string label_cache_key(const NeuronRef& neuron, const TokenSet& ids);

// JSONL {key, label, timestamp}; appends are serialised and flushed per line.
class LabelCache {
 public:
  LabelCache() = default;
  explicit LabelCache(std::filesystem::path path);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& label);
  std::size_t size() const;

 private:
  std::filesystem::path path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

std::string load_prompt_template(const std::filesystem::path& path = {});
std::string render_prompt(const std::string& tmpl, const std::vector<std::string>& surfaces);

struct LabelFailure {
  NeuronRef neuron;
  std::size_t cluster = 0;
  std::string reason;
};

struct LabelOutcome {
  ClusterPartition partition;
  std::vector<LabelFailure> failures;
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
};

class ClusterLabeler {
 public:
  ClusterLabeler(LabelerConfig cfg, std::shared_ptr<LabelTransport> transport = nullptr);

  // Token membership is never touched; only labels change. Clusters whose
  // request fails after all retries keep their placeholder label.
  LabelOutcome label(const ClusterPartition& partition, const EmbeddingTable& emb);

  LabelCache& cache() noexcept { return cache_; }

 private:
  LabelerConfig cfg_;
  std::shared_ptr<LabelTransport> transport_;
  LabelCache cache_;
  std::string template_;
};

// Labels every partition using a bounded worker pool (cfg.concurrency).
struct BatchLabelOutcome {
  PartitionMap partitions;
  std::vector<LabelFailure> failures;
  std::size_t network_calls = 0;
  std::size_t cache_hits = 0;
};

BatchLabelOutcome label_clusters_llm(const PartitionMap& partitions, const EmbeddingTable& emb,
                                     ClusterLabeler& labeler, unsigned concurrency);

}  // namespace catres
