#include "catres/labeler.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "catres/error.hpp"
#include "catres/hash.hpp"
#include "catres/parallel.hpp"
#include "httplib.h"
#include "json.hpp"

namespace catres {

using nlohmann::json;

void LabelerConfig::validate() const {
  if (endpoint.empty()) throw ValidationError("labeler: endpoint is required for the llm method");
  if (max_retries < 0) throw ValidationError("labeler: max_retries must be >= 0");
  if (timeout.count() <= 0) throw ValidationError("labeler: timeout must be positive");
  if (concurrency == 0) throw ValidationError("labeler: concurrency must be >= 1");
}

HttpTransport::HttpTransport(const LabelerConfig& cfg) : timeout_(cfg.timeout) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch match;
  if (!std::regex_match(cfg.endpoint, match, url)) throw ValidationError("labeler: malformed endpoint " + cfg.endpoint);
  base_ = match[1].str();
  path_ = match[2].matched ? match[2].str() : "/";
}

std::string HttpTransport::post(const std::string& body) {
  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (const char* key = std::getenv("CATRES_LLM_API_KEY")) headers.emplace("Authorization", std::string("Bearer ") + key);
  auto res = client.Post(path_, headers, body, "application/json");
  if (!res) throw IoError("labeler: request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError(fmt::format("labeler: HTTP {}", res->status));
  return res->body;
}

std::string sanitize_label(const std::string& raw) {
  std::string line = raw.substr(0, raw.find('\n'));
  auto strip = [](std::string& s) {
    const char* junk = " \t\r\"'`*.";
    const auto b = s.find_first_not_of(junk);
    if (b == std::string::npos) {
      s.clear();
      return;
    }
    s = s.substr(b, s.find_last_not_of(junk) - b + 1);
  };
  strip(line);
  if (const auto colon = line.find(':'); colon != std::string::npos && colon + 1 < line.size()) {
    // "Label: legal actions"
    std::string head = line.substr(0, colon);
    std::transform(head.begin(), head.end(), head.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (head == "label" || head == "category") {
      line = line.substr(colon + 1);
      strip(line);
    }
  }
  std::istringstream words(line);
  std::string word, out;
  for (int n = 0; n < 5 && words >> word; ++n) out += (out.empty() ? "" : " ") + word;
  return out;
}

std::optional<std::string> parse_label_response(const std::string& body) {
  const json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  std::optional<std::string> text;
  if (doc.contains("label") && doc["label"].is_string()) {
    text = doc["label"].get<std::string>();
  } else if (doc.contains("response") && doc["response"].is_string()) {
    text = doc["response"].get<std::string>();
  } else if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const auto& choice = doc["choices"][0];
    if (choice.contains("text") && choice["text"].is_string()) {
      text = choice["text"].get<std::string>();
    } else if (choice.contains("message") && choice["message"].is_object() && choice["message"].contains("content") &&
               choice["message"]["content"].is_string()) {
      text = choice["message"]["content"].get<std::string>();
    }
  }
  if (!text) return std::nullopt;
  std::string label = sanitize_label(*text);
  if (label.empty()) return std::nullopt;
  return label;
}

std::string label_cache_key(const NeuronRef& neuron, const TokenSet& ids) {
  Sha256 h;
  for (TokenId id : ids) h.update_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(id)));
  return fmt::format("{}:{}:{}", neuron.layer, neuron.index, h.hex_digest());
}

// ---------------------------------------------------------------------------

LabelCache::LabelCache(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const json rec = json::parse(line, nullptr, false);
    if (rec.is_discarded() || !rec.contains("key") || !rec.contains("label")) {
      spdlog::warn("label cache {}:{}: unreadable entry ignored", path_.string(), line_no);
      continue;
    }
    entries_[rec["key"].get<std::string>()] = rec["label"].get<std::string>();
  }
}

std::optional<std::string> LabelCache::get(const std::string& key) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void LabelCache::put(const std::string& key, const std::string& label) {
  std::lock_guard lock(mu_);
  entries_[key] = label;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to label cache " + path_.string());
  const std::time_t now = std::time(nullptr);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  // one write per line keeps concurrent readers from seeing half an entry
  const std::string rec = json{{"key", key}, {"label", label}, {"timestamp", stamp}}.dump() + "\n";
  out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  out.flush();
}

std::size_t LabelCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

// ---------------------------------------------------------------------------

std::string load_prompt_template(const std::filesystem::path& path) {
  const std::filesystem::path file = path.empty() ? std::filesystem::path(CATRES_PROMPT_DIR) / "cluster_label.txt" : path;
  std::ifstream in(file);
  if (!in) throw IoError("cannot read prompt template " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string render_prompt(const std::string& tmpl, const std::vector<std::string>& surfaces) {
  std::string tokens;
  for (const auto& s : surfaces) tokens += (tokens.empty() ? "[" : ", [") + s + "]";
  std::string out = tmpl;
  static const std::string placeholder = "{{tokens}}";
  for (auto pos = out.find(placeholder); pos != std::string::npos; pos = out.find(placeholder, pos + tokens.size())) {
    out.replace(pos, placeholder.size(), tokens);
  }
  return out;
}

ClusterLabeler::ClusterLabeler(LabelerConfig cfg, std::shared_ptr<LabelTransport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), cache_(cfg_.cache_path) {
  if (!transport_) {
    cfg_.validate();
    transport_ = std::make_shared<HttpTransport>(cfg_);
  }
  template_ = load_prompt_template(cfg_.prompt_path);
}

LabelOutcome ClusterLabeler::label(const ClusterPartition& partition, const EmbeddingTable& emb) {
  LabelOutcome outcome;
  outcome.partition = partition;
  outcome.partition.method = ClusterMethod::llm;
  for (std::size_t ci = 0; ci < outcome.partition.clusters.size(); ++ci) {
    auto& cluster = outcome.partition.clusters[ci];
    const std::string key = label_cache_key(partition.neuron, cluster.token_ids);
    if (auto hit = cache_.get(key)) {
      cluster.label = *hit;
      ++outcome.cache_hits;
      continue;
    }
    std::vector<std::string> surfaces;
    for (TokenId id : cluster.token_ids) {
      auto it = emb.surfaces().find(id);
      surfaces.push_back(it != emb.surfaces().end() ? it->second : "#" + std::to_string(id));
    }
    const std::string body = json{{"model", cfg_.model}, {"prompt", render_prompt(template_, surfaces)}}.dump();

    std::string reason;
    std::optional<std::string> label;
    for (int attempt = 0; attempt <= cfg_.max_retries && !label; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(cfg_.backoff_base * (1 << (attempt - 1)));
      ++outcome.network_calls;
      try {
        label = parse_label_response(transport_->post(body));
        if (!label) reason = "malformed response";
      } catch (const std::exception& e) {
        reason = e.what();
      }
    }
    if (label) {
      cluster.label = *label;
      cache_.put(key, *label);
    } else {
      spdlog::warn("labeler: neuron {} cluster {} keeps placeholder ({})", to_string(partition.neuron), ci, reason);
      outcome.failures.push_back({partition.neuron, ci, reason});
    }
  }
  return outcome;
}

BatchLabelOutcome label_clusters_llm(const PartitionMap& partitions, const EmbeddingTable& emb,
                                     ClusterLabeler& labeler, unsigned concurrency) {
  std::vector<const ClusterPartition*> items;
  for (const auto& [ref, part] : partitions) items.push_back(&part);
  std::vector<LabelOutcome> results(items.size());
  parallel_for(items.size(), concurrency, [&](std::size_t i) { results[i] = labeler.label(*items[i], emb); });

  BatchLabelOutcome out;
  for (auto& r : results) {
    out.network_calls += r.network_calls;
    out.cache_hits += r.cache_hits;
    out.failures.insert(out.failures.end(), r.failures.begin(), r.failures.end());
    const NeuronRef key = r.partition.neuron;
    out.partitions.emplace(key, std::move(r.partition));
  }
  return out;
}

}  // namespace catres
