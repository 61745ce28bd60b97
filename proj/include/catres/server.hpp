#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catres/dataset.hpp"

namespace catres {

struct SearchHit {
  NeuronRef neuron;
  TokenId id = 0;
  std::string surface;
  double activation = 0.0;
};

inline constexpr std::size_t kSearchLimit = 200;

// Immutable in-memory snapshot of an exported bundle. Loading verifies that
// every neuron listed in the index resolves and that the recomputed content
// hash matches the one recorded in the index.
class BundleStore {
 public:
  static BundleStore load(const std::filesystem::path& dir);

  const std::string& content_hash() const noexcept { return content_hash_; }
  const std::string& index_body() const noexcept { return index_body_; }
  const std::string& summary_body() const noexcept { return summary_body_; }
  const std::string* neuron_body(const NeuronRef& ref) const;
  const std::string* precursors_body(const NeuronRef& ref) const;
  std::size_t size() const noexcept { return neurons_.size(); }

  // Case-sensitive substring match over core-token surfaces, highest
  // activation first, at most kSearchLimit hits.
  std::vector<SearchHit> search(const std::string& query, bool* truncated = nullptr) const;

 private:
  std::string content_hash_;
  std::string index_body_;
  std::string summary_body_;
  std::map<NeuronRef, std::string> neurons_;
  std::map<NeuronRef, std::string> precursors_;
  std::vector<SearchHit> tokens_;  // pre-sorted by activation
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// Pure routing over the store; the HTTP binding only forwards to this.
HttpResponse handle_request(const BundleStore& store, const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query);

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path bundle_dir;
  std::optional<std::string> cors_origin;
  std::optional<std::filesystem::path> ui_dir;
};

class ViewerServer {
 public:
  explicit ViewerServer(ServerConfig cfg);
  ~ViewerServer();
  ViewerServer(const ViewerServer&) = delete;
  ViewerServer& operator=(const ViewerServer&) = delete;

  // Binds the socket; returns the bound port.
  int bind();
  // Blocks until stop() is called.
  void listen();
  void stop();
  bool running() const;

  const BundleStore& store() const noexcept { return store_; }

 private:
  struct Impl;
  ServerConfig cfg_;
  BundleStore store_;
  std::unique_ptr<Impl> impl_;
};

// Load, bind, serve until SIGINT/SIGTERM.
void serve(const ServerConfig& cfg);

}  // namespace catres
