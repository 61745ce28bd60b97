#include "catres/server.hpp"

#include <algorithm>
#include <csignal>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include <pthread.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "catres/bundle.hpp"
#include "catres/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace catres {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_body(int status, const std::string& message) {
  return json{{"error", message}, {"status", status}}.dump() + "\n";
}

HttpResponse error(int status, const std::string& message) { return {status, "application/json", error_body(status, message)}; }

std::optional<int> parse_index(const std::string& text) {
  if (text.empty() || text.size() > 9 || !std::all_of(text.begin(), text.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return std::nullopt;
  }
  return std::stoi(text);
}

}  // namespace

BundleStore BundleStore::load(const std::filesystem::path& dir) {
  const auto index_path = dir / "index.json";
  if (!std::filesystem::exists(index_path)) throw IoError("bundle index missing: " + index_path.string());
  BundleStore store;
  store.index_body_ = read_file(index_path);
  const json index = json::parse(store.index_body_, nullptr, false);
  if (index.is_discarded() || !index.is_object()) throw ValidationError(index_path.string() + ": not a JSON object");
  if (index.value("format", std::string()) != kBundleFormat) {
    throw ValidationError(index_path.string() + ": unsupported bundle format");
  }
  store.summary_body_ = read_file(dir / index.value("summary", std::string("summary.json")));

  std::vector<std::string> dangling;
  for (const auto& entry : index.at("neurons")) {
    const NeuronRef ref{entry.at("layer").get<int>(), entry.at("index").get<int>()};
    const auto path = dir / entry.at("path").get<std::string>();
    if (!std::filesystem::is_regular_file(path)) {
      dangling.push_back(entry.at("path").get<std::string>());
      continue;
    }
    std::string body = read_file(path);
    const json doc = json::parse(body, nullptr, false);
    if (doc.is_discarded() || doc.value("layer", -1) != ref.layer || doc.value("index", -1) != ref.index) {
      throw ValidationError("bundle document " + path.string() + " does not describe neuron " + to_string(ref));
    }
    for (const auto& tok : doc.at("core_tokens")) {
      store.tokens_.push_back({ref, tok.at("id").get<TokenId>(), tok.at("t").get<std::string>(), tok.at("a").get<double>()});
    }
    ordered_json pre;
    pre["layer"] = ref.layer;
    pre["index"] = ref.index;
    pre["precursors"] = doc.at("precursors");
    store.precursors_.emplace(ref, pre.dump() + "\n");
    store.neurons_.emplace(ref, std::move(body));
  }
  if (!dangling.empty()) {
    std::string list;
    for (std::size_t i = 0; i < dangling.size() && i < 10; ++i) list += (i ? ", " : "") + dangling[i];
    throw ValidationError(fmt::format("bundle index references {} missing documents: {}", dangling.size(), list));
  }

  store.content_hash_ = bundle_content_hash(dir);
  if (index.value("content_hash", std::string()) != store.content_hash_) {
    throw ValidationError("bundle content hash mismatch: index records " + index.value("content_hash", std::string()) +
                          ", files hash to " + store.content_hash_);
  }
  std::stable_sort(store.tokens_.begin(), store.tokens_.end(), [](const SearchHit& a, const SearchHit& b) {
    if (a.activation != b.activation) return a.activation > b.activation;
    if (a.neuron != b.neuron) return a.neuron < b.neuron;
    return a.id < b.id;
  });
  return store;
}

const std::string* BundleStore::neuron_body(const NeuronRef& ref) const {
  auto it = neurons_.find(ref);
  return it == neurons_.end() ? nullptr : &it->second;
}

const std::string* BundleStore::precursors_body(const NeuronRef& ref) const {
  auto it = precursors_.find(ref);
  return it == precursors_.end() ? nullptr : &it->second;
}

std::vector<SearchHit> BundleStore::search(const std::string& query, bool* truncated) const {
  std::vector<SearchHit> out;
  if (truncated) *truncated = false;
  for (const auto& hit : tokens_) {
    if (hit.surface.find(query) == std::string::npos) continue;
    if (out.size() == kSearchLimit) {
      if (truncated) *truncated = true;
      break;
    }
    out.push_back(hit);
  }
  return out;
}

HttpResponse handle_request(const BundleStore& store, const std::string& method, const std::string& path,
                            const std::map<std::string, std::string>& query) {
  if (method != "GET" && method != "HEAD") return error(405, "method not allowed");
  if (path == "/api/index") return {200, "application/json", store.index_body()};
  if (path == "/api/summary") return {200, "application/json", store.summary_body()};
  if (path == "/api/search") {
    auto it = query.find("q");
    if (it == query.end() || it->second.empty()) return error(400, "query parameter q must be nonempty");
    bool truncated = false;
    ordered_json results = ordered_json::array();
    for (const auto& hit : store.search(it->second, &truncated)) {
      results.push_back({{"layer", hit.neuron.layer},
                         {"index", hit.neuron.index},
                         {"id", hit.id},
                         {"t", hit.surface},
                         {"a", hit.activation}});
    }
    ordered_json body;
    body["query"] = it->second;
    body["count"] = results.size();
    body["truncated"] = truncated;
    body["results"] = results;
    return {200, "application/json", body.dump(-1, ' ', false, ordered_json::error_handler_t::replace) + "\n"};
  }

  static const std::regex neuron_route(R"(^/api/neurons/([^/]+)/([^/]+)(/precursors)?/?$)");
  std::smatch match;
  if (std::regex_match(path, match, neuron_route)) {
    const auto layer = parse_index(match[1].str());
    const auto index = parse_index(match[2].str());
    if (!layer || !index) return error(404, "no such neuron");
    const NeuronRef ref{*layer, *index};
    const std::string* body = match[3].matched ? store.precursors_body(ref) : store.neuron_body(ref);
    if (!body) return error(404, "no such neuron " + to_string(ref));
    return {200, "application/json", *body};
  }
  return error(404, "no such endpoint");
}

// ---------------------------------------------------------------------------

struct ViewerServer::Impl {
  httplib::Server http;
  int port = 0;
};

ViewerServer::ViewerServer(ServerConfig cfg)
    : cfg_(std::move(cfg)), store_(BundleStore::load(cfg_.bundle_dir)), impl_(std::make_unique<Impl>()) {
  auto& http = impl_->http;
  const auto cors = cfg_.cors_origin;
  auto forward = [this, cors](const httplib::Request& req, httplib::Response& res) {
    std::map<std::string, std::string> query;
    for (const auto& [k, v] : req.params) query.emplace(k, v);
    const HttpResponse out = handle_request(store_, req.method, req.path, query);
    res.status = out.status;
    res.set_content(out.body, out.content_type);
    if (cors) res.set_header("Access-Control-Allow-Origin", *cors);
  };
  http.Get(R"(/api/.*)", forward);
  http.Post(R"(/api/.*)", forward);
  http.Put(R"(/api/.*)", forward);
  http.Delete(R"(/api/.*)", forward);
  http.Patch(R"(/api/.*)", forward);
  if (cfg_.ui_dir) {
    if (!http.set_mount_point("/", cfg_.ui_dir->string())) throw IoError("UI directory not found: " + cfg_.ui_dir->string());
  }
  http.set_error_handler([cors](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    res.set_content(error_body(res.status, "not found"), "application/json");
    if (cors) res.set_header("Access-Control-Allow-Origin", *cors);
  });
}

ViewerServer::~ViewerServer() { stop(); }

int ViewerServer::bind() {
  auto& http = impl_->http;
  if (cfg_.port == 0) {
    impl_->port = http.bind_to_any_port(cfg_.host);
  } else {
    impl_->port = http.bind_to_port(cfg_.host, cfg_.port) ? cfg_.port : -1;
  }
  if (impl_->port < 0) throw IoError(fmt::format("cannot bind {}:{}", cfg_.host, cfg_.port));
  return impl_->port;
}

void ViewerServer::listen() { impl_->http.listen_after_bind(); }

void ViewerServer::stop() {
  if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

bool ViewerServer::running() const { return impl_->http.is_running(); }

void serve(const ServerConfig& cfg) {
  // Block the shutdown signals before any thread exists so only the waiter sees them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  ViewerServer server(cfg);
  const int port = server.bind();
  spdlog::info("serving {} neuron documents (bundle {}) on http://{}:{}", server.store().size(),
               server.store().content_hash().substr(0, 12), cfg.host, port);

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, shutting down", sig);
    server.stop();
  });
  server.listen();
  // listen() can also end without a signal (bind lost); release the waiter.
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
}

}  // namespace catres
