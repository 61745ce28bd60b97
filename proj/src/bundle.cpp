#include "catres/bundle.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "catres/error.hpp"
#include "catres/hash.hpp"
#include "catres/report.hpp"
#include "json.hpp"

namespace catres {

namespace {

using nlohmann::ordered_json;

ordered_json token_list(const TokenSet& ids, const EmbeddingTable& emb) {
  ordered_json out = ordered_json::array();
  for (TokenId id : ids) {
    auto it = emb.surfaces().find(id);
    out.push_back({{"id", id}, {"t", it != emb.surfaces().end() ? it->second : std::string()}});
  }
  return out;
}

ordered_json optional_number(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

std::string dump(const ordered_json& j) { return j.dump(-1, ' ', false, ordered_json::error_handler_t::replace) + "\n"; }

}  // namespace

std::filesystem::path neuron_document_path(const NeuronRef& ref) {
  return std::filesystem::path("neurons") / std::to_string(ref.layer) / (std::to_string(ref.index) + ".json");
}

std::string bundle_content_hash(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("bundle directory not found: " + dir.string());
  std::vector<std::string> files;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string rel = std::filesystem::relative(entry.path(), dir).generic_string();
    if (rel != "index.json") files.push_back(rel);
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& rel : files) {
    std::ifstream in(dir / rel, std::ios::binary);
    if (!in) throw IoError("cannot read " + (dir / rel).string());
    std::ostringstream ss;
    ss << in.rdbuf();
    h.update(rel);
    h.update(ss.str());
  }
  return h.hex_digest();
}

BundleInfo export_viewer_bundle(const ModelDataset& dataset, const AnalysisReport& report,
                                const std::filesystem::path& dir) {
  const auto& emb = dataset.embeddings();
  const auto& weights = dataset.weights();

  std::map<std::pair<NeuronRef, NeuronRef>, std::pair<std::optional<double>, std::optional<double>>> dispersion;
  for (const auto& r : report.dispersion_precursor.records) dispersion[{r.target, r.precursor}].first = r.d;
  for (const auto& r : report.dispersion_target.records) dispersion[{r.target, r.precursor}].second = r.d;
  std::map<std::pair<NeuronRef, NeuronRef>, std::vector<const DistancingRecord*>> distancing;
  for (const auto& r : report.distancing.records) distancing[{r.target.neuron, r.source.neuron}].push_back(&r);
  std::map<NeuronRef, std::vector<const ConfluenceRecord*>> confluence;
  for (const auto& r : report.confluence.records) confluence[r.target].push_back(&r);
  std::map<NeuronRef, std::vector<const PairEntry*>> incoming, outgoing;
  for (const auto& p : report.pairs.pairs) {
    incoming[p.target].push_back(&p);
    outgoing[p.precursor.neuron].push_back(&p);
  }

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::filesystem::remove_all(dir / "neurons", ec);
  write_text_file(dir / "summary.json", summary_json(report));

  ordered_json index_neurons = ordered_json::array();
  ordered_json layers = ordered_json::array();
  std::size_t documents = 0;
  for (int layer : {weights.source_layer, weights.target_layer}) {
    const std::size_t size = dataset.layer_size(layer);
    layers.push_back({{"layer", layer}, {"size", size}});
    std::filesystem::create_directories(dir / "neurons" / std::to_string(layer), ec);
    if (ec) throw IoError("cannot create bundle directory: " + ec.message());
    for (std::size_t i = 0; i < size; ++i) {
      const NeuronRef ref{layer, static_cast<int>(i)};
      ordered_json doc;
      doc["layer"] = ref.layer;
      doc["index"] = ref.index;
      const auto* profile = dataset.find(ref);
      doc["profile_size"] = profile ? profile->entries.size() : 0;

      ordered_json core = ordered_json::array();
      bool short_profile = true;
      if (auto it = report.cores.find(ref); it != report.cores.end()) {
        short_profile = it->second.short_profile;
        for (const auto& e : it->second.tokens) core.push_back({{"id", e.id}, {"t", e.surface}, {"a", e.activation}});
      }
      doc["core_tokens"] = core;
      doc["short_profile"] = short_profile;

      ordered_json clusters = ordered_json::array();
      if (auto it = report.partitions.find(ref); it != report.partitions.end()) {
        doc["cluster_method"] = to_string(it->second.method);
        for (std::size_t c = 0; c < it->second.clusters.size(); ++c) {
          const auto& cl = it->second.clusters[c];
          clusters.push_back({{"index", c}, {"label", cl.label}, {"ids", cl.token_ids}});
        }
      } else {
        doc["cluster_method"] = nullptr;
      }
      doc["clusters"] = clusters;

      ordered_json precursors = ordered_json::array();
      for (const PairEntry* p : incoming[ref]) {
        const auto& disp = dispersion[{ref, p->precursor.neuron}];
        ordered_json dist = ordered_json::array();
        for (const DistancingRecord* r : distancing[{ref, p->precursor.neuron}]) {
          dist.push_back({{"source_cluster", r->source.cluster},
                          {"target_cluster", r->target.cluster},
                          {"size_x", r->size_x},
                          {"size_y", r->size_y},
                          {"d", r->d},
                          {"kw_statistic", r->kw_statistic},
                          {"kw_p", r->kw_p},
                          {"n_common", r->n_common},
                          {"d_prime", r->d_prime},
                          {"binomial_p", r->binomial_p}});
        }
        precursors.push_back({{"layer", p->precursor.neuron.layer},
                              {"index", p->precursor.neuron.index},
                              {"rank", p->rank},
                              {"weight", p->precursor.weight},
                              {"taken", token_list(p->partition.taken, emb)},
                              {"left", token_list(p->partition.left, emb)},
                              {"dispersion", {{"precursor", optional_number(disp.first)}, {"target", optional_number(disp.second)}}},
                              {"distancing", dist}});
      }
      doc["precursors"] = precursors;

      ordered_json successors = ordered_json::array();
      for (const PairEntry* p : outgoing[ref]) {
        successors.push_back({{"layer", p->target.layer},
                              {"index", p->target.index},
                              {"rank", p->rank},
                              {"weight", p->precursor.weight},
                              {"taken_size", p->partition.taken.size()}});
      }
      doc["successors"] = successors;

      ordered_json conf = ordered_json::array();
      for (const ConfluenceRecord* r : confluence[ref]) {
        conf.push_back({{"x", {r->precursor_x.layer, r->precursor_x.index}},
                        {"y", {r->precursor_y.layer, r->precursor_y.index}},
                        {"size_x", r->size_x},
                        {"size_y", r->size_y},
                        {"m", r->m},
                        {"pair_count", r->pair_count}});
      }
      doc["confluence"] = conf;

      const auto rel = neuron_document_path(ref);
      write_text_file(dir / rel, dump(doc));
      ++documents;
      index_neurons.push_back({{"layer", ref.layer},
                               {"index", ref.index},
                               {"path", rel.generic_string()},
                               {"core_size", core.size()},
                               {"precursors", precursors.size()}});
    }
  }

  BundleInfo info;
  info.documents = documents;
  info.content_hash = bundle_content_hash(dir);
  ordered_json index;
  index["format"] = kBundleFormat;
  index["provenance"] = report.provenance;
  index["content_hash"] = info.content_hash;
  index["summary"] = "summary.json";
  index["layers"] = layers;
  index["neurons"] = index_neurons;
  write_text_file(dir / "index.json", dump(index));
  return info;
}

}  // namespace catres
