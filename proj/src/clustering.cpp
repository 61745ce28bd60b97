#include "catres/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "catres/error.hpp"
#include "json.hpp"

namespace catres {

namespace {

using nlohmann::json;

using Point = std::vector<double>;

Point unit_point(const EmbeddingTable& emb, TokenId id) {
  const auto row = emb.row(id);
  const double inv = 1.0 / emb.norm(id);
  Point p(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) p[i] = row[i] * inv;
  return p;
}

double dot(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Returns false when the members cancel out exactly; the caller keeps the old
// centre in that case.
bool normalised_mean(const std::vector<Point>& points, const std::vector<std::size_t>& assignment, std::size_t cluster,
                     Point& out) {
  Point sum(points.front().size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (assignment[i] != cluster) continue;
    for (std::size_t d = 0; d < sum.size(); ++d) sum[d] += points[i][d];
  }
  const double norm = std::sqrt(dot(sum, sum));
  if (norm == 0.0) return false;
  for (auto& v : sum) v /= norm;
  out = std::move(sum);
  return true;
}

std::vector<Cluster> build_clusters(const CoreTokenSet& core, const EmbeddingTable& emb,
                                    const std::vector<std::size_t>& assignment, std::size_t c) {
  std::vector<std::vector<TokenId>> members(c);
  for (std::size_t i = 0; i < assignment.size(); ++i) members[assignment[i]].push_back(core.tokens[i].id);
  std::vector<Cluster> clusters;
  for (auto& m : members) {
    if (m.empty()) continue;
    Cluster cl;
    cl.token_ids = make_token_set(std::move(m));
    cl.centroid = centroid_of(cl.token_ids, emb);
    clusters.push_back(std::move(cl));
  }
  std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.token_ids.size() != b.token_ids.size()) return a.token_ids.size() > b.token_ids.size();
    return a.token_ids.front() < b.token_ids.front();
  });
  for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].label = "cluster-" + std::to_string(i);
  return clusters;
}

}  // namespace

const char* to_string(ClusterMethod method) { return method == ClusterMethod::llm ? "llm" : "deterministic"; }

ClusterMethod parse_cluster_method(const std::string& text) {
  if (text == "deterministic") return ClusterMethod::deterministic;
  if (text == "llm") return ClusterMethod::llm;
  throw ValidationError("unknown clustering method '" + text + "' (expected deterministic|llm)");
}

std::vector<double> centroid_of(const TokenSet& ids, const EmbeddingTable& emb) {
  std::vector<double> mean(emb.dimension(), 0.0);
  if (ids.empty()) return mean;
  for (TokenId id : ids) {
    const auto row = emb.row(id);
    for (std::size_t d = 0; d < row.size(); ++d) mean[d] += row[d];
  }
  for (auto& v : mean) v /= static_cast<double>(ids.size());
  return mean;
}

ClusterPartition cluster_deterministic(const CoreTokenSet& core, const EmbeddingTable& emb, std::size_t c,
                                       std::uint64_t seed) {
  if (core.tokens.empty()) throw DomainError("cluster_deterministic: empty core set for neuron " + to_string(core.neuron));
  if (c == 0) throw DomainError("cluster_deterministic: c must be at least 1");

  ClusterPartition part;
  part.neuron = core.neuron;
  part.seed = seed;
  part.method = ClusterMethod::deterministic;
  const std::size_t n = core.tokens.size();

  if (n < c) {
    part.underfilled = true;
    std::vector<std::size_t> assignment(n);
    for (std::size_t i = 0; i < n; ++i) assignment[i] = i;
    part.clusters = build_clusters(core, emb, assignment, n);
    return part;
  }

  std::vector<Point> points;
  points.reserve(n);
  for (const auto& t : core.tokens) points.push_back(unit_point(emb, t.id));

  // farthest-point seeding
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen{static_cast<std::size_t>(rng() % n)};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::vector<bool> used(n, false);
  used[chosen.front()] = true;
  while (chosen.size() < c) {
    const Point& last = points[chosen.back()];
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], 1.0 - dot(points[i], last));
      if (!used[i] && nearest[i] > best_dist) {
        best_dist = nearest[i];
        best = i;
      }
    }
    used[best] = true;
    chosen.push_back(best);
  }
  std::vector<Point> centres;
  for (std::size_t i : chosen) centres.push_back(points[i]);

  std::vector<std::size_t> assignment(n, c);
  std::size_t iter = 0;
  for (; iter < kKMeansIterationCap; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < c; ++j) {
        const double s = dot(points[i], centres[j]);
        if (s > best_sim) {
          best_sim = s;
          best = j;
        }
      }
      if (assignment[i] != best) {
        assignment[i] = best;
        changed = true;
      }
    }
    // refill empty clusters
    std::vector<std::size_t> sizes(c, 0);
    for (std::size_t a : assignment) ++sizes[a];
    for (std::size_t j = 0; j < c; ++j) {
      if (sizes[j] != 0) continue;
      std::size_t far = n;
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assignment[i]] < 2) continue;
        const double s = dot(points[i], centres[assignment[i]]);
        if (s < worst) {
          worst = s;
          far = i;
        }
      }
      --sizes[assignment[far]];
      assignment[far] = j;
      sizes[j] = 1;
      centres[j] = points[far];
      changed = true;
    }
    if (!changed) break;
    for (std::size_t j = 0; j < c; ++j) normalised_mean(points, assignment, j, centres[j]);
  }
  part.iterations = iter;
  part.clusters = build_clusters(core, emb, assignment, c);
  return part;
}

std::vector<Cluster> filter_min_cardinality(std::vector<Cluster> clusters, std::size_t minimum) {
  if (minimum == 0) throw DomainError("filter_min_cardinality: minimum must be at least 1");
  std::erase_if(clusters, [&](const Cluster& cl) { return cl.token_ids.size() < minimum; });
  return clusters;
}

void write_partitions(std::ostream& out, const PartitionMap& partitions) {
  for (const auto& [ref, part] : partitions) {
    json clusters = json::array();
    for (const auto& cl : part.clusters) clusters.push_back({{"label", cl.label}, {"ids", cl.token_ids}});
    json rec = {{"layer", ref.layer}, {"neuron", ref.index}, {"method", to_string(part.method)}, {"clusters", clusters}};
    if (part.method == ClusterMethod::deterministic) rec["seed"] = part.seed;
    out << rec.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

void write_partitions(const std::filesystem::path& path, const PartitionMap& partitions) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  write_partitions(out, partitions);
  if (!out) throw IoError("write failed: " + path.string());
}

PartitionMap load_partitions(const std::filesystem::path& path, const EmbeddingTable& emb) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  PartitionMap out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    ClusterPartition part;
    try {
      const json rec = json::parse(line);
      part.neuron = {rec.at("layer").get<int>(), rec.at("neuron").get<int>()};
      part.method = parse_cluster_method(rec.value("method", std::string("llm")));
      part.seed = rec.value("seed", std::uint64_t{0});
      for (const auto& c : rec.at("clusters")) {
        Cluster cl;
        cl.label = c.value("label", std::string());
        cl.token_ids = make_token_set(c.at("ids").get<std::vector<TokenId>>());
        if (cl.token_ids.empty()) throw ParseError(path.string(), line_no, "empty cluster");
        cl.centroid = centroid_of(cl.token_ids, emb);
        part.clusters.push_back(std::move(cl));
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string(), line_no, e.what());
    }
    TokenSet seen;
    for (const auto& cl : part.clusters) {
      const auto overlap = set_intersection(seen, cl.token_ids);
      if (!overlap.empty()) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": clusters of neuron " +
                              to_string(part.neuron) + " overlap on token " + std::to_string(overlap.front()));
      }
      TokenSet merged;
      std::set_union(seen.begin(), seen.end(), cl.token_ids.begin(), cl.token_ids.end(), std::back_inserter(merged));
      seen = std::move(merged);
    }
    const NeuronRef key = part.neuron;
    if (!out.emplace(key, std::move(part)).second) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": duplicate partition for neuron " +
                            to_string(key));
    }
  }
  return out;
}

}  // namespace catres
