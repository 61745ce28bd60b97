#include "catres/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "catres/error.hpp"

namespace catres {

namespace {

template <typename T>
double cosine_impl(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw DomainError("cosine: dimension mismatch");
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i], b = v[i];
    dot += a * b;
    uu += a * a;
    vv += b * b;
  }
  if (uu == 0.0 || vv == 0.0) throw DomainError("cosine: zero vector");
  return std::clamp(dot / (std::sqrt(uu) * std::sqrt(vv)), -1.0, 1.0);
}

// Sum of unit-normalised embeddings of a token set plus the sum of their
// squared norms (each ~1 up to rounding). Extended precision keeps the
// pair sums recovered from it free of cancellation error.
struct UnitSum {
  std::vector<long double> sum;
  long double self = 0.0L;
};

std::vector<double> unit_vector(const EmbeddingTable& emb, TokenId id) {
  const auto row = emb.row(id);
  const double inv = 1.0 / emb.norm(id);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] * inv;
  return out;
}

long double self_dot(const std::vector<double>& u) {
  long double s = 0.0L;
  for (double v : u) s += static_cast<long double>(v) * v;
  return s;
}

UnitSum unit_sum(const TokenSet& ids, const EmbeddingTable& emb) {
  UnitSum out;
  out.sum.assign(emb.dimension(), 0.0L);
  for (TokenId id : ids) {
    const auto u = unit_vector(emb, id);
    for (std::size_t i = 0; i < u.size(); ++i) out.sum[i] += u[i];
    out.self += self_dot(u);
  }
  return out;
}

long double dot(const std::vector<long double>& a, const std::vector<long double>& b) {
  long double s = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Sum of cosines over (a in x, b in y, a != b) and the number of such pairs.
std::pair<long double, std::size_t> cross_sum(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb) {
  const auto sx = unit_sum(x, emb);
  const auto sy = unit_sum(y, emb);
  const TokenSet shared = set_intersection(x, y);
  long double shared_self = 0.0L;
  for (TokenId id : shared) shared_self += self_dot(unit_vector(emb, id));
  return {dot(sx.sum, sy.sum) - shared_self, x.size() * y.size() - shared.size()};
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

double cosine(std::span<const double> u, std::span<const double> v) { return cosine_impl(u, v); }
double cosine(std::span<const float> u, std::span<const float> v) { return cosine_impl(u, v); }

double token_cosine(const EmbeddingTable& emb, TokenId a, TokenId b) { return cosine(emb.row(a), emb.row(b)); }

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw DomainError("quantile: empty list");
  if (!(q >= 0.0 && q <= 1.0)) throw DomainError("quantile: q outside [0,1]");
  const double h = static_cast<double>(values.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
  const double lower = values[lo];
  if (lo + 1 >= values.size()) return lower;
  const double upper = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
  return lower + (h - static_cast<double>(lo)) * (upper - lower);
}

std::optional<ConfluenceValue> confluence_m(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb,
                                            std::size_t min_cardinality) {
  if (x.size() < min_cardinality || y.size() < min_cardinality) return std::nullopt;
  const auto [sum, count] = cross_sum(x, y, emb);
  if (count == 0) return std::nullopt;
  const auto m = static_cast<double>(sum / static_cast<long double>(count));
  return ConfluenceValue{std::clamp(m, -1.0, 1.0), count};
}

ActivationMap activation_map(const ActivationProfile& profile) {
  ActivationMap out;
  out.reserve(profile.entries.size());
  for (const auto& e : profile.entries) out.emplace(e.id, e.activation);
  return out;
}

ActivationMap activation_map(const CoreTokenSet& core) {
  ActivationMap out;
  out.reserve(core.tokens.size());
  for (const auto& e : core.tokens) out.emplace(e.id, e.activation);
  return out;
}

double dispersion_d(const TokenSet& taken, const TokenSet& core, const ActivationMap& activation_of) {
  if (core.size() < 2) throw DomainError("dispersion_d: core needs at least 2 tokens");
  if (taken.size() < 2) throw DomainError("dispersion_d: taken set needs at least 2 tokens");
  if (!std::includes(core.begin(), core.end(), taken.begin(), taken.end())) {
    throw DomainError("dispersion_d: taken set is not a subset of the core set");
  }
  auto lookup = [&](TokenId id) {
    auto it = activation_of.find(id);
    if (it == activation_of.end()) throw DomainError("dispersion_d: no activation for token " + std::to_string(id));
    return it->second;
  };

  std::vector<double> a;
  a.reserve(taken.size());
  for (TokenId id : taken) a.push_back(lookup(id));
  std::sort(a.begin(), a.end());
  // sum_{i<j} (a_j - a_i) over sorted values
  double spread = 0.0;
  const double n = static_cast<double>(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) spread += a[k] * (2.0 * static_cast<double>(k) - (n - 1.0));
  const double taken_mean = spread / (n * (n - 1.0) / 2.0);

  std::vector<double> core_act;
  core_act.reserve(core.size());
  for (TokenId id : core) core_act.push_back(lookup(id));
  std::vector<double> distances;
  distances.reserve(core_act.size() * (core_act.size() - 1) / 2);
  for (std::size_t i = 0; i < core_act.size(); ++i) {
    for (std::size_t j = i + 1; j < core_act.size(); ++j) distances.push_back(std::abs(core_act[i] - core_act[j]));
  }
  return taken_mean - quantile(std::move(distances), 0.25);
}

std::optional<double> distancing_d(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb,
                                   std::size_t min_cardinality) {
  if (x.size() < std::max<std::size_t>(min_cardinality, 2) || y.size() < min_cardinality) return std::nullopt;
  const auto [cross, cross_count] = cross_sum(x, y, emb);
  if (cross_count == 0) return std::nullopt;
  const auto sx = unit_sum(x, emb);
  const long double within = (dot(sx.sum, sx.sum) - sx.self) / 2.0L;
  const auto within_count = static_cast<long double>(x.size() * (x.size() - 1) / 2);
  const auto d = static_cast<double>(cross / static_cast<long double>(cross_count) - within / within_count);
  return std::clamp(d, -2.0, 2.0);
}

CommonTokenIndex common_token_index(const TokenSet& x, const TokenSet& y) {
  if (x.empty()) throw DomainError("common_token_index: x is empty");
  const std::size_t n = set_intersection(x, y).size();
  return {n, static_cast<double>(n) - static_cast<double>(x.size()) / 10.0};
}

std::vector<double> cross_cosines(const TokenSet& x, const TokenSet& y, const EmbeddingTable& emb) {
  std::vector<double> out;
  out.reserve(x.size() * y.size());
  for (TokenId a : x) {
    for (TokenId b : y) {
      if (a != b) out.push_back(token_cosine(emb, a, b));
    }
  }
  return out;
}

std::vector<double> within_cosines(const TokenSet& x, const EmbeddingTable& emb) {
  std::vector<double> out;
  out.reserve(x.size() * (x.size() > 0 ? x.size() - 1 : 0) / 2);
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) out.push_back(token_cosine(emb, x[i], x[j]));
  }
  return out;
}

// ---------------------------------------------------------------------------

const char* to_string(ActivationSide side) {
  return side == ActivationSide::precursor ? "precursor" : "target";
}

void write_confluence_csv(std::ostream& out, std::span<const ConfluenceRecord> records) {
  out << "target_layer,target_index,x_layer,x_index,y_layer,y_index,size_x,size_y,m,pair_count\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{}\n", r.target.layer, r.target.index, r.precursor_x.layer,
                       r.precursor_x.index, r.precursor_y.layer, r.precursor_y.index, r.size_x, r.size_y,
                       fmt_double(r.m), r.pair_count);
  }
}

void write_dispersion_csv(std::ostream& out, std::span<const DispersionRecord> records) {
  out << "target_layer,target_index,precursor_layer,precursor_index,side,taken_size,core_size,d\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{}\n", r.target.layer, r.target.index, r.precursor.layer,
                       r.precursor.index, to_string(r.side), r.taken_size, r.core_size, fmt_double(r.d));
  }
}

void write_distancing_csv(std::ostream& out, std::span<const DistancingRecord> records) {
  out << "source_layer,source_index,source_cluster,target_layer,target_index,target_cluster,size_x,size_y,d,"
         "kw_statistic,kw_p,n_common,d_prime,binomial_p\n";
  for (const auto& r : records) {
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.source.neuron.layer, r.source.neuron.index,
                       r.source.cluster, r.target.neuron.layer, r.target.neuron.index, r.target.cluster, r.size_x,
                       r.size_y, fmt_double(r.d), fmt_double(r.kw_statistic), fmt_double(r.kw_p), r.n_common,
                       fmt_double(r.d_prime), fmt_double(r.binomial_p));
  }
}

}  // namespace catres
