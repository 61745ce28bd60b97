#pragma once

// Brute-force re-implementations of the restructuring metrics. Every value is
// produced by enumerating the pairs explicitly and never calls into the
// library's metric code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Ids = std::vector<int>;
using Rows = std::map<int, Vec>;

inline double cosine(const Vec& u, const Vec& v) {
  double dot = 0.0, uu = 0.0, vv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  return dot / std::sqrt(uu * vv);
}

struct Mean {
  double value = 0.0;
  std::size_t count = 0;
};

// (a, b) for a in x, b in y, a != b
inline std::optional<Mean> cross_mean(const Ids& x, const Ids& y, const Rows& rows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (int a : x) {
    for (int b : y) {
      if (a == b) continue;
      sum += cosine(rows.at(a), rows.at(b));
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return Mean{sum / static_cast<double>(count), count};
}

// unordered distinct pairs within x
inline std::optional<double> within_mean(const Ids& x, const Rows& rows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      sum += cosine(rows.at(x[i]), rows.at(x[j]));
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

inline std::optional<Mean> confluence(const Ids& x, const Ids& y, const Rows& rows) { return cross_mean(x, y, rows); }

inline std::optional<double> distancing(const Ids& x, const Ids& y, const Rows& rows) {
  const auto cross = cross_mean(x, y, rows);
  const auto within = within_mean(x, rows);
  if (!cross || !within) return std::nullopt;
  return cross->value - *within;
}

// Hyndman-Fan type 7 written out from the definition: position (n-1)q in the
// sorted list, linear interpolation to the next order statistic.
inline double quantile7(Vec values, double q) {
  if (values.empty()) throw std::invalid_argument("empty");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const std::size_t j = static_cast<std::size_t>(pos);
  const double g = pos - static_cast<double>(j);
  if (j + 1 >= values.size()) return values.back();
  return (1.0 - g) * values[j] + g * values[j + 1];
}

inline double dispersion(const Ids& taken, const Ids& core, const std::map<int, double>& act) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < taken.size(); ++i) {
    for (std::size_t j = i + 1; j < taken.size(); ++j) {
      sum += std::fabs(act.at(taken[i]) - act.at(taken[j]));
      ++count;
    }
  }
  Vec core_distances;
  for (std::size_t i = 0; i < core.size(); ++i) {
    for (std::size_t j = i + 1; j < core.size(); ++j) core_distances.push_back(std::fabs(act.at(core[i]) - act.at(core[j])));
  }
  return sum / static_cast<double>(count) - quantile7(core_distances, 0.25);
}

struct Common {
  std::size_t n = 0;
  double d_prime = 0.0;
};

inline Common common(const Ids& x, const Ids& y) {
  std::size_t n = 0;
  for (int a : x) {
    if (std::find(y.begin(), y.end(), a) != y.end()) ++n;
  }
  return {n, static_cast<double>(n) - static_cast<double>(x.size()) / 10.0};
}

// |a - b| <= rel * max(|a|, |b|), with an absolute floor for values that are
// themselves at rounding level.
inline bool close(double a, double b, double rel = 1e-12, double abs_floor = 1e-14) {
  return std::fabs(a - b) <= std::max(rel * std::max(std::fabs(a), std::fabs(b)), abs_floor);
}

}  // namespace oracle
