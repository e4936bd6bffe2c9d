#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qclass/corpus.hpp"
#include "qclass/embedding.hpp"
#include "qclass/error.hpp"
#include "qclass/random.hpp"

namespace qclass {

/// A row-major flattened EncodedSample. `origin` is the index of the real
/// sample it came from; synthetic samples have none.
struct FlatSample {
  std::vector<double> vector;
  CoarseId label;
  bool synthetic = false;
  std::optional<std::size_t> origin;
};

inline FlatSample flatten(const EncodedSample& encoded, CoarseId label, std::optional<std::size_t> origin = {}) {
  return FlatSample{encoded.values, label, false, origin};
}

inline EncodedSample reshape(const FlatSample& flat, std::size_t max_len, std::size_t dim) {
  if (flat.vector.size() != max_len * dim) throw std::invalid_argument("reshape: size mismatch");
  EncodedSample e{max_len, dim, 0, flat.vector};
  for (std::size_t t = 0; t < max_len; ++t) {
    const auto r = e.row(t);
    if (std::any_of(r.begin(), r.end(), [](double x) { return x != 0.0; })) e.length = t + 1;
  }
  return e;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s0 = 0, s1 = 0;
  std::size_t i = 0;
  for (; i + 2 <= a.size(); i += 2) {
    const double d0 = a[i] - b[i];
    const double d1 = a[i + 1] - b[i + 1];
    s0 += d0 * d0;
    s1 += d1 * d1;
  }
  for (; i < a.size(); ++i) s0 += (a[i] - b[i]) * (a[i] - b[i]);
  return s0 + s1;
}

/// k nearest neighbors of every point (Euclidean), excluding the point
/// itself, nearest first, ties to the lower index.
inline std::vector<std::vector<std::size_t>> knn_indices(std::span<const std::vector<double>> points,
                                                         std::size_t k) {
  const std::size_t n = points.size();
  if (n < 2) throw DataError("knn_indices: need at least 2 points");
  if (k >= n) throw DataError("knn_indices: k=" + std::to_string(k) + " must be below point count " + std::to_string(n));
  for (const auto& p : points) {
    if (p.size() != points[0].size()) throw DataError("knn_indices: points differ in dimension");
  }
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      dist[i * n + j] = dist[j * n + i] = squared_distance(points[i], points[j]);
    }
  }
  std::vector<std::vector<std::size_t>> out(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) candidates.push_back(j);
    }
    const double* row = dist.data() + i * n;
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k), candidates.end(),
                      [row](std::size_t a, std::size_t b) {
                        return row[a] != row[b] ? row[a] < row[b] : a < b;
                      });
    out[i].assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(k));
  }
  return out;
}

/// Where a synthetic sample came from: s = x + lambda * (n - x).
struct SmoteProvenance {
  CoarseId label;
  std::size_t x_index;  // indices into the input sample list
  std::size_t n_index;
  double lambda;
  std::size_t synthetic_index;  // index into the output sample list
};

struct SmoteResult {
  std::vector<FlatSample> samples;  // originals first (unchanged), then synthetic
  std::vector<SmoteProvenance> provenance;  // empty unless requested
};

/// Target count for every class = size of the largest class.
inline std::map<CoarseId, std::size_t> majority_targets(std::span<const FlatSample> samples) {
  std::map<CoarseId, std::size_t> counts;
  for (const auto& s : samples) ++counts[s.label];
  std::size_t top = 0;
  for (const auto& [label, c] : counts) top = std::max(top, c);
  for (auto& [label, c] : counts) c = top;
  return counts;
}

/// SMOTE oversampling.
///
/// For a class that needs m more samples, synthetic sample j interpolates
/// real sample x = members[j mod n] toward one of its k nearest same-class
/// neighbors picked uniformly at random, with lambda uniform in [0, 1).
/// Classes are processed in label order, each on its own substream of `rng`.
/// When the class has fewer than k + 1 members, all other members are
/// neighbors.
inline SmoteResult smote_oversample(std::span<const FlatSample> samples,
                                    const std::map<CoarseId, std::size_t>& target_counts, std::size_t k,
                                    const Rng& rng, bool record_provenance = false) {
  if (k < 1) throw UsageError("smote: k must be at least 1");
  std::map<CoarseId, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].vector.size() != samples[0].vector.size()) throw DataError("smote: samples differ in dimension");
    members[samples[i].label].push_back(i);
  }

  SmoteResult result;
  result.samples.assign(samples.begin(), samples.end());
  for (const auto& [label, target] : target_counts) {
    const auto it = members.find(label);
    const std::size_t have = it == members.end() ? 0 : it->second.size();
    if (target < have) {
      throw DataError("smote: target " + std::to_string(target) + " below current count " + std::to_string(have) +
                      " for class " + std::to_string(label.value));
    }
    if (target == have) continue;
    if (have < 2) {
      throw DataError("smote: class " + std::to_string(label.value) + " needs at least 2 samples to oversample, has " +
                      std::to_string(have));
    }
    const auto& idx = it->second;
    std::vector<std::vector<double>> points;
    points.reserve(have);
    for (auto i : idx) points.push_back(samples[i].vector);
    const auto neighbors = knn_indices(points, std::min(k, have - 1));

    Rng class_rng = rng.substream(label.value);
    for (std::size_t j = 0; j < target - have; ++j) {
      const std::size_t local_x = j % have;
      const auto& nn = neighbors[local_x];
      const std::size_t local_n = nn[class_rng.below(nn.size())];
      const double lambda = class_rng.uniform();
      const auto& x = points[local_x];
      const auto& n = points[local_n];
      FlatSample s{std::vector<double>(x.size()), label, true, std::nullopt};
      for (std::size_t d = 0; d < x.size(); ++d) s.vector[d] = x[d] + lambda * (n[d] - x[d]);
      if (record_provenance) {
        result.provenance.push_back({label, idx[local_x], idx[local_n], lambda, result.samples.size()});
      }
      result.samples.push_back(std::move(s));
    }
  }
  return result;
}

/// Debug dump, one `class<TAB>x_index<TAB>n_index<TAB>lambda` line per synthetic sample.
inline void write_provenance(std::ostream& out, std::span<const SmoteProvenance> provenance) {
  char buf[32];
  for (const auto& p : provenance) {
    std::snprintf(buf, sizeof buf, "%.17g", p.lambda);
    out << p.label.value << '\t' << p.x_index << '\t' << p.n_index << '\t' << buf << '\n';
  }
}

}  // namespace qclass
