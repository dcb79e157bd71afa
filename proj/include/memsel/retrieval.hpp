#pragma once

// Exact k-nearest-neighbour retrieval over a RetrievalSet and the
// similarity-weighted proxy embeddings built from the neighbourhood.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memsel/error.hpp"
#include "memsel/parallel.hpp"
#include "memsel/store.hpp"
#include "memsel/vec.hpp"

namespace memsel {

// Naming: <query modality>2<proxy modality>r. i2tr = image query, text proxy.
enum class RetrievalVariant { I2TR, I2IR, T2TR, T2IR };

inline Modality query_modality(RetrievalVariant v) {
  return (v == RetrievalVariant::I2TR || v == RetrievalVariant::I2IR) ? Modality::Image : Modality::Text;
}

inline Modality proxy_modality(RetrievalVariant v) {
  return (v == RetrievalVariant::I2TR || v == RetrievalVariant::T2TR) ? Modality::Text : Modality::Image;
}

// The store column scanned for similarity. Queries are compared against the
// column of their own modality; the proxy modality only selects what gets
// averaged.
inline Modality search_modality(RetrievalVariant v) { return query_modality(v); }

inline std::string_view to_string(RetrievalVariant v) {
  switch (v) {
    case RetrievalVariant::I2TR: return "i2tr";
    case RetrievalVariant::I2IR: return "i2ir";
    case RetrievalVariant::T2TR: return "t2tr";
    case RetrievalVariant::T2IR: return "t2ir";
  }
  return "?";
}

inline std::optional<RetrievalVariant> parse_variant(std::string_view s) {
  if (s == "i2tr") return RetrievalVariant::I2TR;
  if (s == "i2ir") return RetrievalVariant::I2IR;
  if (s == "t2tr") return RetrievalVariant::T2TR;
  if (s == "t2ir") return RetrievalVariant::T2IR;
  return std::nullopt;
}

struct RetrievalConfig {
  std::size_t k = 15;
  RetrievalVariant variant = RetrievalVariant::I2TR;
  double weight_floor = 0.0;
};

struct NeighborhoodSet {
  std::vector<std::size_t> indices;  // similarity-descending, ties by lower index
  std::vector<double> similarities;
  std::vector<double> weights;
};

struct ProxyEmbedding {
  Embedding vector;         // unit length
  std::vector<double> mean;  // weighted neighbour average before renormalization
  RetrievalVariant source_variant = RetrievalVariant::I2TR;
  NeighborhoodSet neighborhood;
};

namespace detail {

// Counts queries whose k exceeded the store size and was clamped.
inline std::atomic<std::size_t>& k_clamp_counter() {
  static std::atomic<std::size_t> counter{0};
  return counter;
}

}  // namespace detail

inline std::size_t k_clamp_count() { return detail::k_clamp_counter().load(); }

/// Weights w_i = max(s_i, floor) / sum_j max(s_j, floor); uniform when the
/// clamped similarities are all zero.
inline std::vector<double> neighbor_weights(std::span<const double> similarities, double floor = 0.0) {
  std::vector<double> w(similarities.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::max(similarities[i], floor);
    total += w[i];
  }
  if (total <= 0.0) {
    std::fill(w.begin(), w.end(), w.empty() ? 0.0 : 1.0 / static_cast<double>(w.size()));
  } else {
    for (auto& x : w) x /= total;
  }
  return w;
}

/// Exact top-k by cosine against the variant's search column. k larger than
/// the store is clamped to the store size and counted in k_clamp_count().
template <NumericRange Q>
NeighborhoodSet knn(const Q& query, const RetrievalSet& set, RetrievalVariant variant, std::size_t k,
                    double weight_floor = 0.0) {
  if (set.empty()) throw Error(ErrorCode::EmptySet, "knn over an empty retrieval set");
  if (std::ranges::size(query) != set.dim())
    throw Error(ErrorCode::DimMismatch, "query dim " + std::to_string(std::ranges::size(query)) +
                                            ", store dim " + std::to_string(set.dim()));
  if (k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
  if (k > set.size()) {
    detail::k_clamp_counter().fetch_add(1, std::memory_order_relaxed);
    k = set.size();
  }
  const double qn = l2_norm(query);
  if (qn == 0.0) throw Error(ErrorCode::ZeroVector, "knn query is a zero vector");

  const Modality column = search_modality(variant);
  std::vector<double> sims(set.size());
  for (std::size_t i = 0; i < set.size(); ++i)
    sims[i] = dot(query, set.embedding(column, i)) / (qn * set.norm(column, i));

  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto better = [&](std::size_t a, std::size_t b) { return sims[a] > sims[b] || (sims[a] == sims[b] && a < b); };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), better);
  order.resize(k);

  NeighborhoodSet out;
  out.indices = std::move(order);
  out.similarities.reserve(k);
  for (auto i : out.indices) out.similarities.push_back(sims[i]);
  out.weights = neighbor_weights(out.similarities, weight_floor);
  return out;
}

/// Similarity-weighted average of the neighbours' proxy-modality embeddings,
/// renormalized to unit length.
template <NumericRange Q>
ProxyEmbedding proxy_embedding(const Q& query, const RetrievalSet& set, const RetrievalConfig& cfg) {
  ProxyEmbedding proxy;
  proxy.source_variant = cfg.variant;
  proxy.neighborhood = knn(query, set, cfg.variant, cfg.k, cfg.weight_floor);

  const Modality column = proxy_modality(cfg.variant);
  const auto& nb = proxy.neighborhood;
  const std::size_t d = set.dim();
  proxy.mean.assign(d, 0.0);
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (std::size_t j = 0; j < nb.indices.size(); ++j) {
    auto e = set.embedding(column, nb.indices[j]);
    for (std::size_t c = 0; c < d; ++c) {
      const double v = e[c];
      proxy.mean[c] += nb.weights[j] * v;
      lo[c] = std::min(lo[c], v);
      hi[c] = std::max(hi[c], v);
    }
  }
  // Weights sum to 1 only up to rounding; keep the average inside the hull.
  for (std::size_t c = 0; c < d; ++c) proxy.mean[c] = std::clamp(proxy.mean[c], lo[c], hi[c]);
  proxy.vector = normalized(proxy.mean);
  return proxy;
}

/// Result i corresponds to query i. Failures are reported per index.
template <NumericRange Q>
std::vector<Result<ProxyEmbedding>> batch_proxy(std::span<const Q> queries, const RetrievalSet& set,
                                                const RetrievalConfig& cfg,
                                                std::size_t workers = default_worker_count()) {
  std::vector<std::optional<Result<ProxyEmbedding>>> slots(queries.size());
  parallel_for(queries.size(), workers, [&](std::size_t i) {
    try {
      slots[i].emplace(proxy_embedding(queries[i], set, cfg));
    } catch (const Error& e) {
      slots[i].emplace(e);
    }
  });
  std::vector<Result<ProxyEmbedding>> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

}  // namespace memsel
