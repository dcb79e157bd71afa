#pragma once

// Test-only reference implementations. These deliberately avoid the library's
// code paths: full sorts instead of partial sorts, exact rational arithmetic
// instead of running sums, explicit enumeration instead of prefix sums.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace memsel::oracle {

struct Neighbor {
  std::size_t index;
  double similarity;
};

// Cosine against every row, then a full std::sort on (similarity desc, index asc).
inline std::vector<Neighbor> knn_full_sort(const std::vector<float>& query, const std::vector<float>& rows,
                                           std::size_t dim, std::size_t k) {
  const std::size_t n = rows.size() / dim;
  double qq = 0.0;
  for (float v : query) qq += static_cast<double>(v) * static_cast<double>(v);
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0, rr = 0.0;
    for (std::size_t c = 0; c < dim; ++c) dot += static_cast<double>(query[c]) * static_cast<double>(rows[i * dim + c]);
    for (std::size_t c = 0; c < dim; ++c) rr += static_cast<double>(rows[i * dim + c]) * static_cast<double>(rows[i * dim + c]);
    all.push_back({i, dot / (std::sqrt(qq) * std::sqrt(rr))});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    if (a.similarity != b.similarity) return a.similarity > b.similarity;
    return a.index < b.index;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

// Exact risk at each coverage level as a (numerator, denominator) pair. The
// top-k set is defined item by item: an item is in the top k when fewer than k
// items outrank it (higher score, or equal score and earlier position).
struct ExactPoint {
  long long loss_sum;
  long long k;
  long long n;
};

inline std::vector<ExactPoint> risk_by_enumeration(const std::vector<double>& scores, const std::vector<int>& losses) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> rank(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (scores[j] > scores[i] || (scores[j] == scores[i] && j < i)) ++rank[i];
  std::vector<ExactPoint> out;
  for (std::size_t k = 1; k <= n; ++k) {
    long long sum = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (rank[i] < k) sum += losses[i];
    out.push_back({sum, static_cast<long long>(k), static_cast<long long>(n)});
  }
  return out;
}

inline double softmax_mass(const std::vector<double>& logits, std::size_t index) {
  long double total = 0.0L;
  for (double l : logits) total += std::exp(static_cast<long double>(l));
  return static_cast<double>(std::exp(static_cast<long double>(logits[index])) / total);
}

// Exact-match unigram alignment (earliest unused reference position), written
// as explicit alignment pairs.
inline double meteor_reference(const std::vector<std::string>& cand, const std::vector<std::string>& ref) {
  std::vector<bool> used(ref.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i < cand.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (!used[j] && ref[j] == cand[i]) {
        used[j] = true;
        pairs.emplace_back(i, j);
        break;
      }
  const double m = static_cast<double>(pairs.size());
  if (pairs.empty()) return 0.0;
  double chunks = 1.0;
  for (std::size_t p = 1; p < pairs.size(); ++p)
    if (!(pairs[p].first == pairs[p - 1].first + 1 && pairs[p].second == pairs[p - 1].second + 1)) chunks += 1.0;
  const double P = m / static_cast<double>(cand.size());
  const double R = m / static_cast<double>(ref.size());
  const double f = 10.0 * P * R / (R + 9.0 * P);
  return f * (1.0 - 0.5 * std::pow(chunks / m, 3.0));
}

// idf-weighted n-gram cosine, n-grams held as token vectors.
inline double cider_reference(const std::vector<std::string>& cand, const std::vector<std::vector<std::string>>& refs,
                              const std::map<std::vector<std::string>, double>& idf, double unseen_idf, std::size_t n) {
  auto grams = [](const std::vector<std::string>& t, std::size_t k) {
    std::map<std::vector<std::string>, double> g;
    for (std::size_t i = 0; i + k <= t.size(); ++i) g[std::vector<std::string>(t.begin() + i, t.begin() + i + k)] += 1.0;
    return g;
  };
  auto weight = [&](const std::vector<std::string>& g) {
    auto it = idf.find(g);
    return it == idf.end() ? unseen_idf : it->second;
  };
  double total = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    auto cg = grams(cand, k);
    double acc = 0.0;
    for (const auto& r : refs) {
      auto rg = grams(r, k);
      double na = 0, nb = 0, ab = 0;
      for (auto& [g, c] : cg) na += (c * weight(g)) * (c * weight(g));
      for (auto& [g, c] : rg) nb += (c * weight(g)) * (c * weight(g));
      for (auto& [g, c] : cg)
        if (rg.count(g)) ab += (c * weight(g)) * (rg[g] * weight(g));
      acc += (na == 0 || nb == 0) ? 0.0 : ab / (std::sqrt(na) * std::sqrt(nb));
    }
    total += acc / static_cast<double>(refs.size());
  }
  return std::clamp(total / static_cast<double>(n), 0.0, 1.0);
}

}  // namespace memsel::oracle
