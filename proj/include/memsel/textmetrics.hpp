#pragma once

// Caption similarity measures used to turn free-form predictions into 0/1
// loss labels: a [0,1]-normalized CIDEr-n and an exact-match METEOR.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "memsel/error.hpp"

namespace memsel {

using TokenSequence = std::vector<std::string>;

/// Lowercases ASCII, deletes ASCII punctuation, splits on whitespace.
inline TokenSequence tokenize(std::string_view text) {
  TokenSequence tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (c < 0x80 && std::ispunct(c)) {
      continue;
    } else {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::string join_ngram(const TokenSequence& tokens, std::size_t begin, std::size_t len) {
  std::string key;
  for (std::size_t i = 0; i < len; ++i) {
    if (i) key.push_back(' ');
    key += tokens[begin + i];
  }
  return key;
}

/// Counts of every order-`order` n-gram in `tokens`.
inline std::map<std::string, double> ngram_counts(const TokenSequence& tokens, std::size_t order) {
  std::map<std::string, double> counts;
  if (order == 0 || tokens.size() < order) return counts;
  for (std::size_t i = 0; i + order <= tokens.size(); ++i) counts[join_ngram(tokens, i, order)] += 1.0;
  return counts;
}

// Document frequencies over all orders 1..n; one document per item, where an
// item's document is the union of its references.
struct IdfTable {
  std::size_t n = 4;
  std::size_t doc_count = 0;
  std::map<std::string, double> idf;

  // N-grams never seen in the corpus are treated as df = 1.
  double lookup(const std::string& ngram) const {
    auto it = idf.find(ngram);
    return it != idf.end() ? it->second : std::log(static_cast<double>(doc_count));
  }
};

inline IdfTable build_idf(const std::vector<std::vector<std::string>>& references, std::size_t n) {
  if (references.empty()) throw Error(ErrorCode::EmptyCorpus, "idf needs at least one reference group");
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "n-gram order must be >= 1");
  std::map<std::string, std::size_t> df;
  for (const auto& group : references) {
    std::set<std::string> present;
    for (const auto& ref : group) {
      const auto tokens = tokenize(ref);
      for (std::size_t k = 1; k <= n; ++k)
        for (const auto& [gram, _] : ngram_counts(tokens, k)) present.insert(gram);
    }
    for (const auto& g : present) ++df[g];
  }
  IdfTable table;
  table.n = n;
  table.doc_count = references.size();
  for (const auto& [gram, count] : df)
    table.idf[gram] = std::log(static_cast<double>(table.doc_count) / static_cast<double>(count));
  return table;
}

namespace detail {

inline double weighted_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  double na = 0.0, nb = 0.0, ab = 0.0;
  for (const auto& [g, v] : a) na += v * v;
  for (const auto& [g, v] : b) nb += v * v;
  for (const auto& [g, v] : a) {
    auto it = b.find(g);
    if (it != b.end()) ab += v * it->second;
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return ab / std::sqrt(na * nb);
}

inline std::map<std::string, double> tfidf(const TokenSequence& tokens, std::size_t order, const IdfTable& idf) {
  auto counts = ngram_counts(tokens, order);
  for (auto& [g, v] : counts) v *= idf.lookup(g);
  return counts;
}

inline void require_inputs(const TokenSequence& candidate, const std::vector<std::string>& references) {
  if (candidate.empty()) throw Error(ErrorCode::EmptyCandidate, "candidate caption has no tokens");
  if (references.empty()) throw Error(ErrorCode::EmptyReferences, "no reference captions");
}

}  // namespace detail

/// Mean over orders 1..n of the mean (over references) cosine between
/// idf-weighted n-gram count vectors. No x10 scaling, no length penalty.
inline double cider_n(std::string_view candidate, const std::vector<std::string>& references, const IdfTable& idf,
                      std::size_t n = 4) {
  const auto cand = tokenize(candidate);
  detail::require_inputs(cand, references);
  if (n == 0) throw Error(ErrorCode::InvalidConfig, "n-gram order must be >= 1");
  std::vector<TokenSequence> refs;
  refs.reserve(references.size());
  for (const auto& r : references) refs.push_back(tokenize(r));

  double total = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto cv = detail::tfidf(cand, k, idf);
    double per_order = 0.0;
    for (const auto& r : refs) per_order += detail::weighted_cosine(cv, detail::tfidf(r, k, idf));
    total += per_order / static_cast<double>(refs.size());
  }
  return std::clamp(total / static_cast<double>(n), 0.0, 1.0);
}

namespace detail {

// Each candidate token, left to right, aligns to the earliest unused
// identical reference token. Returns {matches, chunks}.
inline std::pair<std::size_t, std::size_t> align_unigrams(const TokenSequence& cand, const TokenSequence& ref) {
  std::vector<bool> used(ref.size(), false);
  std::size_t matches = 0, chunks = 0;
  std::optional<std::size_t> prev;
  for (const auto& tok : cand) {
    std::optional<std::size_t> hit;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (!used[j] && ref[j] == tok) {
        hit = j;
        break;
      }
    }
    if (!hit) {
      prev.reset();
      continue;
    }
    used[*hit] = true;
    ++matches;
    if (!prev || *hit != *prev + 1) ++chunks;
    prev = hit;
  }
  return {matches, chunks};
}

inline double meteor_single(const TokenSequence& cand, const TokenSequence& ref) {
  if (ref.empty()) return 0.0;
  const auto [m, chunks] = align_unigrams(cand, ref);
  if (m == 0) return 0.0;
  const double p = static_cast<double>(m) / static_cast<double>(cand.size());
  const double r = static_cast<double>(m) / static_cast<double>(ref.size());
  const double fmean = 10.0 * p * r / (r + 9.0 * p);
  const double frag = static_cast<double>(chunks) / static_cast<double>(m);
  return fmean * (1.0 - 0.5 * frag * frag * frag);
}

}  // namespace detail

/// Exact-match METEOR (no stemming or synonyms), maximized over references.
inline double meteor_lite(std::string_view candidate, const std::vector<std::string>& references) {
  const auto cand = tokenize(candidate);
  detail::require_inputs(cand, references);
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, detail::meteor_single(cand, tokenize(r)));
  return std::clamp(best, 0.0, 1.0);
}

enum class CaptionMetric { CiderN, MeteorLite };

inline std::string_view to_string(CaptionMetric m) { return m == CaptionMetric::CiderN ? "cider" : "meteor"; }

inline double default_beta(CaptionMetric m) { return m == CaptionMetric::CiderN ? 0.6 : 0.24; }

struct CaptionMetricConfig {
  CaptionMetric metric = CaptionMetric::CiderN;
  std::size_t n = 4;
  std::optional<double> beta;  // defaults per metric

  double threshold() const { return beta.value_or(default_beta(metric)); }
};

/// Best single-reference similarity r(candidate, ref) over all references.
inline double caption_similarity(std::string_view candidate, const std::vector<std::string>& references,
                                 const CaptionMetricConfig& cfg, const IdfTable* idf) {
  if (cfg.metric == CaptionMetric::MeteorLite) return meteor_lite(candidate, references);
  if (idf == nullptr) throw Error(ErrorCode::MissingIdf, "CIDEr-n needs an idf table");
  if (references.empty()) throw Error(ErrorCode::EmptyReferences, "no reference captions");
  double best = 0.0;
  for (const auto& r : references) best = std::max(best, cider_n(candidate, {r}, *idf, cfg.n));
  return best;
}

/// 1 when the caption is insufficiently similar (r < beta), else 0.
inline int caption_loss(std::string_view candidate, const std::vector<std::string>& references,
                        const CaptionMetricConfig& cfg, const IdfTable* idf) {
  const double beta = cfg.threshold();
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidConfig, "beta must lie in [0, 1]");
  return caption_similarity(candidate, references, cfg, idf) < beta ? 1 : 0;
}

}  // namespace memsel
