#pragma once

// Selective prediction: accept/reject decisions, risk-coverage curves with
// AURC/AUGRC summaries, loss labelling, the end-to-end scoring pipeline, and
// per-group score dispersion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "memsel/error.hpp"
#include "memsel/parallel.hpp"
#include "memsel/retrieval.hpp"
#include "memsel/scoring.hpp"
#include "memsel/store.hpp"
#include "memsel/textmetrics.hpp"

namespace memsel {

struct LabeledScore {
  std::string item_id;
  double score = 0.0;
  int loss = 0;  // 0 or 1
};

struct RiskCoveragePoint {
  double coverage = 0.0;
  double risk = 0.0;
  double generalized_risk = 0.0;  // risk * coverage
  double threshold = 0.0;         // score of the last accepted item
};

struct RiskCoverageCurve {
  std::vector<RiskCoveragePoint> points;  // coverage ascending, one per k/n
  double aurc = 0.0;
  double augrc = 0.0;
  std::size_t n_items = 0;
};

struct SelectionDecision {
  std::string item_id;
  bool accepted = false;
  double threshold = 0.0;
};

/// accepted <=> score >= threshold.
inline std::vector<SelectionDecision> select(const std::vector<LabeledScore>& scores, double threshold) {
  if (scores.empty()) throw Error(ErrorCode::EmptyInput, "select over no scores");
  std::vector<SelectionDecision> out;
  out.reserve(scores.size());
  for (const auto& s : scores) out.push_back({s.item_id, s.score >= threshold, threshold});
  return out;
}

/// Items ranked by score (descending, ties by input order); point k covers the
/// top k. AURC and AUGRC are the means of risk and generalized risk over the
/// n coverage levels.
inline RiskCoverageCurve risk_coverage_curve(const std::vector<LabeledScore>& scores) {
  const std::size_t n = scores.size();
  if (n == 0) throw Error(ErrorCode::EmptyInput, "risk-coverage curve over no scores");
  for (const auto& s : scores) {
    if (!std::isfinite(s.score)) throw Error(ErrorCode::NonFiniteScore, "item " + s.item_id);
    if (s.loss != 0 && s.loss != 1) throw Error(ErrorCode::InvalidItem, "item " + s.item_id + " loss must be 0 or 1");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a].score > scores[b].score; });

  RiskCoverageCurve curve;
  curve.n_items = n;
  curve.points.reserve(n);
  const double dn = static_cast<double>(n);
  std::size_t cumulative = 0;
  double risk_sum = 0.0, grisk_sum = 0.0;
  for (std::size_t k = 1; k <= n; ++k) {
    const auto& s = scores[order[k - 1]];
    cumulative += static_cast<std::size_t>(s.loss);
    const double risk = static_cast<double>(cumulative) / static_cast<double>(k);
    const double grisk = static_cast<double>(cumulative) / dn;
    curve.points.push_back({static_cast<double>(k) / dn, risk, grisk, s.score});
    risk_sum += risk;
    grisk_sum += grisk;
  }
  curve.aurc = risk_sum / dn;
  curve.augrc = grisk_sum / dn;
  return curve;
}

/// 0-1 loss: from the correctness flag, or from caption similarity against the
/// references (1 when below beta).
inline int item_loss(const EvaluationItem& item, const CaptionMetricConfig& cfg, const IdfTable* idf) {
  if (item.correct) return *item.correct ? 0 : 1;
  if (item.references.empty()) throw Error(ErrorCode::AmbiguousLoss, "item " + item.id + " has no loss source");
  if (cfg.metric == CaptionMetric::CiderN && idf == nullptr)
    throw Error(ErrorCode::MissingIdf, "captioning item " + item.id + " needs an idf table for CIDEr-n");
  return caption_loss(item.prediction_text, item.references, cfg, idf);
}

inline std::vector<int> label_items(const std::vector<EvaluationItem>& items, const CaptionMetricConfig& cfg,
                                    const IdfTable* idf) {
  std::vector<int> losses;
  losses.reserve(items.size());
  for (const auto& item : items) losses.push_back(item_loss(item, cfg, idf));
  return losses;
}

/// Corpus statistics from every captioning item's reference group, or nullopt
/// when no item has references.
inline std::optional<IdfTable> idf_from_items(const std::vector<EvaluationItem>& items, std::size_t n) {
  std::vector<std::vector<std::string>> groups;
  for (const auto& item : items)
    if (!item.references.empty()) groups.push_back(item.references);
  if (groups.empty()) return std::nullopt;
  return build_idf(groups, n);
}

// ---------------------------------------------------------------------------
// Pipeline

struct NegativesSource {
  enum class Kind { ItemCandidates, File, Lexicon };
  Kind kind = Kind::ItemCandidates;
  const NegativesMap* file = nullptr;
  const std::map<std::string, std::vector<Embedding>>* file_embeddings = nullptr;  // by item id
  const NegativeLexicon* lexicon = nullptr;
  TextEncoder encoder;  // embeds negatives that carry no vectors
  std::size_t n = 10;
  std::uint64_t seed = 0;
};

struct PipelineConfig {
  RetrievalConfig retrieval;
  ScoreConfig score;
  CaptionMetricConfig metric;
  std::size_t workers = 1;
};

struct ItemOutcome {
  ScoreRecord record;
  std::optional<int> loss;
  std::optional<std::string> error;  // set when the item was excluded

  bool excluded() const noexcept { return error.has_value(); }
};

struct PipelineResult {
  std::vector<ItemOutcome> outcomes;  // input order
  RiskCoverageCurve curve;
  std::size_t excluded = 0;

  std::vector<LabeledScore> labeled() const {
    std::vector<LabeledScore> out;
    for (const auto& o : outcomes)
      if (!o.excluded()) out.push_back({o.record.item_id, o.record.score, *o.loss});
    return out;
  }
};

namespace detail {

inline CandidateSet contrastive_candidates(const EvaluationItem& item, const NegativesSource& src) {
  if (!item.candidates.empty()) return item.candidates;
  std::vector<std::string> texts;
  switch (src.kind) {
    case NegativesSource::Kind::ItemCandidates:
      throw Error(ErrorCode::EmptyCandidates, "item " + item.id + " has no candidates");
    case NegativesSource::Kind::File: {
      if (src.file == nullptr) throw Error(ErrorCode::InvalidConfig, "negatives file source without a file");
      auto it = src.file->find(item.id);
      if (it == src.file->end() || it->second.empty())
        throw Error(ErrorCode::EmptyCandidates, "no negatives for item " + item.id);
      if (src.file_embeddings != nullptr) {
        auto e = src.file_embeddings->find(item.id);
        if (e != src.file_embeddings->end()) {
          CandidateSet out;
          for (std::size_t i = 0; i < it->second.size(); ++i) out.push_back({it->second[i], e->second[i]});
          return out;
        }
      }
      texts = it->second;
      break;
    }
    case NegativesSource::Kind::Lexicon:
      if (src.lexicon == nullptr) throw Error(ErrorCode::InvalidConfig, "lexicon source without a lexicon");
      texts = generate_negatives(item.prediction_text, *src.lexicon, src.n, derive_seed(src.seed, item.id));
      break;
  }
  CandidateSet out;
  for (auto& t : texts) {
    std::optional<Embedding> e = src.encoder ? src.encoder(t) : std::nullopt;
    if (!e) throw Error(ErrorCode::MissingNegativeEmbedding, "no embedding for negative '" + t + "' of item " + item.id);
    out.push_back({std::move(t), std::move(*e)});
  }
  return out;
}

inline ScoreRecord score_item(const EvaluationItem& item, const RetrievalSet& set, const PipelineConfig& cfg,
                              const NegativesSource& negatives) {
  if (cfg.score.kind == ScoreKind::Base) return base_score(item);
  const RetrievalVariant v = cfg.retrieval.variant;
  const Embedding* query = &item.prediction_embedding;
  if (query_modality(v) == Modality::Image) {
    if (!item.image_embedding)
      throw Error(ErrorCode::MissingImageEmbedding, "item " + item.id + " needs an image for " + std::string(to_string(v)));
    query = &*item.image_embedding;
  }
  const ProxyEmbedding proxy = proxy_embedding(*query, set, cfg.retrieval);
  if (cfg.score.kind == ScoreKind::ContrastiveText)
    return contrastive_score(item, proxy, contrastive_candidates(item, negatives), cfg.score);
  return proxy_score(item, proxy, cfg.score.kind);
}

}  // namespace detail

/// Scores every item, labels its loss and builds the curve over the items
/// that succeeded. Store-level problems abort; per-item failures are recorded
/// on the outcome and excluded.
inline PipelineResult run_pipeline(const std::vector<EvaluationItem>& items, const RetrievalSet& set,
                                   const PipelineConfig& cfg, const NegativesSource& negatives,
                                   const IdfTable* idf = nullptr) {
  if (cfg.score.kind != ScoreKind::Base && set.empty())
    throw Error(ErrorCode::EmptySet, "proxy scores need a non-empty retrieval set");
  if (!(cfg.score.temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, std::to_string(cfg.score.temperature));
  if (cfg.retrieval.k == 0) throw Error(ErrorCode::InvalidConfig, "k must be positive");
  for (const auto& item : items) validate_item(item, set.dim());

  std::optional<IdfTable> own_idf;
  if (idf == nullptr && cfg.metric.metric == CaptionMetric::CiderN) {
    own_idf = idf_from_items(items, cfg.metric.n);
    if (own_idf) idf = &*own_idf;
  }

  PipelineResult result;
  result.outcomes.resize(items.size());
  parallel_for(items.size(), cfg.workers, [&](std::size_t i) {
    auto& out = result.outcomes[i];
    out.record.item_id = items[i].id;
    out.record.kind = cfg.score.kind;
    try {
      out.record = detail::score_item(items[i], set, cfg, negatives);
      if (!std::isfinite(out.record.score)) throw Error(ErrorCode::NonFiniteScore, "item " + items[i].id);
      out.loss = item_loss(items[i], cfg.metric, idf);
    } catch (const Error& e) {
      out.error = e.what();
      out.loss.reset();
    }
  });

  for (const auto& o : result.outcomes) result.excluded += o.excluded() ? 1 : 0;
  const auto labeled = result.labeled();
  if (labeled.empty()) throw Error(ErrorCode::EmptyInput, "no valid items after " + std::to_string(result.excluded) + " exclusions");
  result.curve = risk_coverage_curve(labeled);
  return result;
}

// ---------------------------------------------------------------------------

struct GroupDispersion {
  std::string group;
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t count = 0;
};

/// Per-group mean and population std of scores, sorted by group label.
inline std::vector<GroupDispersion> dispersion_report(const std::vector<LabeledScore>& scores,
                                                      const std::map<std::string, std::string>& groups) {
  std::map<std::string, std::vector<double>> by_group;
  for (const auto& s : scores) {
    auto it = groups.find(s.item_id);
    if (it == groups.end()) throw Error(ErrorCode::UnmappedItem, "item " + s.item_id + " has no group");
    by_group[it->second].push_back(s.score);
  }
  std::vector<GroupDispersion> out;
  for (const auto& [group, values] : by_group) {
    const double n = static_cast<double>(values.size());
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    out.push_back({group, mean, std::sqrt(var / n), values.size()});
  }
  return out;
}

}  // namespace memsel
