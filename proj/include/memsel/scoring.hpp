#pragma once

// Confidence scores for a prediction: the raw image-text cosine, cosines
// against a retrieved proxy embedding, and the proxy cosine normalized by a
// softmax over alternative captions. Also the rule-based hard-negative
// generator that supplies those alternatives for captioning.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "memsel/error.hpp"
#include "memsel/io.hpp"
#include "memsel/retrieval.hpp"
#include "memsel/store.hpp"
#include "memsel/vec.hpp"

namespace memsel {

enum class ScoreKind { Base, ImageProxy, TextProxy, ContrastiveText };

inline std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Base: return "base";
    case ScoreKind::ImageProxy: return "iproxy";
    case ScoreKind::TextProxy: return "tproxy";
    case ScoreKind::ContrastiveText: return "contrastive";
  }
  return "?";
}

inline std::optional<ScoreKind> parse_score_kind(std::string_view s) {
  if (s == "base") return ScoreKind::Base;
  if (s == "iproxy") return ScoreKind::ImageProxy;
  if (s == "tproxy") return ScoreKind::TextProxy;
  if (s == "contrastive") return ScoreKind::ContrastiveText;
  return std::nullopt;
}

struct ScoreConfig {
  ScoreKind kind = ScoreKind::ContrastiveText;
  double temperature = 0.01;
  bool include_prediction_in_denominator = true;
};

// Aligned (text, embedding) pairs: hard negatives or a task's label set.
using CandidateSet = std::vector<Candidate>;

struct ScoreRecord {
  std::string item_id;
  double score = 0.0;
  ScoreKind kind = ScoreKind::Base;
  // Softmax mass per member of the denominator, prediction first when it is
  // included. Only filled for ContrastiveText.
  std::vector<std::pair<std::string, double>> components;
};

/// Raw CLIP-style score: cos(image, prediction text).
inline ScoreRecord base_score(const EvaluationItem& item) {
  if (!item.image_embedding) throw Error(ErrorCode::MissingImageEmbedding, "item " + item.id + " has no image embedding");
  return {item.id, cosine(*item.image_embedding, item.prediction_embedding), ScoreKind::Base, {}};
}

/// cos(proxy, prediction text). The proxy's modality must match `kind`.
inline ScoreRecord proxy_score(const EvaluationItem& item, const ProxyEmbedding& proxy,
                               ScoreKind kind = ScoreKind::TextProxy) {
  const Modality m = proxy_modality(proxy.source_variant);
  const bool ok = (kind == ScoreKind::TextProxy && m == Modality::Text) ||
                  (kind == ScoreKind::ImageProxy && m == Modality::Image);
  if (!ok)
    throw Error(ErrorCode::ModalityMismatch, std::string(to_string(kind)) + " score cannot use a " +
                                                 std::string(to_string(proxy.source_variant)) + " proxy");
  return {item.id, cosine(proxy.vector, item.prediction_embedding), kind, {}};
}

/// Softmax mass of the prediction among the candidate captions, with logits
/// cos(proxy, caption) / temperature. With include_prediction_in_denominator
/// the prediction joins the denominator once, even when it is also listed
/// among the candidates (label sets).
inline ScoreRecord contrastive_score(const EvaluationItem& item, const ProxyEmbedding& proxy,
                                     const CandidateSet& candidates, const ScoreConfig& cfg) {
  if (candidates.empty()) throw Error(ErrorCode::EmptyCandidates, "item " + item.id + " has no contrastive candidates");
  if (!(cfg.temperature > 0.0)) throw Error(ErrorCode::NonPositiveTemperature, std::to_string(cfg.temperature));

  std::vector<std::pair<std::string, double>> logits;
  logits.reserve(candidates.size() + 1);
  const double pred_logit = cosine(proxy.vector, item.prediction_embedding) / cfg.temperature;
  std::optional<std::size_t> pred_index;
  if (cfg.include_prediction_in_denominator) {
    logits.emplace_back(item.prediction_text, pred_logit);
    pred_index = 0;
  }
  for (const auto& c : candidates) {
    if (c.text == item.prediction_text) {
      if (cfg.include_prediction_in_denominator) continue;
      if (!pred_index) pred_index = logits.size();
    }
    logits.emplace_back(c.text, cosine(proxy.vector, c.embedding) / cfg.temperature);
  }

  double max_logit = pred_logit;
  for (const auto& [_, l] : logits) max_logit = std::max(max_logit, l);
  double total = 0.0;
  for (auto& [_, l] : logits) {
    l = std::exp(l - max_logit);
    total += l;
  }
  for (auto& [_, l] : logits) l /= total;

  ScoreRecord rec{item.id, 0.0, ScoreKind::ContrastiveText, std::move(logits)};
  rec.score = pred_index ? rec.components[*pred_index].second : std::exp(pred_logit - max_logit) / total;
  return rec;
}

// ---------------------------------------------------------------------------
// Rule-based hard negatives

struct NegativeLexicon {
  std::set<std::string> nouns;
  std::set<std::string> adjectives;
  std::set<std::string> verbs;

  // Collisions resolve noun > verb > adjective; entries are lowercased.
  static NegativeLexicon from_lists(const std::vector<std::string>& nouns, const std::vector<std::string>& adjectives,
                                    const std::vector<std::string>& verbs) {
    auto clean = [](const std::string& w) {
      std::string out;
      for (char ch : w) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      if (out.empty() || std::any_of(out.begin(), out.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); }))
        throw Error(ErrorCode::InvalidConfig, "lexicon entries must be single non-empty words: '" + w + "'");
      return out;
    };
    NegativeLexicon lex;
    for (const auto& w : nouns) lex.nouns.insert(clean(w));
    for (const auto& w : verbs) {
      auto c = clean(w);
      if (!lex.nouns.count(c)) lex.verbs.insert(c);
    }
    for (const auto& w : adjectives) {
      auto c = clean(w);
      if (!lex.nouns.count(c) && !lex.verbs.count(c)) lex.adjectives.insert(c);
    }
    return lex;
  }

  // The substitution pool for a lowercase word, or null when the word is not
  // substitutable (unknown, or its class has fewer than two entries).
  const std::set<std::string>* pool_for(const std::string& word) const {
    for (const auto* s : {&nouns, &verbs, &adjectives})
      if (s->count(word)) return s->size() >= 2 ? s : nullptr;
    return nullptr;
  }
};

/// Lexicon file: {"nouns": [...], "adjectives": [...], "verbs": [...]}.
inline NegativeLexicon load_lexicon(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  try {
    auto j = io::json::parse(io::read_text(path));
    auto list = [&](const char* key) {
      return j.contains(key) ? j.at(key).get<std::vector<std::string>>() : std::vector<std::string>{};
    };
    return NegativeLexicon::from_lists(list("nouns"), list("adjectives"), list("verbs"));
  } catch (const io::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

/// Per-item stream seed: a splitmix64 finalization of seed xor FNV-1a(id).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view id) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : id) {
    h ^= c;
    h *= 1099511628211ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Up to n distinct captions, each differing from `caption` in exactly one
/// whitespace-delimited word replaced by another member of its lexicon class.
/// Surrounding punctuation and leading capitalization are kept.
inline std::vector<std::string> generate_negatives(std::string_view caption, const NegativeLexicon& lexicon,
                                                   std::size_t n, std::uint64_t seed) {
  struct Slot {
    std::size_t begin;  // of the word core inside caption
    std::size_t length;
    bool capitalized;
    std::string lower;
    const std::set<std::string>* pool;
  };
  std::vector<Slot> slots;
  std::size_t pos = 0;
  while (pos < caption.size()) {
    while (pos < caption.size() && std::isspace(static_cast<unsigned char>(caption[pos]))) ++pos;
    std::size_t end = pos;
    while (end < caption.size() && !std::isspace(static_cast<unsigned char>(caption[end]))) ++end;
    std::size_t b = pos, e = end;
    auto punct = [&](std::size_t i) { return std::ispunct(static_cast<unsigned char>(caption[i])) != 0; };
    while (b < e && punct(b)) ++b;
    while (e > b && punct(e - 1)) --e;
    if (b < e) {
      std::string lower;
      for (std::size_t i = b; i < e; ++i) lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(caption[i]))));
      if (const auto* pool = lexicon.pool_for(lower))
        slots.push_back({b, e - b, std::isupper(static_cast<unsigned char>(caption[b])) != 0, std::move(lower), pool});
    }
    pos = end;
  }
  if (slots.empty())
    throw Error(ErrorCode::NoSubstitutableToken, "no word of '" + std::string(caption) + "' is in the lexicon");

  std::vector<std::pair<std::size_t, const std::string*>> options;
  for (std::size_t s = 0; s < slots.size(); ++s)
    for (const auto& w : *slots[s].pool)
      if (w != slots[s].lower) options.emplace_back(s, &w);

  // Partial Fisher-Yates on raw engine output so results do not depend on the
  // standard library's distribution implementations.
  std::mt19937_64 rng(seed);
  const std::size_t take = std::min(n, options.size());
  std::vector<std::string> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (options.size() - i));
    std::swap(options[i], options[j]);
    const auto& slot = slots[options[i].first];
    std::string word = *options[i].second;
    if (slot.capitalized && !word.empty()) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
    std::string neg(caption);
    neg.replace(slot.begin, slot.length, word);
    out.push_back(std::move(neg));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Offline negatives file: JSONL {"id": str, "negatives": [str]}, optionally
// with "embeddings": [[f32], ...] aligned with "negatives".

using NegativesMap = std::map<std::string, std::vector<std::string>>;

// Text -> embedding lookup used to embed negatives that arrive without vectors.
using TextEncoder = std::function<std::optional<Embedding>(std::string_view)>;

struct NegativesFile {
  NegativesMap negatives;
  std::map<std::string, std::vector<Embedding>> embeddings;  // by item id, aligned with negatives
};

/// Reads negatives plus any attached embeddings. dim = 0 skips the dim check.
inline NegativesFile load_negatives_file(const std::filesystem::path& path, std::size_t dim = 0) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  NegativesFile out;
  io::for_each_line(io::read_text(path), [&](std::size_t line_no, std::string_view line) {
    const std::string where = path.string() + ":" + std::to_string(line_no);
    auto j = io::parse_json_line(line, line_no, path);
    std::string id;
    std::vector<std::string> texts;
    try {
      id = j.at("id").get<std::string>();
      texts = j.at("negatives").get<std::vector<std::string>>();
    } catch (const io::json::exception& e) {
      throw Error(ErrorCode::ParseError, where + ": " + e.what());
    }
    if (out.negatives.count(id)) throw Error(ErrorCode::DuplicateId, where + ": id " + id);
    if (j.contains("embeddings")) {
      const auto& embs = j.at("embeddings");
      if (!embs.is_array() || embs.size() != texts.size())
        throw Error(ErrorCode::ParseError, where + ": embeddings must align with negatives");
      auto& vecs = out.embeddings[id];
      for (const auto& e : embs) vecs.push_back(detail::parse_vector(e, dim ? dim : e.size(), where + " embedding"));
    }
    out.negatives.emplace(std::move(id), std::move(texts));
  });
  return out;
}

inline NegativesMap load_negatives(const std::filesystem::path& path) { return load_negatives_file(path).negatives; }

/// Writes one line per entry, in the given order.
inline void save_negatives(const std::vector<std::pair<std::string, std::vector<std::string>>>& entries,
                           const std::filesystem::path& path) {
  std::string out;
  for (const auto& [id, texts] : entries) out += io::json{{"id", id}, {"negatives", texts}}.dump() + "\n";
  io::write_text(path, out);
}

}  // namespace memsel
