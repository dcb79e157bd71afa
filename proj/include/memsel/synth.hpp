#pragma once

// Deterministic synthetic embedding worlds. Each concept is a unit center on
// the sphere; image and text samples are center + isotropic gaussian noise,
// renormalized. A per-concept scale_bias inflates the noise regionally, which
// compresses raw cosine scores in some parts of the space but not others.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "memsel/error.hpp"
#include "memsel/scoring.hpp"
#include "memsel/store.hpp"
#include "memsel/textmetrics.hpp"
#include "memsel/vec.hpp"

namespace memsel::synth {

// mt19937_64 plus Box-Muller on raw engine bits, so a seed maps to the same
// world under every standard library.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::size_t below(std::size_t n) { return static_cast<std::size_t>(engine_() % n); }

  double gaussian() {
    if (spare_) {
      double v = *spare_;
      spare_.reset();
      return v;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    return r * std::cos(theta);
  }

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_;
};

struct ConceptSpec {
  std::string id;
  std::string name;  // noun naming the concept in captions
  Embedding center;  // unit norm
  double image_noise = 0.1;
  double text_noise = 0.1;
  double scale_bias = 1.0;
};

enum class WorldMode { Classification, Captioning };

struct WorldConfig {
  std::size_t dim = 32;
  std::vector<ConceptSpec> concepts;
  std::size_t retrieval_per_concept = 64;
  std::size_t eval_per_concept = 32;
  double wrong_caption_rate = 0.3;
  std::uint64_t seed = 0;
  WorldMode mode = WorldMode::Classification;
  std::size_t references_per_item = 3;
};

struct World {
  RetrievalSet retrieval;
  std::vector<EvaluationItem> items;
  std::map<std::string, std::string> groups;  // item id -> concept id
  std::vector<ConceptSpec> concepts;
  std::vector<std::size_t> record_concepts;   // retrieval row -> concept index
  std::vector<std::size_t> item_concepts;     // item -> true concept index
  NegativeLexicon lexicon;                    // concept nouns, for rule-based negatives
};

inline const std::vector<std::string>& concept_nouns() {
  static const std::vector<std::string> nouns = {
      "dog",   "cat",    "horse", "bird",   "truck", "bicycle", "boat",  "train", "sheep", "zebra",
      "pizza", "clock",  "chair", "laptop", "kite",  "bear",    "apple", "bench", "cow",   "plane",
      "bus",   "guitar", "lamp",  "tiger",  "duck",  "camera",  "vase",  "phone", "table", "sofa"};
  return nouns;
}

inline std::string concept_name(std::size_t i) {
  const auto& nouns = concept_nouns();
  return i < nouns.size() ? nouns[i] : "thing" + std::to_string(i);
}

inline Embedding unit_gaussian(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  for (auto& x : v) x = rng.gaussian();
  return normalized(v);
}

/// Concepts with random unit centers. scale_bias[i] is cycled if shorter
/// than `count`; an empty list means 1.0 everywhere.
inline std::vector<ConceptSpec> make_concepts(std::size_t dim, std::size_t count, double noise,
                                              const std::vector<double>& scale_bias, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "concept-centers"));
  std::vector<ConceptSpec> out;
  for (std::size_t i = 0; i < count; ++i) {
    ConceptSpec c;
    c.id = "c" + std::to_string(i);
    c.name = concept_name(i);
    c.center = unit_gaussian(dim, rng);
    c.image_noise = noise;
    c.text_noise = noise;
    c.scale_bias = scale_bias.empty() ? 1.0 : scale_bias[i % scale_bias.size()];
    out.push_back(std::move(c));
  }
  return out;
}

/// Linearly spaced scale biases from lo to hi.
inline std::vector<double> linear_bias(std::size_t count, double lo, double hi) {
  std::vector<double> out(count, lo);
  for (std::size_t i = 0; i < count && count > 1; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

inline Embedding sample_around(const ConceptSpec& c, double sigma, Rng& rng) {
  std::vector<double> v(c.center.size());
  const double s = sigma * c.scale_bias;
  for (std::size_t d = 0; d < v.size(); ++d) v[d] = static_cast<double>(c.center[d]) + s * rng.gaussian();
  return normalized(v);
}

namespace detail {

inline const std::vector<std::string>& adjectives() {
  static const std::vector<std::string> w = {"small", "large", "brown", "white", "black", "young"};
  return w;
}
inline const std::vector<std::string>& verbs() {
  static const std::vector<std::string> w = {"sitting", "standing", "running", "lying", "resting"};
  return w;
}
inline const std::vector<std::string>& places() {
  static const std::vector<std::string> w = {"grass", "street", "beach", "floor", "field"};
  return w;
}

}  // namespace detail

// Each concept describes itself with a small pool of captions
// "a <adjective> <noun> <verb> on the <place>" sharing verb and place and
// differing in the adjective, so caption similarity tracks concept identity.
inline std::vector<std::string> caption_pool(const ConceptSpec& c, Rng& rng, std::size_t variants = 2) {
  const auto& a = detail::adjectives();
  const auto& v = detail::verbs();
  const auto& p = detail::places();
  const std::string tail = " " + c.name + " " + v[rng.below(v.size())] + " on the " + p[rng.below(p.size())];
  std::vector<std::string> pool;
  const std::size_t first = rng.below(a.size());
  for (std::size_t i = 0; i < variants; ++i) pool.push_back("a " + a[(first + i) % a.size()] + tail);
  return pool;
}

inline std::string label_for(const ConceptSpec& c) { return "a photo of a " + c.name; }

inline void validate(const WorldConfig& cfg) {
  if (cfg.dim == 0) throw Error(ErrorCode::InvalidConfig, "dim must be positive");
  if (cfg.concepts.size() < 2) throw Error(ErrorCode::InvalidConfig, "a world needs at least 2 concepts");
  if (cfg.retrieval_per_concept == 0 || cfg.eval_per_concept == 0 || cfg.references_per_item == 0)
    throw Error(ErrorCode::InvalidConfig, "per-concept counts must be >= 1");
  if (!(cfg.wrong_caption_rate >= 0.0 && cfg.wrong_caption_rate <= 1.0))
    throw Error(ErrorCode::InvalidConfig, "wrong_caption_rate must lie in [0, 1]");
  for (const auto& c : cfg.concepts) {
    if (c.center.size() != cfg.dim) throw Error(ErrorCode::InvalidConfig, "concept " + c.id + " center has wrong dim");
    if (std::abs(l2_norm(c.center) - 1.0) > 1e-6) throw Error(ErrorCode::InvalidConfig, "concept " + c.id + " center is not unit");
    if (!(c.image_noise > 0.0 && c.text_noise > 0.0 && c.scale_bias > 0.0))
      throw Error(ErrorCode::InvalidConfig, "concept " + c.id + " noise and scale_bias must be > 0");
  }
}

inline World generate_world(const WorldConfig& cfg) {
  validate(cfg);
  Rng rng(cfg.seed);
  const auto& concepts = cfg.concepts;
  const std::size_t nc = concepts.size();

  World world{RetrievalSet::from_columns(cfg.dim, {}, {}, {}, {}, true), {}, {}, concepts, {}, {}, {}};

  std::vector<std::vector<std::string>> pools;
  if (cfg.mode == WorldMode::Captioning)
    for (const auto& c : concepts) pools.push_back(caption_pool(c, rng));
  auto pick_caption = [&](std::size_t c) { return pools[c][rng.below(pools[c].size())]; };

  std::vector<std::string> ids, captions;
  std::vector<float> images, texts;
  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t r = 0; r < cfg.retrieval_per_concept; ++r) {
      ids.push_back("r" + std::to_string(c) + "_" + std::to_string(r));
      auto img = sample_around(concepts[c], concepts[c].image_noise, rng);
      auto txt = sample_around(concepts[c], concepts[c].text_noise, rng);
      images.insert(images.end(), img.begin(), img.end());
      texts.insert(texts.end(), txt.begin(), txt.end());
      captions.push_back(cfg.mode == WorldMode::Captioning ? pick_caption(c) : label_for(concepts[c]));
      world.record_concepts.push_back(c);
    }
  }
  world.retrieval = RetrievalSet::from_columns(cfg.dim, std::move(ids), std::move(captions), std::move(images),
                                               std::move(texts), true);

  std::vector<std::string> nouns;
  for (const auto& c : concepts) nouns.push_back(c.name);
  world.lexicon = NegativeLexicon::from_lists(nouns, {}, {});

  for (std::size_t c = 0; c < nc; ++c) {
    for (std::size_t e = 0; e < cfg.eval_per_concept; ++e) {
      EvaluationItem item;
      item.id = "q" + std::to_string(c) + "_" + std::to_string(e);
      item.image_embedding = sample_around(concepts[c], concepts[c].image_noise, rng);
      std::size_t predicted = c;
      if (rng.uniform() < cfg.wrong_caption_rate) predicted = (c + 1 + rng.below(nc - 1)) % nc;
      const auto& pc = concepts[predicted];
      item.prediction_embedding = sample_around(pc, pc.text_noise, rng);

      if (cfg.mode == WorldMode::Classification) {
        item.prediction_text = label_for(pc);
        item.correct = predicted == c;
        for (std::size_t q = 0; q < nc; ++q) {
          if (q == predicted)
            item.candidates.push_back({item.prediction_text, item.prediction_embedding});
          else
            item.candidates.push_back({label_for(concepts[q]), sample_around(concepts[q], concepts[q].text_noise, rng)});
        }
      } else {
        item.prediction_text = pick_caption(predicted);
        for (std::size_t r = 0; r < cfg.references_per_item; ++r) item.references.push_back(pick_caption(c));
        // Hard negatives: the prediction with its noun swapped for every other concept.
        const auto tokens = tokenize(item.prediction_text);
        for (std::size_t q = 0; q < nc; ++q) {
          if (q == predicted) continue;
          std::string neg;
          for (std::size_t t = 0; t < tokens.size(); ++t) {
            if (t) neg.push_back(' ');
            neg += tokens[t] == pc.name ? concepts[q].name : tokens[t];
          }
          item.candidates.push_back({neg, sample_around(concepts[q], concepts[q].text_noise, rng)});
        }
      }
      world.groups[item.id] = concepts[c].id;
      world.item_concepts.push_back(c);
      world.items.push_back(std::move(item));
    }
  }
  return world;
}

/// Embeds a caption as a fresh text sample of the first concept it names,
/// seeded by the caption text. Stands in for a text encoder when negatives
/// are generated at evaluation time.
class SyntheticTextEncoder {
 public:
  SyntheticTextEncoder(std::vector<ConceptSpec> concepts, std::uint64_t seed)
      : concepts_(std::move(concepts)), seed_(seed) {}

  std::optional<Embedding> operator()(std::string_view text) const {
    for (const auto& tok : tokenize(text)) {
      for (const auto& c : concepts_) {
        if (c.name == tok) {
          Rng rng(derive_seed(seed_, text));
          return sample_around(c, c.text_noise, rng);
        }
      }
    }
    return std::nullopt;
  }

 private:
  std::vector<ConceptSpec> concepts_;
  std::uint64_t seed_;
};

struct ConceptStatistics {
  std::string concept_id;
  double image_std = 0.0;  // per-coordinate RMS deviation from the sample mean
  double text_std = 0.0;
  double mean_pairwise_cosine = 0.0;  // mean cos(image_i, text_j) over the concept's records
  std::size_t count = 0;
};

inline std::vector<ConceptStatistics> world_statistics(const World& world) {
  const auto& set = world.retrieval;
  const std::size_t d = set.dim();
  std::vector<std::vector<std::size_t>> rows(world.concepts.size());
  for (std::size_t i = 0; i < world.record_concepts.size(); ++i) rows[world.record_concepts[i]].push_back(i);

  auto spread = [&](const std::vector<std::size_t>& idx, Modality m) {
    if (idx.size() < 2) return 0.0;
    std::vector<double> mean(d, 0.0);
    for (auto i : idx) {
      auto e = set.embedding(m, i);
      for (std::size_t c = 0; c < d; ++c) mean[c] += e[c];
    }
    for (auto& x : mean) x /= static_cast<double>(idx.size());
    double ss = 0.0;
    for (auto i : idx) {
      auto e = set.embedding(m, i);
      for (std::size_t c = 0; c < d; ++c) ss += (e[c] - mean[c]) * (e[c] - mean[c]);
    }
    return std::sqrt(ss / (static_cast<double>(idx.size()) * static_cast<double>(d)));
  };

  std::vector<ConceptStatistics> out;
  for (std::size_t c = 0; c < world.concepts.size(); ++c) {
    ConceptStatistics s;
    s.concept_id = world.concepts[c].id;
    s.count = rows[c].size();
    s.image_std = spread(rows[c], Modality::Image);
    s.text_std = spread(rows[c], Modality::Text);
    double total = 0.0;
    for (auto i : rows[c])
      for (auto j : rows[c]) total += cosine(set.image(i), set.text(j));
    if (!rows[c].empty()) s.mean_pairwise_cosine = total / static_cast<double>(rows[c].size() * rows[c].size());
    out.push_back(s);
  }
  return out;
}

}  // namespace memsel::synth
