#include "memsel/scoring.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"

namespace memsel {
namespace {

ProxyEmbedding text_proxy(Embedding v) {
  ProxyEmbedding p;
  p.vector = normalized(v);
  p.mean.assign(v.begin(), v.end());
  p.source_variant = RetrievalVariant::I2TR;
  return p;
}

EvaluationItem item_with(const std::string& text, Embedding emb) {
  EvaluationItem item;
  item.id = "x";
  item.prediction_text = text;
  item.prediction_embedding = std::move(emb);
  return item;
}

TEST(Cosine, Identities) {
  const Embedding a = {3, 4}, b = {-3, -4}, c = {4, -3};
  EXPECT_DOUBLE_EQ(cosine(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine(a, b), -1.0);
  EXPECT_DOUBLE_EQ(cosine(a, c), 0.0);
  const Embedding scaled = {30, 40};
  EXPECT_DOUBLE_EQ(cosine(a, scaled), 1.0);
  const Embedding zero = {0, 0};
  EXPECT_THROW(cosine(a, zero), Error);
  const Embedding three = {1, 2, 3};
  EXPECT_THROW(cosine(a, three), Error);
}

TEST(BaseScore, CosineOfImageAndPrediction) {
  auto item = item_with("cat", {1, 1});
  item.image_embedding = Embedding{1, 0};
  auto rec = base_score(item);
  EXPECT_NEAR(rec.score, 0.707106781187, 1e-9);
  EXPECT_EQ(rec.kind, ScoreKind::Base);
  item.image_embedding.reset();
  try {
    base_score(item);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingImageEmbedding);
  }
}

TEST(ProxyScore, ModalityMustMatch) {
  auto item = item_with("cat", {1, 0});
  auto p = text_proxy({1, 0});
  EXPECT_DOUBLE_EQ(proxy_score(item, p).score, 1.0);
  try {
    proxy_score(item, p, ScoreKind::ImageProxy);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ModalityMismatch);
  }
  p.source_variant = RetrievalVariant::I2IR;
  EXPECT_DOUBLE_EQ(proxy_score(item, p, ScoreKind::ImageProxy).score, 1.0);
}

TEST(Contrastive, TwoWayExample) {
  // cos(proxy, pred) = 0.09, cos(proxy, neg) = 0.01, tau = 0.01.
  const double s = std::sqrt(1.0 - 0.09 * 0.09), t = std::sqrt(1.0 - 0.01 * 0.01);
  auto item = item_with("a cat", {0.09f, static_cast<float>(s)});
  auto proxy = text_proxy({1, 0});
  CandidateSet cands = {{"a dog", {0.01f, static_cast<float>(t)}}};
  auto rec = contrastive_score(item, proxy, cands, {});
  const double expected = oracle::softmax_mass({cosine(proxy.vector, item.prediction_embedding) / 0.01,
                                                cosine(proxy.vector, cands[0].embedding) / 0.01},
                                               0);
  EXPECT_NEAR(rec.score, expected, 1e-12);
  EXPECT_NEAR(rec.score, 0.999664649870, 1e-5);
  ASSERT_EQ(rec.components.size(), 2u);
  EXPECT_EQ(rec.components[0].first, "a cat");
  EXPECT_NEAR(rec.components[0].second + rec.components[1].second, 1.0, 1e-12);
}

TEST(Contrastive, PredictionCountedOnceWhenListedAsCandidate) {
  auto item = item_with("cat", {1, 0});
  auto proxy = text_proxy({1, 1});
  CandidateSet labels = {{"cat", {1, 0}}, {"dog", {0, 1}}, {"cow", {-1, 0}}};
  auto rec = contrastive_score(item, proxy, labels, {ScoreKind::ContrastiveText, 1.0, true});
  ASSERT_EQ(rec.components.size(), 3u);
  const double c = std::sqrt(0.5);
  EXPECT_NEAR(rec.score, oracle::softmax_mass({c, c, -c}, 0), 1e-12);
  auto excl = contrastive_score(item, proxy, labels, {ScoreKind::ContrastiveText, 1.0, false});
  EXPECT_NEAR(excl.score, rec.score, 1e-15);
}

TEST(Contrastive, ExcludedPredictionCanExceedOne) {
  auto item = item_with("cat", {1, 0});
  auto proxy = text_proxy({1, 0});
  CandidateSet cands = {{"dog", {0, 1}}};
  auto rec = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 1.0, false});
  EXPECT_NEAR(rec.score, std::exp(1.0), 1e-12);
  EXPECT_EQ(rec.components.size(), 1u);
}

TEST(Contrastive, Errors) {
  auto item = item_with("cat", {1, 0});
  auto proxy = text_proxy({1, 0});
  try {
    contrastive_score(item, proxy, {}, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyCandidates);
  }
  CandidateSet cands = {{"dog", {0, 1}}};
  for (double tau : {0.0, -1.0}) {
    try {
      contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, tau, true});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::NonPositiveTemperature);
    }
  }
}

TEST(Contrastive, TemperatureLimits) {
  auto item = item_with("cat", {1, 0});
  auto proxy = text_proxy({1, 0.3f});
  CandidateSet cands = {{"dog", {0, 1}}, {"cow", {-1, 0}}, {"pig", {0.7f, 0.7f}}};
  auto hot = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 1e6, true});
  EXPECT_NEAR(hot.score, 0.25, 1e-6);
  auto cold = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 1e-4, true});
  EXPECT_NEAR(cold.score, 1.0, 1e-9);
}

TEST(Contrastive, MonotoneInPredictionSimilarity) {
  auto proxy = text_proxy({1, 0});
  CandidateSet cands = {{"dog", {0.2f, 1}}, {"cow", {-0.5f, 1}}};
  double prev = -1.0;
  for (float x = -1.0f; x <= 1.0f; x += 0.1f) {
    auto item = item_with("cat", {x, 1.0f});
    const double s = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 0.1, true}).score;
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(Contrastive, InvariantToEmbeddingScale) {
  std::mt19937_64 rng(3);
  std::normal_distribution<float> g;
  auto rand_vec = [&] {
    Embedding v(16);
    for (auto& x : v) x = g(rng);
    return v;
  };
  for (int trial = 0; trial < 50; ++trial) {
    auto item = item_with("p", rand_vec());
    auto proxy = text_proxy(rand_vec());
    CandidateSet cands = {{"a", rand_vec()}, {"b", rand_vec()}};
    const double ref = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 0.05, true}).score;
    for (auto& x : item.prediction_embedding) x *= 7.5f;
    for (auto& c : cands)
      for (auto& x : c.embedding) x *= 0.25f;
    const double scaled = contrastive_score(item, proxy, cands, {ScoreKind::ContrastiveText, 0.05, true}).score;
    EXPECT_NEAR(ref, scaled, 1e-5);
    EXPECT_GE(ref, 0.0);
    EXPECT_LE(ref, 1.0);
  }
}

TEST(ScoreKinds, RoundTrip) {
  for (auto k : {ScoreKind::Base, ScoreKind::ImageProxy, ScoreKind::TextProxy, ScoreKind::ContrastiveText})
    EXPECT_EQ(parse_score_kind(to_string(k)), k);
  EXPECT_FALSE(parse_score_kind("nope").has_value());
}

NegativeLexicon small_lexicon() {
  return NegativeLexicon::from_lists({"girl", "boy", "dog", "cat"}, {"red", "blue"}, {"walking", "feeding"});
}

int word_distance(const std::string& a, const std::string& b) {
  std::istringstream sa(a), sb(b);
  std::vector<std::string> wa, wb;
  for (std::string w; sa >> w;) wa.push_back(w);
  for (std::string w; sb >> w;) wb.push_back(w);
  if (wa.size() != wb.size()) return -1;
  int d = 0;
  for (std::size_t i = 0; i < wa.size(); ++i) d += wa[i] != wb[i];
  return d;
}

TEST(Negatives, SingleWordSubstitutions) {
  const std::string caption = "A girl walking a dog.";
  auto negs = generate_negatives(caption, small_lexicon(), 100, 7);
  // girl: 3 alternatives, walking: 1, dog: 3.
  EXPECT_EQ(negs.size(), 7u);
  std::set<std::string> unique(negs.begin(), negs.end());
  EXPECT_EQ(unique.size(), negs.size());
  for (const auto& n : negs) {
    EXPECT_EQ(word_distance(caption, n), 1) << n;
    EXPECT_NE(n, caption);
  }
  EXPECT_TRUE(unique.count("A girl walking a cat."));
  EXPECT_TRUE(unique.count("A boy walking a dog."));
  EXPECT_TRUE(unique.count("A girl feeding a dog."));
}

TEST(Negatives, CapitalizationAndPunctuationKept) {
  auto negs = generate_negatives("Dog!", small_lexicon(), 10, 1);
  std::set<std::string> got(negs.begin(), negs.end());
  EXPECT_EQ(got, (std::set<std::string>{"Boy!", "Cat!", "Girl!"}));
}

TEST(Negatives, DeterministicAndSeedSensitive) {
  const auto lex = small_lexicon();
  const std::string caption = "a red girl walking a blue dog";
  EXPECT_EQ(generate_negatives(caption, lex, 3, 11), generate_negatives(caption, lex, 3, 11));
  bool differs = false;
  for (std::uint64_t s = 0; s < 20 && !differs; ++s)
    differs = generate_negatives(caption, lex, 3, s) != generate_negatives(caption, lex, 3, 11);
  EXPECT_TRUE(differs);
  EXPECT_EQ(derive_seed(5, "item-1"), derive_seed(5, "item-1"));
  EXPECT_NE(derive_seed(5, "item-1"), derive_seed(5, "item-2"));
  EXPECT_NE(derive_seed(5, "item-1"), derive_seed(6, "item-1"));
}

TEST(Negatives, NothingToSubstitute) {
  try {
    generate_negatives("the the the", small_lexicon(), 5, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoSubstitutableToken);
  }
  // A class with a single entry has no alternative.
  auto lex = NegativeLexicon::from_lists({"cat"}, {}, {});
  EXPECT_THROW(generate_negatives("a cat", lex, 5, 0), Error);
}

TEST(Negatives, LexiconCollisionsPreferNouns) {
  auto lex = NegativeLexicon::from_lists({"Fly", "bee"}, {"fly", "quick", "slow"}, {"fly", "run"});
  EXPECT_TRUE(lex.nouns.count("fly"));
  EXPECT_FALSE(lex.verbs.count("fly"));
  EXPECT_FALSE(lex.adjectives.count("fly"));
  EXPECT_EQ(lex.pool_for("fly"), &lex.nouns);
  EXPECT_EQ(lex.pool_for("run"), nullptr);
  EXPECT_THROW(NegativeLexicon::from_lists({"two words"}, {}, {}), Error);
}

TEST(NegativesFile, LoadSaveAndErrors) {
  testing::TempDir dir;
  const auto path = dir / "neg.jsonl";
  save_negatives({{"a", {"x y", "z"}}, {"b", {}}}, path);
  auto map = load_negatives(path);
  ASSERT_EQ(map.size(), 2u);
  EXPECT_EQ(map["a"], (std::vector<std::string>{"x y", "z"}));
  EXPECT_TRUE(map["b"].empty());

  io::write_text(dir / "empty.jsonl", "");
  EXPECT_TRUE(load_negatives(dir / "empty.jsonl").empty());

  io::write_text(dir / "dup.jsonl", "{\"id\":\"a\",\"negatives\":[]}\n{\"id\":\"a\",\"negatives\":[\"q\"]}\n");
  try {
    load_negatives(dir / "dup.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateId);
  }
  try {
    load_negatives(dir / "missing.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingFile);
  }
}

TEST(NegativesFile, AttachedEmbeddingsAreKeptPerItem) {
  testing::TempDir dir;
  io::write_text(dir / "neg.jsonl",
                 "{\"id\":\"a\",\"negatives\":[\"a dog\"],\"embeddings\":[[0.5,0.25]]}\n"
                 "{\"id\":\"b\",\"negatives\":[\"a dog\"],\"embeddings\":[[0.0,1.0]]}\n"
                 "{\"id\":\"c\",\"negatives\":[\"a cow\"]}\n");
  auto file = load_negatives_file(dir / "neg.jsonl", 2);
  EXPECT_EQ(file.embeddings.at("a"), (std::vector<Embedding>{{0.5f, 0.25f}}));
  EXPECT_EQ(file.embeddings.at("b"), (std::vector<Embedding>{{0.0f, 1.0f}}));
  EXPECT_FALSE(file.embeddings.count("c"));
  io::write_text(dir / "bad.jsonl", "{\"id\":\"a\",\"negatives\":[\"a\",\"b\"],\"embeddings\":[[1,0]]}\n");
  EXPECT_THROW(load_negatives_file(dir / "bad.jsonl", 2), Error);
  io::write_text(dir / "dim.jsonl", "{\"id\":\"a\",\"negatives\":[\"a\"],\"embeddings\":[[1,0,0]]}\n");
  try {
    load_negatives_file(dir / "dim.jsonl", 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DimMismatch);
  }
}

TEST(Lexicon, LoadFromFile) {
  testing::TempDir dir;
  io::write_text(dir / "lex.json", R"({"nouns":["cat","dog"],"verbs":["runs","sits"]})");
  auto lex = load_lexicon(dir / "lex.json");
  EXPECT_EQ(lex.nouns.size(), 2u);
  EXPECT_TRUE(lex.adjectives.empty());
  io::write_text(dir / "bad.json", "{nouns");
  try {
    load_lexicon(dir / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ParseError);
  }
}

}  // namespace
}  // namespace memsel
