// memsel command-line frontend.
//
// Exit codes: 0 success, 1 structural error (bad inputs, failed run),
// 2 usage error (bad or missing flags).

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "memsel/memsel.hpp"

namespace {

using memsel::io::json;
namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json optional_path(const std::string& s) { return s.empty() ? json(nullptr) : json(s); }

// ---------------------------------------------------------------------------
// evaluate / dispersion

struct EvalArgs {
  std::string store, items, out, groups;
  std::string score = "contrastive";
  std::string variant = "i2tr";
  std::size_t k = 15;
  double weight_floor = 0.0;
  double temperature = 0.01;
  bool exclude_prediction = false;
  std::string metric = "cider";
  std::size_t ngram = 4;
  std::optional<double> beta;
  std::string negatives_file, lexicon, encoder_concepts;
  std::size_t n = 10;
  std::uint64_t seed = 0;
  std::size_t workers = memsel::default_worker_count();
};

void add_eval_options(CLI::App* cmd, EvalArgs& a) {
  cmd->add_option("--store", a.store, "Retrieval store directory or manifest")->required();
  cmd->add_option("--items", a.items, "Evaluation items (JSONL)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--score", a.score, "Confidence score")
      ->check(CLI::IsMember({"base", "iproxy", "tproxy", "contrastive"}))
      ->capture_default_str();
  cmd->add_option("--variant", a.variant, "Retrieval variant")
      ->check(CLI::IsMember({"i2tr", "i2ir", "t2tr", "t2ir"}))
      ->capture_default_str();
  cmd->add_option("--k", a.k, "Neighbourhood size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--weight-floor", a.weight_floor, "Lower clamp for neighbour weights")->capture_default_str();
  cmd->add_option("--temperature", a.temperature, "Softmax temperature")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_flag("--exclude-prediction", a.exclude_prediction, "Leave the prediction out of the softmax denominator");
  cmd->add_option("--metric", a.metric, "Caption metric for loss labels")
      ->check(CLI::IsMember({"cider", "meteor"}))
      ->capture_default_str();
  cmd->add_option("--ngram", a.ngram, "Maximum CIDEr n-gram order")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--beta", a.beta, "Caption loss threshold (default 0.6 cider, 0.24 meteor)")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--negatives-file", a.negatives_file, "Negatives JSONL, optionally with embeddings")
      ->check(CLI::ExistingFile);
  cmd->add_option("--lexicon", a.lexicon, "Lexicon JSON for rule-based negatives")->check(CLI::ExistingFile);
  cmd->add_option("--encoder-concepts", a.encoder_concepts, "concepts.json from synth, used to embed negatives")
      ->check(CLI::ExistingFile);
  cmd->add_option("--n", a.n, "Rule-based negatives per item")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", a.seed, "Seed for rule-based negatives")->capture_default_str();
  cmd->add_option("--workers", a.workers, "Worker threads")->check(CLI::PositiveNumber);
}

json eval_config(const EvalArgs& a, const memsel::PipelineConfig& cfg) {
  return {{"store", a.store},
          {"items", a.items},
          {"out", a.out},
          {"groups", optional_path(a.groups)},
          {"score", a.score},
          {"variant", a.variant},
          {"k", a.k},
          {"weight_floor", a.weight_floor},
          {"temperature", a.temperature},
          {"exclude_prediction", a.exclude_prediction},
          {"metric", a.metric},
          {"ngram", a.ngram},
          {"beta", cfg.metric.threshold()},
          {"negatives_file", optional_path(a.negatives_file)},
          {"lexicon", optional_path(a.lexicon)},
          {"encoder_concepts", optional_path(a.encoder_concepts)},
          {"n", a.n},
          {"seed", a.seed},
          {"workers", a.workers}};
}

std::vector<memsel::synth::ConceptSpec> load_concepts(const fs::path& path) {
  try {
    std::vector<memsel::synth::ConceptSpec> out;
    for (const auto& c : json::parse(memsel::io::read_text(path))) {
      memsel::synth::ConceptSpec spec;
      spec.id = c.at("id").get<std::string>();
      spec.name = c.at("name").get<std::string>();
      spec.center = c.at("center").get<memsel::Embedding>();
      spec.image_noise = c.at("image_noise").get<double>();
      spec.text_noise = c.at("text_noise").get<double>();
      spec.scale_bias = c.at("scale_bias").get<double>();
      out.push_back(std::move(spec));
    }
    return out;
  } catch (const json::exception& e) {
    throw memsel::Error(memsel::ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

struct EvalRun {
  memsel::PipelineConfig cfg;
  memsel::PipelineResult result;
};

EvalRun run_evaluation(const EvalArgs& a) {
  if (!a.lexicon.empty() && !a.negatives_file.empty())
    throw UsageError("--lexicon and --negatives-file are mutually exclusive");
  if (!a.lexicon.empty() && a.encoder_concepts.empty())
    throw UsageError("--lexicon needs --encoder-concepts to embed the generated negatives");

  EvalRun run;
  auto& cfg = run.cfg;
  cfg.retrieval = {a.k, *memsel::parse_variant(a.variant), a.weight_floor};
  cfg.score = {*memsel::parse_score_kind(a.score), a.temperature, !a.exclude_prediction};
  cfg.metric.metric = a.metric == "cider" ? memsel::CaptionMetric::CiderN : memsel::CaptionMetric::MeteorLite;
  cfg.metric.n = a.ngram;
  cfg.metric.beta = a.beta;
  cfg.workers = a.workers;

  const auto set = memsel::load_retrieval_set(a.store);
  const auto items = memsel::load_evaluation_items(a.items, set.dim());

  memsel::NegativesSource src;
  std::optional<memsel::NegativesFile> neg_file;
  std::optional<memsel::NegativeLexicon> lexicon;
  if (!a.negatives_file.empty()) {
    neg_file = memsel::load_negatives_file(a.negatives_file, set.dim());
    src.kind = memsel::NegativesSource::Kind::File;
    src.file = &neg_file->negatives;
    src.file_embeddings = &neg_file->embeddings;
  }
  if (!a.lexicon.empty()) {
    lexicon = memsel::load_lexicon(a.lexicon);
    src.kind = memsel::NegativesSource::Kind::Lexicon;
    src.lexicon = &*lexicon;
    src.n = a.n;
    src.seed = a.seed;
  }
  if (!a.encoder_concepts.empty())
    src.encoder = memsel::synth::SyntheticTextEncoder(load_concepts(a.encoder_concepts), a.seed);

  const auto clamps_before = memsel::k_clamp_count();
  run.result = memsel::run_pipeline(items, set, cfg, src);
  if (const auto clamped = memsel::k_clamp_count() - clamps_before)
    std::cerr << "warning: k=" << a.k << " exceeds the store size " << set.size() << " for " << clamped
              << " queries; clamped\n";
  for (const auto& o : run.result.outcomes)
    if (o.excluded()) std::cerr << "excluded " << o.record.item_id << ": " << *o.error << "\n";
  return run;
}

int cmd_evaluate(const EvalArgs& a) {
  auto run = run_evaluation(a);
  memsel::write_run_artifacts(run.result, eval_config(a, run.cfg), a.out);
  std::cout << "items=" << run.result.outcomes.size() << " excluded=" << run.result.excluded
            << " aurc=" << memsel::format_number(run.result.curve.aurc)
            << " augrc=" << memsel::format_number(run.result.curve.augrc) << "\n";
  return 0;
}

int cmd_dispersion(const EvalArgs& a) {
  std::map<std::string, std::string> groups;
  try {
    groups = json::parse(memsel::io::read_text(a.groups)).get<std::map<std::string, std::string>>();
  } catch (const json::exception& e) {
    throw memsel::Error(memsel::ErrorCode::ParseError, a.groups + ": " + e.what());
  }
  auto run = run_evaluation(a);
  const auto report = memsel::dispersion_report(run.result.labeled(), groups);
  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec) throw memsel::Error(memsel::ErrorCode::IoFailure, "cannot create " + a.out + ": " + ec.message());
  memsel::io::write_text(fs::path(a.out) / "dispersion.csv", memsel::dispersion_csv(report));
  memsel::io::write_text(fs::path(a.out) / "summary.json",
                         memsel::summary_json(run.result, eval_config(a, run.cfg)).dump(2) + "\n");
  std::cout << "groups=" << report.size() << " items=" << run.result.curve.n_items << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
  std::string out;
  std::size_t dim = 32;
  std::size_t concepts = 8;
  double noise = 0.1;
  double bias_min = 1.0;
  double bias_max = 3.0;
  std::vector<double> scale_bias;
  std::size_t retrieval_per_concept = 64;
  std::size_t eval_per_concept = 32;
  double wrong_rate = 0.3;
  std::string mode = "classification";
  std::size_t references = 3;
  std::uint64_t seed = 0;
};

void add_synth_options(CLI::App* cmd, SynthArgs& a) {
  cmd->add_option("--out", a.out, "Output directory")->required();
  cmd->add_option("--dim", a.dim, "Embedding dimension")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--concepts", a.concepts, "Number of concepts (>= 2)")
      ->check(CLI::Range(std::size_t{2}, std::size_t{1} << 20))
      ->capture_default_str();
  cmd->add_option("--noise", a.noise, "Base noise sigma")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--bias-min", a.bias_min, "Scale bias of the first concept")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--bias-max", a.bias_max, "Scale bias of the last concept")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--scale-bias", a.scale_bias, "Explicit per-concept scale biases, cycled")
      ->check(CLI::PositiveNumber)
      ->delimiter(',');
  cmd->add_option("--retrieval-per-concept", a.retrieval_per_concept, "Store records per concept")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--eval-per-concept", a.eval_per_concept, "Evaluation items per concept")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--wrong-rate", a.wrong_rate, "Fraction of items with a wrong prediction")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--mode", a.mode, "Item type")->check(CLI::IsMember({"classification", "captioning"}))->capture_default_str();
  cmd->add_option("--references", a.references, "References per captioning item")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--seed", a.seed, "World seed")->capture_default_str();
}

int cmd_synth(const SynthArgs& a) {
  namespace synth = memsel::synth;
  synth::WorldConfig cfg;
  cfg.dim = a.dim;
  const auto bias = a.scale_bias.empty() ? synth::linear_bias(a.concepts, a.bias_min, a.bias_max) : a.scale_bias;
  cfg.concepts = synth::make_concepts(a.dim, a.concepts, a.noise, bias, a.seed);
  cfg.retrieval_per_concept = a.retrieval_per_concept;
  cfg.eval_per_concept = a.eval_per_concept;
  cfg.wrong_caption_rate = a.wrong_rate;
  cfg.seed = a.seed;
  cfg.mode = a.mode == "captioning" ? synth::WorldMode::Captioning : synth::WorldMode::Classification;
  cfg.references_per_item = a.references;
  const auto world = synth::generate_world(cfg);

  const fs::path out = a.out;
  memsel::save_retrieval_set(world.retrieval, out / "store");
  memsel::save_evaluation_items(world.items, out / "items.jsonl");
  memsel::io::write_text(out / "groups.json", json(world.groups).dump(2) + "\n");
  const json lexicon = {{"nouns", world.lexicon.nouns}, {"adjectives", world.lexicon.adjectives}, {"verbs", world.lexicon.verbs}};
  memsel::io::write_text(out / "lexicon.json", lexicon.dump(2) + "\n");
  json concepts = json::array();
  for (const auto& c : world.concepts)
    concepts.push_back({{"id", c.id},
                        {"name", c.name},
                        {"center", c.center},
                        {"image_noise", c.image_noise},
                        {"text_noise", c.text_noise},
                        {"scale_bias", c.scale_bias}});
  memsel::io::write_text(out / "concepts.json", concepts.dump() + "\n");
  const json config = {{"out", a.out},
                       {"dim", a.dim},
                       {"concepts", a.concepts},
                       {"noise", a.noise},
                       {"bias_min", a.bias_min},
                       {"bias_max", a.bias_max},
                       {"scale_bias", bias},
                       {"retrieval_per_concept", a.retrieval_per_concept},
                       {"eval_per_concept", a.eval_per_concept},
                       {"wrong_rate", a.wrong_rate},
                       {"mode", a.mode},
                       {"references", a.references},
                       {"seed", a.seed}};
  memsel::io::write_text(out / "config.json", config.dump(2) + "\n");
  std::cout << "records=" << world.retrieval.size() << " items=" << world.items.size() << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// negatives

struct NegativesArgs {
  std::string items, lexicon, out;
  std::size_t n = 10;
  std::uint64_t seed = 0;
};

int cmd_negatives(const NegativesArgs& a) {
  const auto lexicon = memsel::load_lexicon(a.lexicon);
  std::vector<std::pair<std::string, std::vector<std::string>>> entries;
  std::set<std::string> seen;
  std::size_t warnings = 0;
  memsel::io::for_each_line(memsel::io::read_text(a.items), [&](std::size_t line_no, std::string_view line) {
    const auto j = memsel::io::parse_json_line(line, line_no, a.items);
    std::string id, text;
    try {
      id = j.at("id").get<std::string>();
      text = j.at("prediction_text").get<std::string>();
    } catch (const json::exception& e) {
      throw memsel::Error(memsel::ErrorCode::ParseError, a.items + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!seen.insert(id).second)
      throw memsel::Error(memsel::ErrorCode::DuplicateId, a.items + ":" + std::to_string(line_no) + ": id " + id);
    std::vector<std::string> negs;
    try {
      negs = memsel::generate_negatives(text, lexicon, a.n, memsel::derive_seed(a.seed, id));
    } catch (const memsel::Error& e) {
      if (e.code() != memsel::ErrorCode::NoSubstitutableToken) throw;
      ++warnings;
    }
    entries.emplace_back(id, std::move(negs));
  });
  memsel::save_negatives(entries, a.out);
  if (warnings) std::cerr << "warning: " << warnings << " items had no substitutable word\n";
  std::cout << "items=" << entries.size() << " without_negatives=" << warnings << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// build-store

struct BuildArgs {
  std::string records, images, texts, out;
  std::size_t dim = 0;
};

int cmd_build_store(const BuildArgs& a) {
  std::vector<std::string> ids, captions;
  memsel::io::for_each_line(memsel::io::read_text(a.records), [&](std::size_t line_no, std::string_view line) {
    const auto j = memsel::io::parse_json_line(line, line_no, a.records);
    try {
      ids.push_back(j.at("id").get<std::string>());
      captions.push_back(j.at("caption").get<std::string>());
    } catch (const json::exception& e) {
      throw memsel::Error(memsel::ErrorCode::ParseError, a.records + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  auto read = [&](const std::string& path) {
    auto v = memsel::io::decode_f32le(memsel::io::read_text(path));
    if (v.size() != ids.size() * a.dim)
      throw memsel::Error(memsel::ErrorCode::DimMismatch, path + " holds " + std::to_string(v.size()) + " floats, expected " +
                                                              std::to_string(ids.size()) + " x " + std::to_string(a.dim));
    return v;
  };
  auto images = read(a.images), texts = read(a.texts);
  const auto set = memsel::RetrievalSet::from_columns(a.dim, std::move(ids), std::move(captions), std::move(images),
                                                      std::move(texts), false);
  memsel::save_retrieval_set(set, a.out);
  std::cout << "records=" << set.size() << " dim=" << set.dim() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective prediction with retrieval-based proxy confidence scores", "memsel"};
  app.require_subcommand(1);

  EvalArgs eval_args;
  auto* evaluate = app.add_subcommand("evaluate", "Score items and write risk-coverage artifacts");
  add_eval_options(evaluate, eval_args);

  EvalArgs disp_args;
  auto* dispersion = app.add_subcommand("dispersion", "Per-group score mean and spread");
  add_eval_options(dispersion, disp_args);
  dispersion->add_option("--groups", disp_args.groups, "JSON object mapping item id to group")
      ->required()
      ->check(CLI::ExistingFile);

  SynthArgs synth_args;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic world");
  add_synth_options(synth, synth_args);

  NegativesArgs neg_args;
  auto* negatives = app.add_subcommand("negatives", "Rule-based hard-negative captions");
  negatives->add_option("--items", neg_args.items, "Evaluation items (JSONL)")->required()->check(CLI::ExistingFile);
  negatives->add_option("--lexicon", neg_args.lexicon, "Lexicon JSON")->required()->check(CLI::ExistingFile);
  negatives->add_option("--out", neg_args.out, "Output negatives JSONL")->required();
  negatives->add_option("--n", neg_args.n, "Negatives per item")->check(CLI::PositiveNumber)->capture_default_str();
  negatives->add_option("--seed", neg_args.seed, "Seed")->capture_default_str();

  BuildArgs build_args;
  auto* build = app.add_subcommand("build-store", "Assemble a store from records JSONL and raw f32 vectors");
  build->add_option("--records", build_args.records, "records.jsonl with id and caption")->required()->check(CLI::ExistingFile);
  build->add_option("--images", build_args.images, "Little-endian f32 image vectors")->required()->check(CLI::ExistingFile);
  build->add_option("--texts", build_args.texts, "Little-endian f32 text vectors")->required()->check(CLI::ExistingFile);
  build->add_option("--dim", build_args.dim, "Embedding dimension")->required()->check(CLI::PositiveNumber);
  build->add_option("--out", build_args.out, "Output store directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    const auto selected = app.get_subcommands();
    std::cerr << (selected.empty() ? app.help() : selected.front()->help());
    return 2;
  }

  try {
    if (*evaluate) return cmd_evaluate(eval_args);
    if (*dispersion) return cmd_dispersion(disp_args);
    if (*synth) return cmd_synth(synth_args);
    if (*negatives) return cmd_negatives(neg_args);
    if (*build) return cmd_build_store(build_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
