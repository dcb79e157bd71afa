#pragma once

// Embedding store: a directory holding
//   manifest.json   {"version":1,"dim":D,"count":N,"normalized":bool,"dtype":"f32le"}
//   images.f32      N x D little-endian f32, row-major, no header
//   texts.f32       same layout as images.f32
//   records.jsonl   line i = {"id": str, "caption": str}, aligned with row i
// plus the line-delimited evaluation item format consumed by the pipeline.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "memsel/error.hpp"
#include "memsel/io.hpp"
#include "memsel/vec.hpp"

namespace memsel {

inline constexpr int kStoreVersion = 1;
inline constexpr double kNormTolerance = 1e-4;

struct StoreManifest {
  int version = kStoreVersion;
  std::size_t dim = 0;
  std::size_t count = 0;
  bool normalized = true;
  std::string dtype = "f32le";
};

struct RetrievalRecord {
  std::string id;
  Embedding image_embedding;
  Embedding text_embedding;
  std::string caption;
};

enum class Modality { Image, Text };

// Immutable, column-oriented retrieval memory. Row i of both embedding
// matrices and caption i always describe the same image-caption pair.
class RetrievalSet {
 public:
  // Validates every row; rows are L2-normalized unless `normalized` already
  // holds, in which case norms are only checked against kNormTolerance.
  static RetrievalSet from_columns(std::size_t dim, std::vector<std::string> ids,
                                   std::vector<std::string> captions, std::vector<float> images,
                                   std::vector<float> texts, bool normalized) {
    if (dim == 0) throw Error(ErrorCode::DimMismatch, "store dim must be positive");
    const std::size_t n = ids.size();
    if (captions.size() != n)
      throw Error(ErrorCode::CountMismatch, std::to_string(captions.size()) + " captions for " +
                                                std::to_string(n) + " ids");
    if (images.size() != n * dim || texts.size() != n * dim)
      throw Error(ErrorCode::DimMismatch, "embedding payload does not hold " + std::to_string(n) +
                                              " rows of dim " + std::to_string(dim));
    for (std::size_t i = 0; i < n; ++i)
      if (captions[i].empty()) throw Error(ErrorCode::ParseError, "record " + std::to_string(i) + " has an empty caption");

    RetrievalSet set;
    set.manifest_ = StoreManifest{kStoreVersion, dim, n, true, "f32le"};
    set.ids_ = std::move(ids);
    set.captions_ = std::move(captions);
    set.images_ = std::move(images);
    set.texts_ = std::move(texts);
    set.prepare_column(set.images_, normalized, "images");
    set.prepare_column(set.texts_, normalized, "texts");
    return set;
  }

  const StoreManifest& manifest() const noexcept { return manifest_; }
  std::size_t size() const noexcept { return manifest_.count; }
  bool empty() const noexcept { return manifest_.count == 0; }
  std::size_t dim() const noexcept { return manifest_.dim; }

  std::span<const float> image(std::size_t i) const { return row(images_, i); }
  std::span<const float> text(std::size_t i) const { return row(texts_, i); }
  std::span<const float> embedding(Modality m, std::size_t i) const {
    return m == Modality::Image ? image(i) : text(i);
  }
  // Cached L2 norm of a row, computed with the same accumulation as l2_norm.
  double norm(Modality m, std::size_t i) const {
    return m == Modality::Image ? image_norms_[i] : text_norms_[i];
  }
  const std::string& id(std::size_t i) const { return ids_.at(i); }
  const std::string& caption(std::size_t i) const { return captions_.at(i); }

  RetrievalRecord record(std::size_t i) const {
    auto img = image(i);
    auto txt = text(i);
    return {id(i), Embedding(img.begin(), img.end()), Embedding(txt.begin(), txt.end()), caption(i)};
  }

  std::span<const float> image_payload() const noexcept { return images_; }
  std::span<const float> text_payload() const noexcept { return texts_; }

 private:
  RetrievalSet() = default;

  std::span<const float> row(const std::vector<float>& column, std::size_t i) const {
    if (i >= manifest_.count) throw std::out_of_range("record index " + std::to_string(i));
    return std::span<const float>(column).subspan(i * manifest_.dim, manifest_.dim);
  }

  void prepare_column(std::vector<float>& column, bool normalized, const char* name) {
    auto& norms = (&column == &images_) ? image_norms_ : text_norms_;
    norms.resize(manifest_.count);
    const std::size_t d = manifest_.dim;
    for (std::size_t i = 0; i < manifest_.count; ++i) {
      std::span<float> r(column.data() + i * d, d);
      if (!all_finite(r))
        throw Error(ErrorCode::NonFiniteValue, std::string(name) + " row " + std::to_string(i));
      double n = l2_norm(r);
      if (n == 0.0) throw Error(ErrorCode::ZeroVector, std::string(name) + " row " + std::to_string(i));
      if (normalized) {
        if (std::abs(n - 1.0) > kNormTolerance)
          throw Error(ErrorCode::NormOutOfRange, std::string(name) + " row " + std::to_string(i) +
                                                     " has norm " + std::to_string(n) +
                                                     " but the manifest declares normalized=true");
      } else {
        for (auto& v : r) v = static_cast<float>(static_cast<double>(v) / n);
        n = l2_norm(r);
      }
      norms[i] = n;
    }
  }

  StoreManifest manifest_;
  std::vector<std::string> ids_;
  std::vector<std::string> captions_;
  std::vector<float> images_;
  std::vector<float> texts_;
  std::vector<double> image_norms_;
  std::vector<double> text_norms_;
};

namespace detail {

inline std::filesystem::path store_dir(const std::filesystem::path& manifest_path) {
  if (std::filesystem::is_directory(manifest_path)) return manifest_path;
  return manifest_path.parent_path();
}

inline std::filesystem::path manifest_file(const std::filesystem::path& p) {
  return std::filesystem::is_directory(p) ? p / "manifest.json" : p;
}

inline StoreManifest parse_manifest(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  io::json j;
  try {
    j = io::json::parse(io::read_text(path));
  } catch (const io::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  StoreManifest m;
  try {
    m.version = j.at("version").get<int>();
    if (m.version != kStoreVersion)
      throw Error(ErrorCode::UnsupportedVersion, "store version " + std::to_string(m.version));
    const auto dim = j.at("dim").get<long long>();
    const auto count = j.at("count").get<long long>();
    if (dim <= 0 || count < 0) throw Error(ErrorCode::ParseError, path.string() + ": dim must be > 0, count >= 0");
    m.dim = static_cast<std::size_t>(dim);
    m.count = static_cast<std::size_t>(count);
    m.normalized = j.at("normalized").get<bool>();
    m.dtype = j.value("dtype", std::string("f32le"));
  } catch (const io::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  if (m.dtype != "f32le") throw Error(ErrorCode::UnsupportedVersion, "dtype " + m.dtype);
  return m;
}

inline std::vector<float> read_matrix(const std::filesystem::path& path, const StoreManifest& m) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  const std::string bytes = io::read_text(path);
  if (bytes.size() != m.count * m.dim * 4)
    throw Error(ErrorCode::DimMismatch, path.string() + " holds " + std::to_string(bytes.size()) +
                                            " bytes, expected " + std::to_string(m.count) + " x " +
                                            std::to_string(m.dim) + " x 4");
  return io::decode_f32le(bytes);
}

}  // namespace detail

/// Loads a store from its manifest path (or the directory containing it).
inline RetrievalSet load_retrieval_set(const std::filesystem::path& manifest_path) {
  const auto manifest = detail::manifest_file(manifest_path);
  const auto dir = detail::store_dir(manifest_path);
  const StoreManifest m = detail::parse_manifest(manifest);
  auto images = detail::read_matrix(dir / "images.f32", m);
  auto texts = detail::read_matrix(dir / "texts.f32", m);

  const auto records_path = dir / "records.jsonl";
  if (!std::filesystem::exists(records_path)) throw Error(ErrorCode::MissingFile, records_path.string());
  std::vector<std::string> ids;
  std::vector<std::string> captions;
  io::for_each_line(io::read_text(records_path), [&](std::size_t line_no, std::string_view line) {
    auto j = io::parse_json_line(line, line_no, records_path);
    try {
      ids.push_back(j.at("id").get<std::string>());
      captions.push_back(j.at("caption").get<std::string>());
    } catch (const io::json::exception& e) {
      throw Error(ErrorCode::ParseError, records_path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  });
  if (ids.size() != m.count)
    throw Error(ErrorCode::CountMismatch, records_path.string() + " has " + std::to_string(ids.size()) +
                                              " records, manifest count is " + std::to_string(m.count));
  return RetrievalSet::from_columns(m.dim, std::move(ids), std::move(captions), std::move(images),
                                    std::move(texts), m.normalized);
}

/// Writes `set` so that load_retrieval_set reproduces its payload bit for bit.
inline void save_retrieval_set(const RetrievalSet& set, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  io::json manifest = {{"version", kStoreVersion},
                       {"dim", set.dim()},
                       {"count", set.size()},
                       {"normalized", true},
                       {"dtype", "f32le"}};
  io::write_text(dir / "manifest.json", manifest.dump() + "\n");
  io::write_text(dir / "images.f32", io::encode_f32le(set.image_payload()));
  io::write_text(dir / "texts.f32", io::encode_f32le(set.text_payload()));
  std::string records;
  for (std::size_t i = 0; i < set.size(); ++i) {
    io::json r = {{"id", set.id(i)}, {"caption", set.caption(i)}};
    records += r.dump() + "\n";
  }
  io::write_text(dir / "records.jsonl", records);
}

// ---------------------------------------------------------------------------
// Evaluation items

struct Candidate {
  std::string text;
  Embedding embedding;
};

struct EvaluationItem {
  std::string id;
  std::optional<Embedding> image_embedding;
  std::string prediction_text;
  Embedding prediction_embedding;
  std::vector<std::string> references;  // captioning mode
  std::optional<bool> correct;          // classification / ITM mode
  std::vector<Candidate> candidates;    // label set or pre-embedded hard negatives

  bool is_captioning() const noexcept { return !references.empty(); }
};

namespace detail {

inline Embedding parse_vector(const io::json& j, std::size_t dim, const std::string& where) {
  if (!j.is_array()) throw Error(ErrorCode::ParseError, where + ": expected an array of numbers");
  if (j.size() != dim)
    throw Error(ErrorCode::DimMismatch, where + ": length " + std::to_string(j.size()) + ", store dim " + std::to_string(dim));
  Embedding v;
  v.reserve(dim);
  for (const auto& x : j) {
    if (!x.is_number()) throw Error(ErrorCode::ParseError, where + ": non-numeric component");
    v.push_back(x.get<float>());
  }
  if (!all_finite(v)) throw Error(ErrorCode::NonFiniteValue, where);
  return v;
}

}  // namespace detail

/// Checks the loss-source and candidate invariants of a single item.
inline void validate_item(const EvaluationItem& item, std::size_t dim) {
  const bool has_refs = !item.references.empty();
  if (has_refs == item.correct.has_value())
    throw Error(ErrorCode::AmbiguousLoss, "item " + item.id + " needs exactly one of references or correct");
  auto check_dim = [&](const Embedding& e, const char* what) {
    if (e.size() != dim)
      throw Error(ErrorCode::DimMismatch, "item " + item.id + " " + what + " has dim " + std::to_string(e.size()));
  };
  check_dim(item.prediction_embedding, "prediction");
  if (item.image_embedding) check_dim(*item.image_embedding, "image");
  for (const auto& c : item.candidates) check_dim(c.embedding, "candidate");
  // Label-set items must have predicted one of their labels. Captioning items
  // carry hard negatives instead, which never include the prediction.
  if (item.correct && !item.candidates.empty()) {
    bool found = false;
    for (const auto& c : item.candidates) found = found || c.text == item.prediction_text;
    if (!found) throw Error(ErrorCode::InvalidItem, "item " + item.id + ": prediction_text is not among its candidates");
  }
}

inline EvaluationItem parse_evaluation_item(const io::json& j, std::size_t dim, const std::string& where) {
  EvaluationItem item;
  try {
    item.id = j.at("id").get<std::string>();
    if (j.contains("image") && !j.at("image").is_null())
      item.image_embedding = detail::parse_vector(j.at("image"), dim, where + " image");
    item.prediction_text = j.at("prediction_text").get<std::string>();
    item.prediction_embedding = detail::parse_vector(j.at("prediction"), dim, where + " prediction");
    if (j.contains("references")) item.references = j.at("references").get<std::vector<std::string>>();
    if (j.contains("correct") && !j.at("correct").is_null()) item.correct = j.at("correct").get<bool>();
    if (j.contains("candidates")) {
      for (const auto& c : j.at("candidates"))
        item.candidates.push_back({c.at("text").get<std::string>(),
                                   detail::parse_vector(c.at("embedding"), dim, where + " candidate")});
    }
  } catch (const io::json::exception& e) {
    throw Error(ErrorCode::ParseError, where + ": " + e.what());
  }
  try {
    validate_item(item, dim);
  } catch (const Error& e) {
    throw Error(e.code(), where + ": " + e.message());
  }
  return item;
}

inline io::json item_to_json(const EvaluationItem& item) {
  io::json j;
  j["id"] = item.id;
  j["image"] = item.image_embedding ? io::json(*item.image_embedding) : io::json(nullptr);
  j["prediction_text"] = item.prediction_text;
  j["prediction"] = item.prediction_embedding;
  if (!item.references.empty()) j["references"] = item.references;
  if (item.correct) j["correct"] = *item.correct;
  if (!item.candidates.empty()) {
    io::json cands = io::json::array();
    for (const auto& c : item.candidates) cands.push_back({{"text", c.text}, {"embedding", c.embedding}});
    j["candidates"] = std::move(cands);
  }
  return j;
}

/// Items come back in file order; ParseError messages carry the line number.
inline std::vector<EvaluationItem> load_evaluation_items(const std::filesystem::path& path, std::size_t dim) {
  if (!std::filesystem::exists(path)) throw Error(ErrorCode::MissingFile, path.string());
  std::vector<EvaluationItem> items;
  io::for_each_line(io::read_text(path), [&](std::size_t line_no, std::string_view line) {
    auto j = io::parse_json_line(line, line_no, path);
    items.push_back(parse_evaluation_item(j, dim, path.string() + ":" + std::to_string(line_no)));
  });
  return items;
}

inline void save_evaluation_items(const std::vector<EvaluationItem>& items, const std::filesystem::path& path) {
  std::string out;
  for (const auto& item : items) out += item_to_json(item).dump() + "\n";
  io::write_text(path, out);
}

}  // namespace memsel
