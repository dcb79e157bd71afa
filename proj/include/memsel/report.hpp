#pragma once

// Plot-ready CSV and JSON artifacts for a pipeline run. Numbers use the
// shortest round-trip representation so output is byte-stable.

#include <charconv>
#include <filesystem>
#include <string>
#include <vector>

#include "memsel/eval.hpp"
#include "memsel/io.hpp"

namespace memsel {

inline std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// id,score,kind,loss,excluded -- score and loss are empty for excluded items.
inline std::string items_csv(const PipelineResult& result) {
  std::string out = "id,score,kind,loss,excluded\n";
  for (const auto& o : result.outcomes) {
    out += o.record.item_id + ",";
    if (!o.excluded()) out += format_number(o.record.score);
    out += "," + std::string(to_string(o.record.kind)) + ",";
    if (o.loss) out += std::to_string(*o.loss);
    out += o.excluded() ? ",1\n" : ",0\n";
  }
  return out;
}

inline std::string curve_csv(const RiskCoverageCurve& curve) {
  std::string out = "coverage,risk,generalized_risk,threshold\n";
  for (const auto& p : curve.points)
    out += format_number(p.coverage) + "," + format_number(p.risk) + "," + format_number(p.generalized_risk) + "," +
           format_number(p.threshold) + "\n";
  return out;
}

inline io::json summary_json(const PipelineResult& result, const io::json& config) {
  return {{"aurc", result.curve.aurc},
          {"augrc", result.curve.augrc},
          {"n", result.curve.n_items},
          {"excluded", result.excluded},
          {"config", config}};
}

inline std::string dispersion_csv(const std::vector<GroupDispersion>& groups) {
  std::string out = "group,mean,std,count\n";
  for (const auto& g : groups)
    out += g.group + "," + format_number(g.mean) + "," + format_number(g.std) + "," + std::to_string(g.count) + "\n";
  return out;
}

/// Writes items.csv, curve.csv and summary.json into `dir`.
inline void write_run_artifacts(const PipelineResult& result, const io::json& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot create " + dir.string() + ": " + ec.message());
  io::write_text(dir / "items.csv", items_csv(result));
  io::write_text(dir / "curve.csv", curve_csv(result.curve));
  io::write_text(dir / "summary.json", summary_json(result, config).dump(2) + "\n");
}

}  // namespace memsel
