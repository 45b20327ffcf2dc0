#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fxptrain/trace.hpp"

namespace fxptrain {

// Parsed trace of one run, grouped for analysis.
struct RunSeries {
  std::string name;  // basename of the run directory
  std::map<std::string, std::vector<TraceRecord>> layers;
  std::vector<TraceRecord> loss_rows;
  std::vector<TraceRecord> eval_rows;
};

RunSeries load_run_series(const std::string& run_dir);

struct AnalyzeResult {
  std::vector<std::string> runs;
  std::int64_t bound_violations = 0;  // full rows with e_large > ulg
};

// Writes per-layer CSV series, loss/eval CSVs, report.json, and (for two or
// more runs) deltas.csv comparing each run's mean E(G_L) per layer against
// the first run. Single-run output lands directly in out_dir; multi-run
// output goes to out_dir/<run_name>/ per run.
AnalyzeResult analyze_runs(const std::vector<std::string>& run_dirs,
                           const std::string& out_dir);

}  // namespace fxptrain
