#include "fxptrain/analyze.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fxptrain/errors.hpp"

namespace fxptrain {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

void write_layer_csv(const fs::path& path, const std::vector<TraceRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path.string());
  out << "iter,gamma,g_max,r_out,t_alpha,e_entire,e_large,r_in,ulg\n";
  for (const TraceRecord& r : rows) {
    out << r.iter << "," << opt_fmt(r.gamma) << "," << opt_fmt(r.g_max) << ","
        << opt_fmt(r.r_out) << "," << opt_fmt(r.t_alpha) << "," << opt_fmt(r.e_entire)
        << "," << opt_fmt(r.e_large) << "," << opt_fmt(r.r_in) << "," << opt_fmt(r.ulg)
        << "\n";
  }
}

void write_loss_csv(const fs::path& path, const std::vector<TraceRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path.string());
  out << "iter,loss,acc\n";
  for (const TraceRecord& r : rows)
    out << r.iter << "," << opt_fmt(r.loss) << "," << opt_fmt(r.acc) << "\n";
}

void write_eval_csv(const fs::path& path, const std::vector<TraceRecord>& rows) {
  std::ofstream out(path);
  if (!out) throw TraceError("cannot write " + path.string());
  out << "iter,acc\n";
  for (const TraceRecord& r : rows) out << r.iter << "," << opt_fmt(r.acc) << "\n";
}

double mean_e_large(const std::vector<TraceRecord>& rows) {
  double sum = 0.0;
  std::int64_t n = 0;
  for (const TraceRecord& r : rows)
    if (r.e_large) {
      sum += *r.e_large;
      ++n;
    }
  return n == 0 ? std::nan("") : sum / static_cast<double>(n);
}

void emit_run(const RunSeries& run, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [label, rows] : run.layers)
    write_layer_csv(dir / ("series_" + label + ".csv"), rows);
  write_loss_csv(dir / "loss.csv", run.loss_rows);
  write_eval_csv(dir / "eval.csv", run.eval_rows);
}

}  // namespace

RunSeries load_run_series(const std::string& run_dir) {
  const fs::path trace_path = fs::path(run_dir) / "trace.jsonl";
  RunSeries run;
  run.name = fs::path(run_dir).filename().string();
  if (run.name.empty()) run.name = fs::path(run_dir).parent_path().filename().string();
  for (TraceRecord& rec : read_trace(trace_path.string())) {
    if (rec.layer == "loss")
      run.loss_rows.push_back(std::move(rec));
    else if (rec.layer == "eval")
      run.eval_rows.push_back(std::move(rec));
    else
      run.layers[rec.layer].push_back(std::move(rec));
  }
  return run;
}

AnalyzeResult analyze_runs(const std::vector<std::string>& run_dirs,
                           const std::string& out_dir) {
  if (run_dirs.empty()) throw TraceError("no run directories given");
  fs::create_directories(out_dir);

  std::vector<RunSeries> runs;
  runs.reserve(run_dirs.size());
  for (const std::string& dir : run_dirs) runs.push_back(load_run_series(dir));

  AnalyzeResult result;
  for (const RunSeries& run : runs) {
    result.runs.push_back(run.name);
    for (const auto& [label, rows] : run.layers)
      for (const TraceRecord& r : rows)
        if (r.e_large && r.ulg && *r.e_large > *r.ulg + 1e-12) ++result.bound_violations;
  }

  if (runs.size() == 1) {
    emit_run(runs[0], out_dir);
  } else {
    for (const RunSeries& run : runs) emit_run(run, fs::path(out_dir) / run.name);

    std::ofstream deltas(fs::path(out_dir) / "deltas.csv");
    deltas << "layer,run,mean_e_large,base_mean_e_large,delta,sign\n";
    const RunSeries& base = runs[0];
    for (std::size_t ri = 1; ri < runs.size(); ++ri) {
      for (const auto& [label, rows] : runs[ri].layers) {
        const auto it = base.layers.find(label);
        if (it == base.layers.end()) continue;
        const double a = mean_e_large(it->second);
        const double b = mean_e_large(rows);
        if (std::isnan(a) || std::isnan(b)) continue;
        const double d = b - a;
        deltas << label << "," << runs[ri].name << "," << fmt(b) << "," << fmt(a) << ","
               << fmt(d) << "," << (d > 0 ? "+" : d < 0 ? "-" : "0") << "\n";
      }
    }
  }

  nlohmann::ordered_json report;
  report["runs"] = result.runs;
  report["bound_violations"] = result.bound_violations;
  std::ofstream rep(fs::path(out_dir) / "report.json");
  rep << report.dump(2) << "\n";
  return result;
}

}  // namespace fxptrain
