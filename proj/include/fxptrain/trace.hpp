#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

namespace fxptrain {

inline constexpr int kTraceSchema = 1;

// One trace.jsonl row. Layer rows carry gamma/g_max/r_out every logged
// iteration and the expensive error metrics at the full-metrics cadence;
// loss rows (layer == "loss") carry loss and batch accuracy; eval rows
// (layer == "eval") carry test accuracy.
struct TraceRecord {
  int schema = kTraceSchema;
  std::int64_t iter = 0;
  std::string layer;
  std::optional<double> gamma, g_max, r_out;
  std::optional<double> t_alpha, e_entire, e_large, r_in, ulg;
  std::optional<double> loss, acc;

  bool operator==(const TraceRecord&) const = default;
};

std::string to_json_line(const TraceRecord& rec);
// line_no is 1-based and only used for error messages.
TraceRecord from_json_line(const std::string& line, const std::string& path,
                           std::int64_t line_no);

class TraceWriter {
 public:
  explicit TraceWriter(const std::string& path);
  void write(const TraceRecord& rec);
  void flush();

 private:
  std::ofstream out_;
  std::string path_;
};

// Whole-file read; throws TraceError (with the offending line number) on
// parse failures or unknown schema versions. An empty trace is an error.
std::vector<TraceRecord> read_trace(const std::string& path);

}  // namespace fxptrain
