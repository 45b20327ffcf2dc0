#include "fxptrain/trace.hpp"

#include <json.hpp>

#include "fxptrain/errors.hpp"

namespace fxptrain {

using ordered_json = nlohmann::ordered_json;

std::string to_json_line(const TraceRecord& rec) {
  ordered_json j;
  j["schema"] = rec.schema;
  j["iter"] = rec.iter;
  j["layer"] = rec.layer;
  auto put = [&j](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
  };
  put("gamma", rec.gamma);
  put("g_max", rec.g_max);
  put("r_out", rec.r_out);
  put("t_alpha", rec.t_alpha);
  put("e_entire", rec.e_entire);
  put("e_large", rec.e_large);
  put("r_in", rec.r_in);
  put("ulg", rec.ulg);
  put("loss", rec.loss);
  put("acc", rec.acc);
  return j.dump();
}

TraceRecord from_json_line(const std::string& line, const std::string& path,
                           std::int64_t line_no) {
  const std::string where = path + ":" + std::to_string(line_no);
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(where + ": bad JSON: " + e.what());
  }
  if (!j.is_object()) throw TraceError(where + ": row is not an object");

  TraceRecord rec;
  try {
    rec.schema = j.at("schema").get<int>();
    if (rec.schema != kTraceSchema)
      throw TraceError(where + ": unknown schema version " +
                       std::to_string(rec.schema));
    rec.iter = j.at("iter").get<std::int64_t>();
    rec.layer = j.at("layer").get<std::string>();
    auto get = [&](const char* key, std::optional<double>& v) {
      if (j.contains(key)) v = j.at(key).get<double>();
    };
    get("gamma", rec.gamma);
    get("g_max", rec.g_max);
    get("r_out", rec.r_out);
    get("t_alpha", rec.t_alpha);
    get("e_entire", rec.e_entire);
    get("e_large", rec.e_large);
    get("r_in", rec.r_in);
    get("ulg", rec.ulg);
    get("loss", rec.loss);
    get("acc", rec.acc);
  } catch (const nlohmann::json::exception& e) {
    throw TraceError(where + ": " + e.what());
  }
  return rec;
}

TraceWriter::TraceWriter(const std::string& path) : path_(path) {
  out_.open(path, std::ios::app);
  if (!out_) throw TraceError("cannot open trace file " + path);
}

void TraceWriter::write(const TraceRecord& rec) {
  out_ << to_json_line(rec) << "\n";
  if (!out_) throw TraceError("write failed on " + path_);
}

void TraceWriter::flush() { out_.flush(); }

std::vector<TraceRecord> read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw TraceError("cannot open trace file " + path);
  std::vector<TraceRecord> rows;
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    rows.push_back(from_json_line(line, path, line_no));
  }
  if (rows.empty()) throw TraceError(path + ": empty trace");
  return rows;
}

}  // namespace fxptrain
