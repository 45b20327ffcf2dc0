#include "fxptrain/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "fxptrain/errors.hpp"

namespace fxptrain {

namespace fs = std::filesystem;

namespace {

constexpr const char* kPalette[10] = {
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

constexpr double kW = 1000, kH = 520;
constexpr double kPlotX0 = 70, kPlotX1 = 780, kPlotY0 = 50, kPlotY1 = 460;

std::string esc(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

std::string coord(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double norm = raw / mag;
  const double step = norm < 1.5 ? 1.0 : norm < 3.5 ? 2.0 : norm < 7.5 ? 5.0 : 10.0;
  return step * mag;
}

struct Range {
  double lo = 0.0, hi = 1.0;
};

Range data_range(const std::vector<Series>& series, bool use_x) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const Series& s : series) {
    const std::vector<double>& v = use_x ? s.x : s.y;
    const std::vector<double>& other = use_x ? s.y : s.x;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i]) || !std::isfinite(other[i])) continue;
      lo = std::min(lo, v[i]);
      hi = std::max(hi, v[i]);
    }
  }
  if (!(lo <= hi)) return {0.0, 1.0};
  if (lo == hi) return {lo - 1.0, hi + 1.0};
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

}  // namespace

std::string render_line_chart(const std::string& title, const std::string& xlabel,
                              const std::string& ylabel,
                              const std::vector<Series>& series) {
  if (series.empty()) throw PlotError("no series to plot: " + title);
  bool any_point = false;
  for (const Series& s : series) {
    if (s.x.size() != s.y.size())
      throw PlotError("series '" + s.label + "' has mismatched x/y lengths");
    for (std::size_t i = 0; i < s.x.size(); ++i)
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) any_point = true;
  }
  if (!any_point) throw PlotError("series empty: " + title);

  const Range xr = data_range(series, true);
  const Range yr = data_range(series, false);
  auto sx = [&](double v) {
    return kPlotX0 + (v - xr.lo) / (xr.hi - xr.lo) * (kPlotX1 - kPlotX0);
  };
  auto sy = [&](double v) {
    return kPlotY1 - (v - yr.lo) / (yr.hi - yr.lo) * (kPlotY1 - kPlotY0);
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\""
      << kH << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << (kPlotX0 + kPlotX1) / 2 << "\" y=\"28\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"16\">"
      << esc(title) << "</text>\n";

  // Axes and ticks.
  out << "<line x1=\"" << kPlotX0 << "\" y1=\"" << kPlotY1 << "\" x2=\"" << kPlotX1
      << "\" y2=\"" << kPlotY1 << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kPlotX0 << "\" y1=\"" << kPlotY0 << "\" x2=\"" << kPlotX0
      << "\" y2=\"" << kPlotY1 << "\" stroke=\"black\"/>\n";

  const double xstep = nice_step(xr.hi - xr.lo);
  for (double t = std::ceil(xr.lo / xstep) * xstep; t <= xr.hi + 1e-9 * xstep;
       t += xstep) {
    const double px = sx(t);
    out << "<line x1=\"" << coord(px) << "\" y1=\"" << kPlotY1 << "\" x2=\"" << coord(px)
        << "\" y2=\"" << kPlotY1 + 5 << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << coord(px) << "\" y=\"" << kPlotY1 + 20
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
        << num(t) << "</text>\n";
  }
  const double ystep = nice_step(yr.hi - yr.lo);
  for (double t = std::ceil(yr.lo / ystep) * ystep; t <= yr.hi + 1e-9 * ystep;
       t += ystep) {
    const double py = sy(t);
    out << "<line x1=\"" << kPlotX0 - 5 << "\" y1=\"" << coord(py) << "\" x2=\"" << kPlotX0
        << "\" y2=\"" << coord(py) << "\" stroke=\"black\"/>\n";
    out << "<line x1=\"" << kPlotX0 << "\" y1=\"" << coord(py) << "\" x2=\"" << kPlotX1
        << "\" y2=\"" << coord(py) << "\" stroke=\"#dddddd\"/>\n";
    out << "<text x=\"" << kPlotX0 - 8 << "\" y=\"" << coord(py + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(t)
        << "</text>\n";
  }
  out << "<text x=\"" << (kPlotX0 + kPlotX1) / 2 << "\" y=\"" << kH - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << esc(xlabel) << "</text>\n";
  out << "<text x=\"18\" y=\"" << (kPlotY0 + kPlotY1) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
         "transform=\"rotate(-90 18 "
      << (kPlotY0 + kPlotY1) / 2 << ")\">" << esc(ylabel) << "</text>\n";

  // Lines, broken at non-finite points.
  for (std::size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % 10];
    std::vector<std::pair<double, double>> seg;
    auto flush = [&]() {
      if (seg.size() >= 2) {
        out << "<polyline fill=\"none\" stroke=\"" << color
            << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t i = 0; i < seg.size(); ++i) {
          if (i) out << " ";
          out << coord(seg[i].first) << "," << coord(seg[i].second);
        }
        out << "\"/>\n";
      } else if (seg.size() == 1) {
        out << "<circle cx=\"" << coord(seg[0].first) << "\" cy=\"" << coord(seg[0].second)
            << "\" r=\"2\" fill=\"" << color << "\"/>\n";
      }
      seg.clear();
    };
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i]))
        seg.emplace_back(sx(s.x[i]), sy(s.y[i]));
      else
        flush();
    }
    flush();
  }

  // Legend (truncated deterministically when oversized).
  const std::size_t max_entries = 24;
  const std::size_t shown = std::min(series.size(), max_entries);
  for (std::size_t si = 0; si < shown; ++si) {
    const double y = 55 + 16.0 * static_cast<double>(si);
    out << "<rect x=\"795\" y=\"" << coord(y) << "\" width=\"12\" height=\"12\" fill=\""
        << kPalette[si % 10] << "\"/>\n";
    out << "<text x=\"812\" y=\"" << coord(y + 10)
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << esc(series[si].label)
        << "</text>\n";
  }
  if (series.size() > max_entries) {
    const double y = 55 + 16.0 * static_cast<double>(max_entries);
    out << "<text x=\"812\" y=\"" << coord(y + 10)
        << "\" font-family=\"sans-serif\" font-size=\"11\">(+"
        << (series.size() - max_entries) << " more)</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

namespace {

struct Csv {
  std::vector<std::string> cols;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name) const {
    for (std::size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<int>(i);
    return -1;
  }
};

Csv read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw PlotError("cannot open " + path.string());
  Csv csv;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (header) {
      csv.cols = std::move(cells);
      header = false;
    } else {
      csv.rows.push_back(std::move(cells));
    }
  }
  return csv;
}

double cell_num(const std::vector<std::string>& row, int col) {
  if (col < 0 || col >= static_cast<int>(row.size()) ||
      row[static_cast<std::size_t>(col)].empty())
    return std::nan("");
  return std::stod(row[static_cast<std::size_t>(col)]);
}

Series csv_series(const Csv& csv, const std::string& xcol, const std::string& ycol,
                  const std::string& label) {
  Series s;
  s.label = label;
  const int xi = csv.col(xcol), yi = csv.col(ycol);
  for (const auto& row : csv.rows) {
    const double x = cell_num(row, xi);
    const double y = cell_num(row, yi);
    if (!std::isfinite(y)) continue;  // sparse column: keep the line connected
    s.x.push_back(x);
    s.y.push_back(y);
  }
  return s;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw PlotError("cannot write " + path.string());
  out << content;
}

}  // namespace

void plot_analysis_dir(const std::string& analysis_dir, const std::string& out_dir) {
  const fs::path adir(analysis_dir);
  if (!fs::exists(adir)) throw PlotError("analysis directory missing: " + analysis_dir);

  // (run prefix, directory) pairs; single-run layout has loss.csv at the top.
  std::vector<std::pair<std::string, fs::path>> runs;
  if (fs::exists(adir / "loss.csv")) {
    runs.emplace_back("", adir);
  } else {
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(adir))
      if (e.is_directory() && fs::exists(e.path() / "loss.csv")) subs.push_back(e.path());
    std::sort(subs.begin(), subs.end());
    for (const fs::path& p : subs) runs.emplace_back(p.filename().string() + "/", p);
  }
  if (runs.empty()) throw PlotError("missing series: no loss.csv under " + analysis_dir);

  std::vector<Series> loss_series, gamma_series, e_large_series;
  for (const auto& [prefix, dir] : runs) {
    const Csv loss = read_csv(dir / "loss.csv");
    loss_series.push_back(csv_series(loss, "iter", "loss",
                                     prefix.empty() ? "loss" : prefix + "loss"));

    std::vector<fs::path> layer_files;
    for (const auto& e : fs::directory_iterator(dir)) {
      const std::string name = e.path().filename().string();
      if (name.rfind("series_", 0) == 0 && e.path().extension() == ".csv")
        layer_files.push_back(e.path());
    }
    std::sort(layer_files.begin(), layer_files.end());
    for (const fs::path& f : layer_files) {
      const std::string layer =
          f.filename().string().substr(7, f.filename().string().size() - 7 - 4);
      const Csv csv = read_csv(f);
      Series g = csv_series(csv, "iter", "gamma", prefix + layer);
      if (!g.x.empty()) gamma_series.push_back(std::move(g));
      Series el = csv_series(csv, "iter", "e_large", prefix + layer);
      if (!el.x.empty()) e_large_series.push_back(std::move(el));
    }
  }

  if (gamma_series.empty())
    throw PlotError("missing series: gamma (no quantized-layer rows)");
  if (e_large_series.empty())
    throw PlotError("missing series: e_large (no full-metric rows)");

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "loss.svg",
             render_line_chart("training loss", "iteration", "loss", loss_series));
  write_file(fs::path(out_dir) / "gamma.svg",
             render_line_chart("clipping factor", "iteration", "gamma", gamma_series));
  write_file(fs::path(out_dir) / "e_large.svg",
             render_line_chart("large-gradient quantization error", "iteration",
                               "E(G_L)", e_large_series));
}

}  // namespace fxptrain
