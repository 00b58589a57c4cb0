#include "macflow/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace macflow {

namespace {

constexpr double kWidth = 640, kHeight = 420;
constexpr double kLeft = 70, kRight = 20, kTop = 40, kBottom = 55;

const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

std::string escape(const std::string& s) {
  std::string out;
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
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

struct Range {
  double lo = 0.0, hi = 1.0;
  void widen() {
    if (!(hi > lo)) {
      const double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

Range range_of(const std::vector<Series>& series, bool use_x) {
  Range r{INFINITY, -INFINITY};
  for (const Series& s : series) {
    for (double v : use_x ? s.x : s.y) {
      if (!std::isfinite(v)) continue;
      r.lo = std::min(r.lo, v);
      r.hi = std::max(r.hi, v);
    }
  }
  if (!std::isfinite(r.lo)) r = {0.0, 1.0};
  r.widen();
  return r;
}

class Canvas {
 public:
  Canvas(const std::string& title, const std::string& xlabel, const std::string& ylabel, Range x,
         Range y)
      : x_(x), y_(y) {
    out_ << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
         << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << kWidth
         << "\" height=\"" << kHeight << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n"
         << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
         << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" "
            "font-size=\"15\">"
         << escape(title) << "</text>\n";
    const double x0 = kLeft, x1 = kWidth - kRight, y0 = kHeight - kBottom, y1 = kTop;
    out_ << "<rect x=\"" << x0 << "\" y=\"" << y1 << "\" width=\"" << x1 - x0 << "\" height=\""
         << y0 - y1 << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double fx = x_.lo + (x_.hi - x_.lo) * k / 4.0;
      const double fy = y_.lo + (y_.hi - y_.lo) * k / 4.0;
      out_ << "<text x=\"" << px(fx) << "\" y=\"" << y0 + 16
           << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << num(fx)
           << "</text>\n";
      out_ << "<text x=\"" << x0 - 6 << "\" y=\"" << py(fy) + 4
           << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << num(fy)
           << "</text>\n";
    }
    out_ << "<text x=\"" << (x0 + x1) / 2 << "\" y=\"" << kHeight - 12
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(xlabel)
         << "</text>\n";
    out_ << "<text x=\"16\" y=\"" << (y0 + y1) / 2
         << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" transform=\"rotate(-90 16 "
         << (y0 + y1) / 2 << ")\">" << escape(ylabel) << "</text>\n";
  }

  double px(double x) const {
    return kLeft + (x - x_.lo) / (x_.hi - x_.lo) * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    return kHeight - kBottom - (y - y_.lo) / (y_.hi - y_.lo) * (kHeight - kTop - kBottom);
  }

  void polyline(const Series& s, const char* color, const char* dash = nullptr) {
    std::ostringstream pts;
    std::size_t count = 0;
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      pts << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
      ++count;
    }
    if (count == 1) {
      markers(s, color);
      return;
    }
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.6\""
         << (dash ? std::string(" stroke-dasharray=\"") + dash + "\"" : std::string()) << " points=\""
         << pts.str() << "\"/>\n";
  }

  void markers(const Series& s, const char* color) {
    for (std::size_t i = 0; i < std::min(s.x.size(), s.y.size()); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      out_ << "<circle cx=\"" << px(s.x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.6\" fill=\"" << color
           << "\" fill-opacity=\"0.75\"/>\n";
    }
  }

  void legend(const std::vector<std::string>& names) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      const double y = kTop + 14 + 16 * static_cast<double>(i);
      out_ << "<rect x=\"" << kWidth - kRight - 150 << "\" y=\"" << y - 9
           << "\" width=\"10\" height=\"10\" fill=\"" << kPalette[i % 6] << "\"/>\n"
           << "<text x=\"" << kWidth - kRight - 135 << "\" y=\"" << y
           << "\" font-family=\"sans-serif\" font-size=\"11\">" << escape(names[i]) << "</text>\n";
    }
  }

  std::ostringstream& raw() { return out_; }

  std::string finish() {
    out_ << "</svg>\n";
    return out_.str();
  }

 private:
  Range x_, y_;
  std::ostringstream out_;
};

std::vector<std::string> names_of(const std::vector<Series>& series) {
  std::vector<std::string> n;
  for (const Series& s : series) n.push_back(s.name);
  return n;
}

}  // namespace

std::string svg_line_chart(const std::string& title, const std::string& xlabel,
                           const std::string& ylabel, const std::vector<Series>& series) {
  Canvas c(title, xlabel, ylabel, range_of(series, true), range_of(series, false));
  for (std::size_t i = 0; i < series.size(); ++i) c.polyline(series[i], kPalette[i % 6]);
  c.legend(names_of(series));
  return c.finish();
}

std::string svg_scatter(const std::string& title, const std::string& xlabel,
                        const std::string& ylabel, const std::vector<Series>& series) {
  Canvas c(title, xlabel, ylabel, range_of(series, true), range_of(series, false));
  for (std::size_t i = 0; i < series.size(); ++i) c.markers(series[i], kPalette[i % 6]);
  c.legend(names_of(series));
  return c.finish();
}

std::string svg_scatter_envelope(const std::string& title, const std::string& xlabel,
                                 const std::string& ylabel, const Series& points, double slope) {
  Range xr = range_of({points}, true);
  xr.lo = std::min(xr.lo, 0.0);
  Series line{"L_hat * W2", {xr.lo, xr.hi}, {slope * xr.lo, slope * xr.hi}};
  Range yr = range_of({points, line}, false);
  yr.lo = std::min(yr.lo, 0.0);
  Canvas c(title, xlabel, ylabel, xr, yr);
  c.polyline(line, kPalette[1], "6,4");
  c.markers(points, kPalette[0]);
  c.legend({points.name, line.name});
  return c.finish();
}

std::string svg_heatmap(const std::string& title, const std::vector<std::vector<double>>& cells,
                        const std::vector<std::string>& row_labels,
                        const std::vector<std::string>& col_labels) {
  const std::size_t rows = cells.size(), cols = rows ? cells[0].size() : 0;
  if (rows == 0 || cols == 0) throw std::invalid_argument("svg_heatmap: empty matrix");
  const double size = 300.0, cell_w = size / static_cast<double>(cols), cell_h = size / static_cast<double>(rows);
  const double left = 90, top = 50;
  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << left + size + 40
    << "\" height=\"" << top + size + 50 << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << (left + size / 2) << "\" y=\"26\" text-anchor=\"middle\" font-family=\"sans-serif\" "
       "font-size=\"15\">"
    << escape(title) << "</text>\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double v = std::clamp(cells[r][c], 0.0, 1.0);
      const int shade = static_cast<int>(255.0 * (1.0 - v));
      o << "<rect x=\"" << left + cell_w * c << "\" y=\"" << top + cell_h * r << "\" width=\"" << cell_w
        << "\" height=\"" << cell_h << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#333\"/>\n"
        << "<text x=\"" << left + cell_w * (c + 0.5) << "\" y=\"" << top + cell_h * (r + 0.5) + 5
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\" fill=\""
        << (v > 0.55 ? "white" : "black") << "\">" << num(cells[r][c]) << "</text>\n";
    }
    if (r < row_labels.size()) {
      o << "<text x=\"" << left - 8 << "\" y=\"" << top + cell_h * (r + 0.5) + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\">" << escape(row_labels[r])
        << "</text>\n";
    }
  }
  for (std::size_t c = 0; c < cols && c < col_labels.size(); ++c) {
    o << "<text x=\"" << left + cell_w * (c + 0.5) << "\" y=\"" << top + size + 20
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << escape(col_labels[c])
      << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

std::size_t envelope_violations(const CsvTable& bounds) {
  const std::vector<double> gap = bounds.numbers("value_gap");
  const std::vector<double> rms = bounds.numbers("coupling_rms");
  const std::vector<double> lip = bounds.numbers("L_hat");
  const double slope = lip.empty() ? 0.0 : *std::max_element(lip.begin(), lip.end());
  std::size_t bad = 0;
  for (std::size_t i = 0; i < gap.size(); ++i) bad += gap[i] > slope * rms[i];
  return bad;
}

namespace {

CsvTable read_nonempty(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  if (t.rows.empty()) throw std::runtime_error(path.string() + ": no data rows");
  return t;
}

// Long-format metrics.csv pivoted to one series per metric name.
std::map<std::string, Series> pivot_metrics(const CsvTable& t) {
  const std::size_t cs = t.column("step"), cm = t.column("metric"), cv = t.column("value");
  std::map<std::string, Series> out;
  for (const auto& row : t.rows) {
    if (row.size() <= std::max({cs, cm, cv})) continue;
    Series& s = out[row[cm]];
    s.name = row[cm];
    s.x.push_back(std::stod(row[cs]));
    s.y.push_back(std::stod(row[cv]));
  }
  return out;
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::filesystem::path& run_dir) {
  const std::filesystem::path bounds_path = run_dir / "bounds.csv", metrics_path = run_dir / "metrics.csv";
  const bool have_bounds = std::filesystem::exists(bounds_path);
  const bool have_metrics = std::filesystem::exists(metrics_path);
  if (!have_bounds && !have_metrics) {
    throw std::runtime_error(run_dir.string() + ": neither metrics.csv nor bounds.csv found");
  }

  std::vector<std::pair<std::string, std::string>> docs;
  if (have_bounds) {
    const CsvTable b = read_nonempty(bounds_path);
    const std::vector<double> step = b.numbers("step");
    const std::vector<double> lip = b.numbers("L_hat");
    const Series loss{"distill loss", step, b.numbers("distill_loss")};
    const Series gap{"value gap", step, b.numbers("value_gap")};
    const Series bound{"L_hat * coupling W2", step, b.numbers("bound")};
    const Series w2{"W2 exact", step, b.numbers("w2_exact")};
    const Series rms{"coupling RMS", step, b.numbers("coupling_rms")};
    docs.emplace_back("loss_gap.svg", svg_line_chart("Distillation loss and value gap", "step", "value", {loss, gap}));
    docs.emplace_back("gap_bound.svg", svg_line_chart("Value gap vs Lipschitz bound", "step", "value", {gap, bound}));
    docs.emplace_back("w2_coupling.svg", svg_line_chart("Exact W2 vs coupling RMS", "step", "distance", {w2, rms}));
    const double slope = *std::max_element(lip.begin(), lip.end());
    docs.emplace_back("gap_vs_w2.svg",
                      svg_scatter_envelope("Value gap vs W2 (checkpoints)", "coupling W2", "value gap",
                                           {"checkpoints", rms.y, gap.y}, slope));
  }
  if (have_metrics) {
    const CsvTable m = read_nonempty(metrics_path);
    std::map<std::string, Series> s = pivot_metrics(m);
    std::vector<Series> mi, train;
    for (const char* k : {"mi_joint", "mi_factored"}) {
      if (s.count(k)) mi.push_back(s[k]);
    }
    for (const char* k : {"flow_bc_loss", "critic_loss", "distill_loss"}) {
      if (s.count(k)) train.push_back(s[k]);
    }
    if (!mi.empty()) docs.emplace_back("mi.svg", svg_line_chart("Inter-agent mutual information", "step", "nats", mi));
    if (!train.empty()) docs.emplace_back("train_losses.svg", svg_line_chart("Training losses", "step", "loss", train));
  }

  std::vector<std::filesystem::path> written;
  for (const auto& [name, text] : docs) {
    write_text_file(run_dir / name, text);
    written.push_back(run_dir / name);
  }
  return written;
}

}  // namespace macflow
