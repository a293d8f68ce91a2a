#include "mftma/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mftma/common.hpp"

namespace mftma::svg {

namespace {

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                          "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                          "#bcbd22", "#17becf"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // 5% margin on each side; degenerate ranges get a unit pad.
  void finalize() {
    if (!std::isfinite(lo)) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi - lo < 1e-300) {
      lo -= 1.0;
      hi += 1.0;
    } else {
      const double margin = 0.05 * (hi - lo);
      lo -= margin;
      hi += margin;
    }
  }
};

}  // namespace

std::string subset_color(const std::string& subset_name) {
  if (subset_name == "unpermuted") return kPalette[0];
  if (subset_name == "permuted") return kPalette[1];
  if (subset_name == "restored") return kPalette[2];
  if (subset_name == "test") return kPalette[3];
  return kPalette[7];
}

std::vector<std::string> write_line_chart(const std::filesystem::path& path,
                                          const std::vector<Series>& series,
                                          const ChartOptions& options) {
  std::vector<std::string> skipped;
  std::vector<const Series*> drawn;
  for (const auto& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) {
      skipped.push_back(s.name);
    } else {
      drawn.push_back(&s);
    }
  }

  const int w = options.width, h = options.height;
  const int ml = 70, mr = 150, mt = 40, mb = 50;  // margins, legend on the right

  Range xr, yr;
  for (const Series* s : drawn) {
    for (double v : s->x) xr.add(v);
    for (double v : s->y) yr.add(options.log_y ? std::log10(std::max(v, 1e-300)) : v);
  }
  xr.finalize();
  yr.finalize();

  auto sx = [&](double v) {
    return ml + (v - xr.lo) / (xr.hi - xr.lo) * (w - ml - mr);
  };
  auto sy = [&](double v) {
    const double t = options.log_y ? std::log10(std::max(v, 1e-300)) : v;
    return h - mb - (t - yr.lo) / (yr.hi - yr.lo) * (h - mt - mb);
  };

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"16\">" << escape(options.title)
      << "</text>\n";

  // axes
  out << "<line x1=\"" << ml << "\" y1=\"" << h - mb << "\" x2=\"" << w - mr
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << h - mb << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 4.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 4.0;
    out << "<text x=\"" << fmt(sx(fx)) << "\" y=\"" << h - mb + 18
        << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
        << "font-size=\"11\">" << fmt(fx) << "</text>\n";
    const std::string ylab = options.log_y ? ("1e" + fmt(fy)) : fmt(fy);
    out << "<text x=\"" << ml - 8 << "\" y=\""
        << fmt(h - mb - (h - mt - mb) * i / 4.0 + 4)
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << ylab << "</text>\n";
  }
  out << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\">"
      << escape(options.x_label) << "</text>\n";
  out << "<text x=\"18\" y=\"" << (mt + h - mb) / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"13\" "
      << "transform=\"rotate(-90 18 " << (mt + h - mb) / 2 << ")\">"
      << escape(options.y_label) << "</text>\n";

  int color_index = 0;
  int legend_y = mt + 10;
  for (const Series* s : drawn) {
    const std::string color =
        s->color.empty() ? kPalette[color_index % 10] : s->color;
    ++color_index;
    out << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.8\" points=\"";
    for (std::size_t i = 0; i < s->x.size(); ++i) {
      out << fmt(sx(s->x[i])) << ',' << fmt(sy(s->y[i])) << ' ';
    }
    out << "\"/>\n";
    for (std::size_t i = 0; i < s->x.size(); ++i) {
      out << "<circle cx=\"" << fmt(sx(s->x[i])) << "\" cy=\""
          << fmt(sy(s->y[i])) << "\" r=\"2.4\" fill=\"" << color << "\"/>\n";
    }
    out << "<rect x=\"" << w - mr + 10 << "\" y=\"" << legend_y - 9
        << "\" width=\"12\" height=\"12\" fill=\"" << color << "\"/>\n";
    out << "<text x=\"" << w - mr + 28 << "\" y=\"" << legend_y + 2
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << escape(s->name)
        << "</text>\n";
    legend_y += 20;
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed for " + path.string());
  return skipped;
}

void write_grid_chart(const std::filesystem::path& path,
                      const std::vector<std::string>& row_labels,
                      const std::vector<std::string>& col_labels,
                      const std::vector<std::vector<double>>& values,
                      const ChartOptions& options) {
  const std::size_t rows = row_labels.size();
  const std::size_t cols = col_labels.size();
  if (values.size() != rows) {
    throw ConfigError("write_grid_chart: row count mismatch");
  }

  Range range;
  for (const auto& row : values) {
    for (double v : row) {
      if (std::isfinite(v)) range.add(v);
    }
  }
  range.finalize();
  const double span = std::max(std::abs(range.lo), std::abs(range.hi));

  const int cell = 46, ml = 120, mt = 70;
  const int w = ml + cell * static_cast<int>(cols) + 30;
  const int h = mt + cell * static_cast<int>(rows) + 30;

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"24\" text-anchor=\"middle\" "
      << "font-family=\"sans-serif\" font-size=\"15\">" << escape(options.title)
      << "</text>\n";

  for (std::size_t c = 0; c < cols; ++c) {
    out << "<text x=\"" << ml + cell * static_cast<int>(c) + cell / 2
        << "\" y=\"" << mt - 10 << "\" text-anchor=\"middle\" "
        << "font-family=\"sans-serif\" font-size=\"11\">" << escape(col_labels[c])
        << "</text>\n";
  }
  for (std::size_t r = 0; r < rows; ++r) {
    out << "<text x=\"" << ml - 8 << "\" y=\""
        << mt + cell * static_cast<int>(r) + cell / 2 + 4
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << escape(row_labels[r]) << "</text>\n";
    for (std::size_t c = 0; c < cols && c < values[r].size(); ++c) {
      const double v = values[r][c];
      std::string fill = "#dddddd";
      if (std::isfinite(v) && span > 0) {
        // diverging scale: negative green, positive purple
        const double t = std::clamp(v / span, -1.0, 1.0);
        const int alpha = static_cast<int>(std::abs(t) * 200) + 30;
        fill = t >= 0 ? "rgba(118,42,131," : "rgba(27,120,55,";
        fill += fmt(alpha / 255.0) + ")";
      }
      out << "<rect x=\"" << ml + cell * static_cast<int>(c) << "\" y=\""
          << mt + cell * static_cast<int>(r) << "\" width=\"" << cell
          << "\" height=\"" << cell << "\" fill=\"" << fill
          << "\" stroke=\"white\"/>\n";
      out << "<text x=\"" << ml + cell * static_cast<int>(c) + cell / 2
          << "\" y=\"" << mt + cell * static_cast<int>(r) + cell / 2 + 4
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
          << "font-size=\"10\">" << (std::isfinite(v) ? fmt(v) : "-")
          << "</text>\n";
    }
  }
  out << "</svg>\n";
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace mftma::svg
