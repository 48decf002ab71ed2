#include "fdfo/svgplot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace fdfo {

namespace {

constexpr int kWidth = 860, kHeight = 520;
constexpr int kLeft = 70, kRight = 30, kTop = 42, kBottom = 52;
constexpr int kTicks = 5;

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                          "#ff7f0e", "#9467bd", "#8c564b"};
constexpr int kPaletteSize = 6;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string escape_xml(const std::string& s) {
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

struct Range {
  double lo = 0.0, hi = 1.0;
  bool seen = false;
  void include(double v) {
    if (!std::isfinite(v)) return;
    if (!seen) {
      lo = hi = v;
      seen = true;
    } else {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  void finalize() {
    if (!seen) {
      lo = 0.0;
      hi = 1.0;
    }
    if (hi == lo) {
      // widen a degenerate range symmetrically
      double pad = lo == 0.0 ? 1.0 : std::abs(lo) * 0.1;
      lo -= pad;
      hi += pad;
    }
  }
};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& xlabel, const std::string& ylabel,
                    const std::vector<Series>& series) {
  for (const Series& s : series) {
    if (s.x.size() != s.y.size()) {
      throw std::runtime_error("svg plot: series '" + s.name +
                               "' has mismatched x/y lengths");
    }
  }
  Range rx, ry;
  for (const Series& s : series) {
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) {
        rx.include(s.x[i]);
        ry.include(s.y[i]);
      }
    }
  }
  rx.finalize();
  ry.finalize();

  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kHeight - kTop - kBottom;
  auto px = [&](double x) {
    return kLeft + (x - rx.lo) / (rx.hi - rx.lo) * plot_w;
  };
  auto py = [&](double y) {
    return kTop + (ry.hi - y) / (ry.hi - ry.lo) * plot_h;
  };

  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
         std::to_string(kWidth) + "\" height=\"" + std::to_string(kHeight) +
         "\" viewBox=\"0 0 " + std::to_string(kWidth) + " " +
         std::to_string(kHeight) + "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out += "<text x=\"" + fmt(kWidth / 2.0) +
         "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"16\">" +
         escape_xml(title) + "</text>\n";

  // frame
  out += "<rect x=\"" + std::to_string(kLeft) + "\" y=\"" +
         std::to_string(kTop) + "\" width=\"" + fmt(plot_w) + "\" height=\"" +
         fmt(plot_h) + "\" fill=\"none\" stroke=\"#333333\"/>\n";

  // ticks and grid
  for (int k = 0; k < kTicks; ++k) {
    double fx = rx.lo + (rx.hi - rx.lo) * k / (kTicks - 1);
    double fy = ry.lo + (ry.hi - ry.lo) * k / (kTicks - 1);
    double gx = px(fx), gy = py(fy);
    out += "<line x1=\"" + fmt(gx) + "\" y1=\"" + fmt(kTop) + "\" x2=\"" +
           fmt(gx) + "\" y2=\"" + fmt(kTop + plot_h) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<line x1=\"" + fmt(kLeft) + "\" y1=\"" + fmt(gy) + "\" x2=\"" +
           fmt(kLeft + plot_w) + "\" y2=\"" + fmt(gy) +
           "\" stroke=\"#dddddd\"/>\n";
    out += "<text x=\"" + fmt(gx) + "\" y=\"" + fmt(kTop + plot_h + 18) +
           "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           fmt(fx) + "</text>\n";
    out += "<text x=\"" + fmt(kLeft - 8) + "\" y=\"" + fmt(gy + 4) +
           "\" text-anchor=\"end\" font-family=\"sans-serif\" "
           "font-size=\"11\">" +
           fmt(fy) + "</text>\n";
  }

  // axis labels
  out += "<text x=\"" + fmt(kLeft + plot_w / 2) + "\" y=\"" +
         fmt(kHeight - 14) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\">" +
         escape_xml(xlabel) + "</text>\n";
  out += "<text x=\"18\" y=\"" + fmt(kTop + plot_h / 2) +
         "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"13\" transform=\"rotate(-90 18 " +
         fmt(kTop + plot_h / 2) + ")\">" +
         escape_xml(ylabel) + "</text>\n";

  // polylines
  for (size_t si = 0; si < series.size(); ++si) {
    const Series& s = series[si];
    const char* color = kPalette[si % kPaletteSize];
    std::string points;
    for (size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      if (!points.empty()) points += ' ';
      points += fmt(px(s.x[i])) + "," + fmt(py(s.y[i]));
    }
    if (!points.empty()) {
      out += "<polyline fill=\"none\" stroke=\"";
      out += color;
      out += "\" stroke-width=\"1.8\" points=\"" + points + "\"/>\n";
    }
  }

  // legend
  bool any_named = false;
  for (const Series& s : series) {
    if (!s.name.empty()) any_named = true;
  }
  if (any_named) {
    double lx = kLeft + plot_w - 170, ly = kTop + 12;
    for (size_t si = 0; si < series.size(); ++si) {
      const char* color = kPalette[si % kPaletteSize];
      out += "<line x1=\"" + fmt(lx) + "\" y1=\"" + fmt(ly) + "\" x2=\"" +
             fmt(lx + 24) + "\" y2=\"" + fmt(ly) + "\" stroke=\"";
      out += color;
      out += "\" stroke-width=\"2.2\"/>\n";
      out += "<text x=\"" + fmt(lx + 30) + "\" y=\"" + fmt(ly + 4) +
             "\" font-family=\"sans-serif\" font-size=\"12\">" +
             escape_xml(series[si].name) + "</text>\n";
      ly += 18;
    }
  }
  out += "</svg>\n";

  FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open svg for writing: " + path);
  size_t wrote = std::fwrite(out.data(), 1, out.size(), f);
  int rc = std::fclose(f);
  if (wrote != out.size() || rc != 0) {
    throw std::runtime_error("svg write failed: " + path);
  }
}

}  // namespace fdfo
