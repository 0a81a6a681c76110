#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "saeme/errors.hpp"
#include "saeme/stats.hpp"

namespace saeme {

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline void svg_open(std::ostringstream& os, int w, int h, const std::string& title) {
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << w
     << "\" height=\"" << h << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n"
     << "<rect x=\"0\" y=\"0\" width=\"" << w << "\" height=\"" << h
     << "\" fill=\"white\"/>\n"
     << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" "
        "font-family=\"sans-serif\" font-size=\"14\">"
     << xml_escape(title) << "</text>\n";
}

inline void svg_write(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open for writing: " + path);
  f << body;
  if (!f) throw io_error("write failed: " + path);
}

}  // namespace detail

/// Static box plot, one box per named series. Non-finite values are
/// dropped; the per-series count of dropped values is annotated.
inline void write_boxplot_svg(const std::string& path,
                              const std::vector<std::string>& labels,
                              const std::vector<std::vector<double>>& series,
                              const std::string& title,
                              const std::string& y_label) {
  const int width = 640, height = 420;
  const double left = 70, right = 30, top = 40, bottom = 60;
  std::ostringstream os;
  detail::svg_open(os, width, height, title);

  std::vector<FiveNumberSummary> sums;
  std::vector<std::size_t> dropped;
  double lo = 0, hi = 1;
  bool have = false;
  for (const auto& s : series) {
    auto fin = finite_values(s);
    dropped.push_back(s.size() - fin.size());
    sums.push_back(five_number_summary(std::move(fin)));
    if (sums.back().n) {
      lo = have ? std::min(lo, sums.back().min) : sums.back().min;
      hi = have ? std::max(hi, sums.back().max) : sums.back().max;
      have = true;
    }
  }
  if (!have) {
    lo = 0;
    hi = 1;
  }
  if (hi == lo) hi = lo + 1;
  const double pad = 0.05 * (hi - lo);
  lo -= pad;
  hi += pad;
  auto ypix = [&](double v) {
    return top + (hi - v) / (hi - lo) * (height - top - bottom);
  };

  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left
     << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double v = lo + (hi - lo) * t / 4.0;
    os << "<line x1=\"" << left - 4 << "\" y1=\"" << detail::num(ypix(v))
       << "\" x2=\"" << left << "\" y2=\"" << detail::num(ypix(v))
       << "\" stroke=\"black\"/>\n"
       << "<text x=\"" << left - 8 << "\" y=\"" << detail::num(ypix(v) + 4)
       << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
       << detail::num(v) << "</text>\n";
  }
  os << "<text x=\"16\" y=\"" << (height - top) / 2
     << "\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 16 "
     << (height - top) / 2 << ")\" text-anchor=\"middle\">" << detail::xml_escape(y_label)
     << "</text>\n";

  const double span_x = width - left - right;
  const double slot = span_x / std::max<std::size_t>(series.size(), 1);
  for (std::size_t i = 0; i < series.size(); ++i) {
    const double cx = left + slot * (static_cast<double>(i) + 0.5);
    const auto& s = sums[i];
    if (s.n) {
      const double bw = std::min(60.0, slot * 0.5);
      os << "<line x1=\"" << detail::num(cx) << "\" y1=\"" << detail::num(ypix(s.min))
         << "\" x2=\"" << detail::num(cx) << "\" y2=\"" << detail::num(ypix(s.max))
         << "\" stroke=\"black\" stroke-dasharray=\"3,2\"/>\n";
      os << "<rect x=\"" << detail::num(cx - bw / 2) << "\" y=\""
         << detail::num(ypix(s.q3)) << "\" width=\"" << detail::num(bw)
         << "\" height=\"" << detail::num(std::max(1.0, ypix(s.q1) - ypix(s.q3)))
         << "\" fill=\"#9ecae1\" stroke=\"black\"/>\n";
      os << "<line x1=\"" << detail::num(cx - bw / 2) << "\" y1=\""
         << detail::num(ypix(s.median)) << "\" x2=\"" << detail::num(cx + bw / 2)
         << "\" y2=\"" << detail::num(ypix(s.median))
         << "\" stroke=\"black\" stroke-width=\"2\"/>\n";
      for (double v : {s.min, s.max})
        os << "<line x1=\"" << detail::num(cx - bw / 4) << "\" y1=\""
           << detail::num(ypix(v)) << "\" x2=\"" << detail::num(cx + bw / 4)
           << "\" y2=\"" << detail::num(ypix(v)) << "\" stroke=\"black\"/>\n";
    }
    std::string label = i < labels.size() ? labels[i] : std::string("series");
    if (i < dropped.size() && dropped[i])
      label += " (" + std::to_string(dropped[i]) + " dropped)";
    os << "<text x=\"" << detail::num(cx) << "\" y=\"" << height - bottom + 18
       << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
       << detail::xml_escape(label) << "</text>\n";
  }
  os << "</svg>\n";
  detail::svg_write(path, os.str());
}

struct ScatterSeries {
  std::string label;
  std::string color = "#3182bd";
  std::vector<std::pair<double, double>> points;
};

inline void write_scatter_svg(const std::string& path,
                              const std::vector<ScatterSeries>& series,
                              const std::string& title, const std::string& x_label,
                              const std::string& y_label) {
  const int width = 640, height = 420;
  const double left = 70, right = 30, top = 40, bottom = 60;
  std::ostringstream os;
  detail::svg_open(os, width, height, title);

  double xlo = 0, xhi = 1, ylo = 0, yhi = 1;
  bool have = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      if (!have) {
        xlo = xhi = x;
        ylo = yhi = y;
        have = true;
      }
      xlo = std::min(xlo, x);
      xhi = std::max(xhi, x);
      ylo = std::min(ylo, y);
      yhi = std::max(yhi, y);
    }
  if (xhi == xlo) xhi = xlo + 1;
  if (yhi == ylo) yhi = ylo + 1;
  const double xpad = 0.05 * (xhi - xlo), ypad = 0.05 * (yhi - ylo);
  xlo -= xpad;
  xhi += xpad;
  ylo -= ypad;
  yhi += ypad;
  auto px = [&](double x) { return left + (x - xlo) / (xhi - xlo) * (width - left - right); };
  auto py = [&](double y) { return top + (yhi - y) / (yhi - ylo) * (height - top - bottom); };

  os << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\""
     << width - right << "\" y2=\"" << height - bottom << "\" stroke=\"black\"/>\n"
     << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 16
     << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">"
     << detail::xml_escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (height - top) / 2
     << "\" font-family=\"sans-serif\" font-size=\"11\" transform=\"rotate(-90 16 "
     << (height - top) / 2 << ")\" text-anchor=\"middle\">" << detail::xml_escape(y_label)
     << "</text>\n";

  double ly = top + 6;
  for (const auto& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      os << "<circle cx=\"" << detail::num(px(x)) << "\" cy=\"" << detail::num(py(y))
         << "\" r=\"3\" fill=\"" << s.color << "\" fill-opacity=\"0.7\"/>\n";
    }
    os << "<circle cx=\"" << width - right - 110 << "\" cy=\"" << detail::num(ly)
       << "\" r=\"4\" fill=\"" << s.color << "\"/>\n"
       << "<text x=\"" << width - right - 100 << "\" y=\"" << detail::num(ly + 4)
       << "\" font-family=\"sans-serif\" font-size=\"11\">" << detail::xml_escape(s.label)
       << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";
  detail::svg_write(path, os.str());
}

}  // namespace saeme
