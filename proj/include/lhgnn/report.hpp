#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lhgnn/errors.hpp"

namespace lhgnn {

using Json = nlohmann::json;

inline void write_json(const Json& j, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write report: " + path);
  out << j.dump(2) << '\n';
}

// Minimal static SVG plots; enough for loss curves and metric bars.
namespace svg {

inline void line_chart(const std::string& path, const std::string& title,
                       const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  constexpr int w = 720, h = 420, ml = 60, mr = 20, mt = 40, mb = 40;
  double lo = 1e300, hi = -1e300;
  size_t n = 0;
  for (const auto& [name, ys] : series) {
    n = std::max(n, ys.size());
    for (double y : ys) {
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
  }
  if (n == 0 || hi <= lo) {
    lo = 0;
    hi = 1;
  }
  const double xs = (w - ml - mr) / std::max<double>(1.0, double(n - 1));
  const double ys_scale = (h - mt - mb) / (hi - lo);
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"};

  std::ofstream out(path);
  if (!out) throw ParseError("cannot write plot: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' "
         "font-size='14'>"
      << title << "</text>\n";
  out << "<line x1='" << ml << "' y1='" << h - mb << "' x2='" << w - mr << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << h - mb
      << "' stroke='black'/>\n";
  out << "<text x='10' y='" << mt << "' font-family='sans-serif' font-size='10'>" << hi
      << "</text>\n";
  out << "<text x='10' y='" << h - mb << "' font-family='sans-serif' font-size='10'>" << lo
      << "</text>\n";
  int c = 0;
  for (const auto& [name, ysv] : series) {
    out << "<polyline fill='none' stroke='" << colors[c % 5] << "' stroke-width='1.5' points='";
    for (size_t i = 0; i < ysv.size(); ++i)
      out << ml + xs * double(i) << "," << (h - mb) - (ysv[i] - lo) * ys_scale << " ";
    out << "'/>\n";
    out << "<text x='" << w - mr - 120 << "' y='" << mt + 14 * (c + 1)
        << "' font-family='sans-serif' font-size='11' fill='" << colors[c % 5] << "'>" << name
        << "</text>\n";
    ++c;
  }
  out << "</svg>\n";
}

inline void bar_chart(const std::string& path, const std::string& title,
                      const std::vector<std::pair<std::string, double>>& bars) {
  constexpr int w = 720, h = 420, ml = 60, mr = 20, mt = 40, mb = 70;
  double hi = 0.0;
  for (const auto& [name, v] : bars) hi = std::max(hi, v);
  if (hi <= 0) hi = 1.0;
  const double bw = (w - ml - mr) / std::max<size_t>(1, bars.size());

  std::ofstream out(path);
  if (!out) throw ParseError("cannot write plot: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << h << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << w / 2 << "' y='20' text-anchor='middle' font-family='sans-serif' "
         "font-size='14'>"
      << title << "</text>\n";
  for (size_t i = 0; i < bars.size(); ++i) {
    const double bh = bars[i].second / hi * (h - mt - mb);
    const double x = ml + bw * double(i) + bw * 0.15;
    out << "<rect x='" << x << "' y='" << (h - mb) - bh << "' width='" << bw * 0.7 << "' height='"
        << bh << "' fill='#1f77b4'/>\n";
    out << "<text x='" << x + bw * 0.35 << "' y='" << h - mb + 16
        << "' text-anchor='middle' font-family='sans-serif' font-size='10'>" << bars[i].first
        << "</text>\n";
    out << "<text x='" << x + bw * 0.35 << "' y='" << (h - mb) - bh - 4
        << "' text-anchor='middle' font-family='sans-serif' font-size='10'>" << bars[i].second
        << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace svg
}  // namespace lhgnn
