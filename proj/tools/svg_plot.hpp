#pragma once

// Minimal static SVG renderer for the experiment CSVs. Plots are a viewing
// convenience only; every number they show lives in a CSV next to them.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace tailr::plot {

struct Series {
  std::string label;
  std::string color = "#1f77b4";
  std::vector<double> x, y;
};

inline void write_line_plot(const std::string& path, const std::string& title,
                            const std::string& xlabel, const std::string& ylabel,
                            const std::vector<Series>& series) {
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const auto& s : series) {
    for (double v : s.x) { xmin = std::min(xmin, v); xmax = std::max(xmax, v); }
    for (double v : s.y) { ymin = std::min(ymin, v); ymax = std::max(ymax, v); }
  }
  if (!(xmin < xmax)) { xmin -= 0.5; xmax += 0.5; }
  if (!(ymin < ymax)) { ymin -= 0.5; ymax += 0.5; }
  const double px = (W - L - R) / (xmax - xmin);
  const double py = (H - T - B) / (ymax - ymin);
  auto X = [&](double v) { return L + (v - xmin) * px; };
  auto Y = [&](double v) { return H - B - (v - ymin) * py; };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
      << H << "' font-family='sans-serif' font-size='12'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  out << "<text x='" << W / 2 << "' y='" << H - 10
      << "' text-anchor='middle'>" << xlabel << "</text>\n";
  out << "<text x='15' y='" << H / 2
      << "' text-anchor='middle' transform='rotate(-90 15 " << H / 2 << ")'>"
      << ylabel << "</text>\n";
  // axes
  out << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - B << "' stroke='black'/>\n";
  out << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R
      << "' y2='" << H - B << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << X(fx) << "' y='" << H - B + 16
        << "' text-anchor='middle' font-size='10'>" << fx << "</text>\n";
    out << "<text x='" << L - 6 << "' y='" << Y(fy) + 4
        << "' text-anchor='end' font-size='10'>" << fy << "</text>\n";
  }
  double ly = T + 4;
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      out << X(s.x[i]) << ',' << Y(s.y[i]) << ' ';
    }
    out << "'/>\n";
    out << "<text x='" << W - R - 4 << "' y='" << ly << "' text-anchor='end' fill='"
        << s.color << "'>" << s.label << "</text>\n";
    ly += 16;
  }
  out << "</svg>\n";
}

struct HeatCell {
  double x0, x1, y0, y1, value;
};

inline void write_heatmap(const std::string& path, const std::string& title,
                          const std::string& xlabel, const std::string& ylabel,
                          const std::vector<HeatCell>& cells) {
  const double W = 640, H = 420, L = 70, R = 20, T = 40, B = 50;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin, vmax = 0;
  for (const auto& c : cells) {
    xmin = std::min(xmin, c.x0); xmax = std::max(xmax, c.x1);
    ymin = std::min(ymin, c.y0); ymax = std::max(ymax, c.y1);
    vmax = std::max(vmax, std::abs(c.value));
  }
  if (!(xmin < xmax)) { xmin -= 0.5; xmax += 0.5; }
  if (!(ymin < ymax)) { ymin -= 0.5; ymax += 0.5; }
  if (vmax <= 0) vmax = 1;
  const double px = (W - L - R) / (xmax - xmin);
  const double py = (H - T - B) / (ymax - ymin);

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='"
      << H << "' font-family='sans-serif' font-size='12'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='20' text-anchor='middle' font-size='14'>"
      << title << "</text>\n";
  out << "<text x='" << W / 2 << "' y='" << H - 10
      << "' text-anchor='middle'>" << xlabel << "</text>\n";
  out << "<text x='15' y='" << H / 2
      << "' text-anchor='middle' transform='rotate(-90 15 " << H / 2 << ")'>"
      << ylabel << "</text>\n";
  for (const auto& c : cells) {
    // blue for underestimation, red for overestimation
    const double t = std::clamp(c.value / vmax, -1.0, 1.0);
    const int r = t > 0 ? 255 : static_cast<int>(255 * (1 + t));
    const int b = t < 0 ? 255 : static_cast<int>(255 * (1 - t));
    const int g = static_cast<int>(255 * (1 - std::abs(t)));
    out << "<rect x='" << L + (c.x0 - xmin) * px << "' y='"
        << H - B - (c.y1 - ymin) * py << "' width='" << (c.x1 - c.x0) * px
        << "' height='" << (c.y1 - c.y0) * py << "' fill='rgb(" << r << ','
        << g << ',' << b << ")'/>\n";
  }
  out << "<line x1='" << L << "' y1='" << T << "' x2='" << L << "' y2='"
      << H - B << "' stroke='black'/>\n";
  out << "<line x1='" << L << "' y1='" << H - B << "' x2='" << W - R
      << "' y2='" << H - B << "' stroke='black'/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x='" << L + (fx - xmin) * px << "' y='" << H - B + 16
        << "' text-anchor='middle' font-size='10'>" << fx << "</text>\n";
    out << "<text x='" << L - 6 << "' y='" << H - B - (fy - ymin) * py + 4
        << "' text-anchor='end' font-size='10'>" << fy << "</text>\n";
  }
  out << "</svg>\n";
}

}  // namespace tailr::plot
