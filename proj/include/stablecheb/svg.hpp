#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace stablecheb {

// Deterministic SVG scatter of complex eigenvalues with the unit circle
// overlaid. Text output keeps plots diffable in tests.
inline std::string eigenvalue_scatter_svg(
    const std::vector<std::pair<double, double>>& eigenvalues,
    const std::string& title = "", int size = 480) {
  double extent = 1.1;
  for (const auto& [re, im] : eigenvalues)
    extent = std::max({extent, std::abs(re) * 1.1, std::abs(im) * 1.1});
  const double half = size / 2.0;
  const double scale = half / extent;
  auto px = [&](double re) { return half + re * scale; };
  auto py = [&](double im) { return half - im * scale; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size
      << "\" height=\"" << size << "\" viewBox=\"0 0 " << size << " " << size
      << "\">\n";
  svg << "<rect width=\"" << size << "\" height=\"" << size
      << "\" fill=\"white\"/>\n";
  // axes
  svg << "<line x1=\"0\" y1=\"" << half << "\" x2=\"" << size << "\" y2=\""
      << half << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  svg << "<line x1=\"" << half << "\" y1=\"0\" x2=\"" << half << "\" y2=\""
      << size << "\" stroke=\"#cccccc\" stroke-width=\"1\"/>\n";
  // unit circle
  svg << "<circle cx=\"" << half << "\" cy=\"" << half << "\" r=\"" << scale
      << "\" fill=\"none\" stroke=\"#888888\" stroke-dasharray=\"4 3\"/>\n";
  for (const auto& [re, im] : eigenvalues)
    svg << "<circle cx=\"" << px(re) << "\" cy=\"" << py(im)
        << "\" r=\"2.5\" fill=\"#1f6fb2\" fill-opacity=\"0.7\"/>\n";
  if (!title.empty())
    svg << "<text x=\"8\" y=\"16\" font-family=\"monospace\" font-size=\"12\">"
        << title << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

inline void write_svg(const std::string& path, const std::string& svg) {
  std::ofstream out(path);
  out << svg;
}

}  // namespace stablecheb
