#include "nlvae/plot.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <fmt/format.h>

#include "nlvae/error.hpp"

namespace nlvae {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
constexpr int kLeft = 70, kRight = 160, kTop = 40, kBottom = 50;

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

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  void settle() {
    if (!(lo <= hi)) lo = 0, hi = 1;
    if (lo == hi) lo -= 0.5, hi += 0.5;
  }
};

std::string header(const ChartOptions& o) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      o.width, o.height);
  s += fmt::format("<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", o.width / 2,
                   escape(o.title));
  const int pw = o.width - kLeft - kRight, ph = o.height - kTop - kBottom;
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#444\"/>\n", kLeft, kTop,
                   pw, ph);
  s += fmt::format("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", kLeft + pw / 2, o.height - 12,
                   escape(o.x_label));
  s += fmt::format("<text x=\"16\" y=\"{0}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0})\">{1}</text>\n",
                   kTop + ph / 2, escape(o.y_label));
  return s;
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const ChartOptions& o) {
  const auto ty = [&](double v) { return o.log_y ? std::log10(std::max(v, 1e-300)) : v; };
  Range rx, ry;
  for (const auto& s : series) {
    if (s.x.size() != s.y.size()) throw ContractError("line chart: x and y lengths differ for '" + s.label + "'");
    for (double v : s.x) rx.add(v);
    for (double v : s.y) {
      if (!o.log_y || v > 0) ry.add(ty(v));
    }
  }
  rx.settle();
  ry.settle();
  const double pw = o.width - kLeft - kRight, ph = o.height - kTop - kBottom;
  const auto px = [&](double v) { return kLeft + (v - rx.lo) / (rx.hi - rx.lo) * pw; };
  const auto py = [&](double v) { return kTop + ph - (ty(v) - ry.lo) / (ry.hi - ry.lo) * ph; };

  std::string svg = header(o);
  for (int i = 0; i <= 4; ++i) {
    const double fy = ry.lo + (ry.hi - ry.lo) * i / 4.0;
    const double y = kTop + ph - ph * i / 4.0;
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{:.4g}</text>\n", kLeft - 6, y + 4,
                       o.log_y ? std::pow(10.0, fy) : fy);
    const double fx = rx.lo + (rx.hi - rx.lo) * i / 4.0;
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{:.4g}</text>\n", kLeft + pw * i / 4.0,
                       kTop + ph + 16, fx);
  }
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const char* colour = kPalette[k % std::size(kPalette)];
    std::string points;
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (o.log_y && s.y[i] <= 0)) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(s.x[i]), py(s.y[i]));
    }
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n", colour, points);
    const int ly = kTop + 14 + static_cast<int>(k) * 18;
    svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"{3}\" stroke-width=\"2\"/>\n",
                       o.width - kRight + 12, ly, o.width - kRight + 36, colour);
    svg += fmt::format("<text x=\"{}\" y=\"{}\">{}</text>\n", o.width - kRight + 42, ly + 4, escape(s.label));
  }
  return svg + "</svg>\n";
}

std::string bar_chart_svg(const std::vector<Bar>& bars, const ChartOptions& o) {
  Range ry;
  ry.add(0);
  for (const auto& b : bars) ry.add(b.value);
  ry.settle();
  const double pw = o.width - kLeft - kRight, ph = o.height - kTop - kBottom;
  const auto py = [&](double v) { return kTop + ph - (v - ry.lo) / (ry.hi - ry.lo) * ph; };
  std::string svg = header(o);
  const double slot = bars.empty() ? pw : pw / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kLeft + slot * i + slot * 0.15;
    const double top = py(std::max(bars[i].value, 0.0)), base = py(std::min(bars[i].value, 0.0));
    svg += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"{}\"/>\n", x, top,
                       slot * 0.7, base - top, kPalette[i % std::size(kPalette)]);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.4g}</text>\n", x + slot * 0.35,
                       top - 4, bars[i].value);
    svg += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x + slot * 0.35,
                       kTop + ph + 16, escape(bars[i].label));
  }
  return svg + "</svg>\n";
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace nlvae
