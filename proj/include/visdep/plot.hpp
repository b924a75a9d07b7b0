#pragma once

// Static SVG figures: per-token probability bars for one trace and a histogram
// of per-sample dependence sums. Output is a pure function of the input.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "visdep/dependence.hpp"
#include "visdep/errors.hpp"
#include "visdep/format.hpp"
#include "visdep/trace.hpp"

namespace visdep {

inline constexpr std::array<const char*, 3> kClassColors{"#d62728", "#7f7f7f", "#1f77b4"};  // pos, inv, neg

namespace detail {

inline std::string xml_escape(const std::string& s) {
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

inline std::string rect(double x, double y, double w, double h, const std::string& fill, const std::string& cls,
                        const std::string& extra = {}) {
  return "<rect class=\"" + cls + "\" x=\"" + fmt_fixed(x) + "\" y=\"" + fmt_fixed(y) + "\" width=\"" +
         fmt_fixed(w) + "\" height=\"" + fmt_fixed(h) + "\" fill=\"" + fill + "\"" + extra + "/>\n";
}

inline std::string text(double x, double y, const std::string& s, const std::string& extra = {}) {
  return "<text x=\"" + fmt_fixed(x) + "\" y=\"" + fmt_fixed(y) + "\" font-size=\"11\"" + extra + ">" +
         xml_escape(s) + "</text>\n";
}

}  // namespace detail

/// Two bars per token (clean solid, noisy faded), colored by token class.
inline std::string trace_bar_svg(const TokenTrace& t) {
  validate(t);
  if (t.size() == 0) throw DataError("trace " + t.sample_id + " has no tokens to plot");
  const auto prof = profile_trace(t);
  const double bar = 12.0, gap = 10.0, left = 50.0, top = 40.0, plot_h = 200.0;
  const double width = left + static_cast<double>(t.size()) * (2 * bar + gap) + 130.0;
  const double height = top + plot_h + 90.0;
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fmt_fixed(width, 0) + "\" height=\"" +
                    fmt_fixed(height, 0) + "\">\n";
  svg += detail::text(left, 20, "sample " + t.sample_id + ": p(clean) solid, p(noisy) faded");
  svg += "<line x1=\"" + fmt_fixed(left) + "\" y1=\"" + fmt_fixed(top + plot_h) + "\" x2=\"" +
         fmt_fixed(width - 130.0) + "\" y2=\"" + fmt_fixed(top + plot_h) + "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0}) svg += detail::text(10, top + plot_h * (1.0 - v) + 4, fmt_fixed(v, 1));
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double x = left + static_cast<double>(i) * (2 * bar + gap);
    const std::string color = kClassColors[class_index(prof.classes[i])];
    const double hc = plot_h * t.p_clean[i], hn = plot_h * t.p_noisy[i];
    svg += detail::rect(x, top + plot_h - hc, bar, hc, color, "bar clean");
    svg += detail::rect(x + bar, top + plot_h - hn, bar, hn, color, "bar noisy", " fill-opacity=\"0.4\"");
    svg += detail::text(x + bar, top + plot_h + 14, t.surfaces[i],
                        " text-anchor=\"end\" transform=\"rotate(-45 " + fmt_fixed(x + bar) + " " +
                            fmt_fixed(top + plot_h + 14) + ")\"");
  }
  const double lx = width - 120.0;
  for (TokenClass c : kAllClasses) {
    const double ly = top + 20.0 * static_cast<double>(class_index(c));
    svg += detail::rect(lx, ly, 12, 12, kClassColors[class_index(c)], "legend");
    svg += detail::text(lx + 18, ly + 10, std::string(to_string(c)));
  }
  svg += "</svg>\n";
  return svg;
}

struct Histogram {
  std::vector<double> edges;  // bins + 1 edges; the last bin is closed on the right
  std::vector<std::size_t> counts;
};

/// Equal-width bins spanning [min, max] of the data; every value lands in a bin.
inline Histogram histogram(const std::vector<double>& values, int bins) {
  if (bins < 1) throw UsageError("histogram needs at least one bin");
  if (values.empty()) throw DataError("histogram of an empty score list");
  for (double v : values) {
    if (!std::isfinite(v)) throw DataError("histogram input is not finite");
  }
  auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  double lo = *lo_it, hi = *hi_it;
  if (lo == hi) {
    lo -= 0.5;
    hi += 0.5;
  }
  Histogram h;
  const auto n = static_cast<std::size_t>(bins);
  for (std::size_t i = 0; i <= n; ++i) h.edges.push_back(lo + (hi - lo) * static_cast<double>(i) / bins);
  h.edges.back() = hi;
  h.counts.assign(n, 0);
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - lo) / (hi - lo) * bins);
    ++h.counts[std::min(b, n - 1)];
  }
  return h;
}

inline std::string histogram_svg(const Histogram& h, const std::string& title) {
  const double left = 50.0, top = 40.0, plot_w = 500.0, plot_h = 220.0;
  const auto peak = std::max<std::size_t>(1, *std::max_element(h.counts.begin(), h.counts.end()));
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"600\" height=\"310\">\n";
  svg += detail::text(left, 20, title);
  const double w = plot_w / static_cast<double>(h.counts.size());
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    const double bh = plot_h * static_cast<double>(h.counts[i]) / static_cast<double>(peak);
    svg += detail::rect(left + static_cast<double>(i) * w, top + plot_h - bh, w, bh, "#4c72b0", "bin",
                        " stroke=\"white\"");
  }
  svg += detail::text(left, top + plot_h + 16, fmt_fixed(h.edges.front()));
  svg += detail::text(left + plot_w, top + plot_h + 16, fmt_fixed(h.edges.back()), " text-anchor=\"end\"");
  svg += detail::text(10, top + 10, std::to_string(peak));
  svg += "</svg>\n";
  return svg;
}

}  // namespace visdep
