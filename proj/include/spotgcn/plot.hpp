#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <string>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/model.hpp"
#include "spotgcn/rng.hpp"

namespace spotgcn {

namespace detail {

inline void svg_append(std::string& out, const char* fmt, ...) {
  char buf[1024];
  va_list args;
  va_start(args, fmt);
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  out += buf;
}

}  // namespace detail

// One panel per expression type. Five probability curves each plus
// shaded ground-truth intervals for that type.
inline std::string probability_svg(const std::vector<ProbabilityMap>& maps,
                                   const std::vector<AnnotationClip>& gts,
                                   const std::string& title = "") {
  require(!maps.empty(), Errc::invalid_argument, "empty probability map");
  const double width = 1180, panel_h = 230, margin_l = 52, margin_r = 16, margin_t = 40,
               gap = 42;
  const double plot_w = width - margin_l - margin_r;
  const double height = margin_t + 2 * panel_h + gap + 28;
  const double n = static_cast<double>(maps.size());
  const auto x_of = [&](double f) { return margin_l + plot_w * (n > 1 ? f / (n - 1) : 0.5); };

  std::string svg;
  detail::svg_append(svg,
                     "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                     "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\">\n",
                     width, height, width, height);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    detail::svg_append(svg,
                       "<text x=\"%.0f\" y=\"24\" font-size=\"16\" text-anchor=\"middle\">%s</text>\n",
                       width / 2, title.c_str());

  static const std::array<const char*, 5> kCurveColor = {"#d62728", "#1f77b4", "#2ca02c",
                                                         "#9467bd", "#8c564b"};
  static const std::array<const char*, 5> kCurveName = {"onset", "apex", "offset", "exp", "norm"};

  for (int panel = 0; panel < 2; ++panel) {
    const ExprType type = panel == 0 ? ExprType::micro : ExprType::macro;
    const double top = margin_t + panel * (panel_h + gap);
    const auto y_of = [&](double p) { return top + (1.0 - p) * panel_h; };
    detail::svg_append(svg,
                       "<text x=\"%.0f\" y=\"%.0f\" font-size=\"13\">%s probabilities</text>\n",
                       margin_l, top - 8, expr_type_name(type));
    detail::svg_append(svg,
                       "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" "
                       "stroke=\"#888888\" stroke-width=\"1\"/>\n",
                       margin_l, top, plot_w, panel_h);
    for (double level : {0.0, 0.5, 1.0}) {
      detail::svg_append(svg,
                         "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\" "
                         "stroke-width=\"1\"/>\n",
                         margin_l, y_of(level), margin_l + plot_w, y_of(level));
      detail::svg_append(svg,
                         "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\" text-anchor=\"end\">%.1f</text>\n",
                         margin_l - 6, y_of(level) + 3, level);
    }
    for (const auto& gt : gts) {
      if (gt.type != type) continue;
      const double x0 = x_of(static_cast<double>(gt.onset));
      const double x1 = x_of(static_cast<double>(gt.offset));
      detail::svg_append(svg,
                         "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" "
                         "fill=\"#ffcf66\" fill-opacity=\"0.35\"/>\n",
                         x0, top, std::max(1.0, x1 - x0), panel_h);
    }
    for (std::size_t c = 0; c < 5; ++c) {
      std::string points;
      char buf[48];
      for (std::size_t f = 0; f < maps.size(); ++f) {
        const TypeProbs& p = maps[f].of(type);
        const double v = c == 0   ? p.onset
                         : c == 1 ? p.apex
                         : c == 2 ? p.offset
                         : c == 3 ? p.exp
                                  : p.norm;
        std::snprintf(buf, sizeof(buf), "%.1f,%.1f ", x_of(static_cast<double>(f)),
                      y_of(std::clamp(v, 0.0, 1.0)));
        points += buf;
      }
      detail::svg_append(svg,
                         "<polyline points=\"%s\" fill=\"none\" stroke=\"%s\" stroke-width=\"1.2\"/>\n",
                         points.c_str(), kCurveColor[c]);
      const double lx = margin_l + plot_w - 310 + static_cast<double>(c) * 62;
      detail::svg_append(svg,
                         "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>\n",
                         lx, top + panel_h + 8, kCurveColor[c]);
      detail::svg_append(svg,
                         "<text x=\"%.1f\" y=\"%.1f\" font-size=\"10\">%s</text>\n", lx + 13,
                         top + panel_h + 17, kCurveName[c]);
    }
  }
  detail::svg_append(svg, "<text x=\"%.0f\" y=\"%.0f\" font-size=\"11\">frame</text>\n",
                     margin_l + plot_w / 2 - 15, height - 6);
  svg += "</svg>\n";
  return svg;
}

namespace detail {

// Leading eigenvector by power iteration on a dense symmetric matrix.
inline std::vector<double> power_iteration(const std::vector<double>& m, std::size_t d,
                                           std::uint64_t seed, double* eigenvalue) {
  SplitMix64 rng(seed);
  std::vector<double> v(d), next(d);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  double lambda = 0;
  for (int iter = 0; iter < 300; ++iter) {
    for (std::size_t i = 0; i < d; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += m[i * d + j] * v[j];
      next[i] = s;
    }
    double norm = 0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) break;
    for (std::size_t i = 0; i < d; ++i) v[i] = next[i] / norm;
    lambda = norm;
  }
  if (eigenvalue) *eigenvalue = lambda;
  return v;
}

}  // namespace detail

// Scatter of the two leading principal components of the embeddings,
// colored by frame type (0 micro, 1 macro, 2 normal).
inline std::string embedding_svg(const std::vector<float>& embeddings, std::size_t n,
                                 std::size_t d, const std::vector<int>& labels,
                                 const std::string& title = "") {
  require(n >= 2 && d >= 2, Errc::invalid_argument, "need at least two points and two dims");
  require(embeddings.size() == n * d, Errc::invalid_argument, "embedding buffer size mismatch");
  require(labels.size() == n, Errc::invalid_argument, "label count mismatch");

  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += embeddings[i * d + j];
  for (auto& m : mean) m /= static_cast<double>(n);
  std::vector<double> cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a) {
      const double xa = embeddings[i * d + a] - mean[a];
      for (std::size_t b = a; b < d; ++b)
        cov[a * d + b] += xa * (embeddings[i * d + b] - mean[b]);
    }
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < a; ++b) cov[a * d + b] = cov[b * d + a];

  double l1 = 0;
  const std::vector<double> v1 = detail::power_iteration(cov, d, 99, &l1);
  std::vector<double> deflated = cov;
  for (std::size_t a = 0; a < d; ++a)
    for (std::size_t b = 0; b < d; ++b) deflated[a * d + b] -= l1 * v1[a] * v1[b];
  const std::vector<double> v2 = detail::power_iteration(deflated, d, 131, nullptr);

  std::vector<std::array<double, 2>> pts(n);
  double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
  for (std::size_t i = 0; i < n; ++i) {
    double px = 0, py = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = embeddings[i * d + j] - mean[j];
      px += c * v1[j];
      py += c * v2[j];
    }
    pts[i] = {px, py};
    min_x = std::min(min_x, px);
    max_x = std::max(max_x, px);
    min_y = std::min(min_y, py);
    max_y = std::max(max_y, py);
  }
  const double span_x = std::max(1e-9, max_x - min_x), span_y = std::max(1e-9, max_y - min_y);
  const double width = 640, height = 560, pad = 50;

  std::string svg;
  detail::svg_append(svg,
                     "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" "
                     "viewBox=\"0 0 %.0f %.0f\" font-family=\"sans-serif\">\n",
                     width, height, width, height);
  svg += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  if (!title.empty())
    detail::svg_append(svg,
                       "<text x=\"%.0f\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">%s</text>\n",
                       width / 2, title.c_str());
  static const std::array<const char*, 3> kClassColor = {"#d62728", "#1f77b4", "#bbbbbb"};
  static const std::array<const char*, 3> kClassName = {"micro", "macro", "normal"};
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = labels[i] >= 0 && labels[i] < 3 ? labels[i] : 2;
    detail::svg_append(svg,
                       "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"2.6\" fill=\"%s\" fill-opacity=\"0.7\"/>\n",
                       pad + (pts[i][0] - min_x) / span_x * (width - 2 * pad),
                       pad + (pts[i][1] - min_y) / span_y * (height - 2 * pad - 20),
                       kClassColor[static_cast<std::size_t>(cls)]);
  }
  for (std::size_t c = 0; c < 3; ++c) {
    detail::svg_append(svg, "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"4\" fill=\"%s\"/>\n",
                       pad + static_cast<double>(c) * 90, height - 18.0, kClassColor[c]);
    detail::svg_append(svg, "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\">%s</text>\n",
                       pad + static_cast<double>(c) * 90 + 8, height - 14.0, kClassName[c]);
  }
  svg += "</svg>\n";
  return svg;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open file for writing: " + path);
  require(std::fwrite(content.data(), 1, content.size(), f.get()) == content.size(), Errc::io,
          "short write: " + path);
}

}  // namespace spotgcn
