#pragma once

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spotgcn/common.hpp"
#include "spotgcn/tensor.hpp"

namespace spotgcn {

// Axis-aligned rectangle as center plus half extents, in pixels.
struct Rect {
  double cx = 0, cy = 0, hw = 0, hh = 0;
  double x0() const { return cx - hw; }
  double x1() const { return cx + hw; }
  double y0() const { return cy - hh; }
  double y1() const { return cy + hh; }
  double area() const { return 4.0 * hw * hh; }
};

inline constexpr std::size_t kNumRois = 10;

struct RoiLayout {
  std::array<Rect, kNumRois> rois;
  Rect nose_rect;
  Rect source_bbox;
};

// ROI anchors on the 68-point landmark convention (0-based indices):
// outer/inner left brow, inner/outer right brow, glabella (midpoint of the
// inner brow points), mouth corners, upper/lower lip, chin. The nose tip
// anchors the alignment rectangle.
inline constexpr std::array<int, kNumRois> kRoiAnchors = {19, 21, 22, 24, -1, 48, 54, 51, 57, 8};
inline constexpr int kGlabellaA = 21, kGlabellaB = 22;
inline constexpr int kNoseAnchor = 30;
inline constexpr double kRoiSizeFraction = 0.1;

using Landmarks = std::array<std::array<double, 2>, 68>;

namespace detail {

inline Rect clamp_rect_into(Rect r, const Rect& box) {
  r.hw = std::min(r.hw, box.hw);
  r.hh = std::min(r.hh, box.hh);
  r.cx = std::min(std::max(r.cx, box.x0() + r.hw), box.x1() - r.hw);
  r.cy = std::min(std::max(r.cy, box.y0() + r.hh), box.y1() - r.hh);
  return r;
}

}  // namespace detail

inline RoiLayout build_roi_layout(const Landmarks& landmarks, const Rect& bbox) {
  require(bbox.hw > 0 && bbox.hh > 0, Errc::invalid_argument, "degenerate face bounding box");
  const double side = 2.0 * std::min(bbox.hw, bbox.hh);
  const double half = 0.5 * kRoiSizeFraction * side;
  RoiLayout layout;
  layout.source_bbox = bbox;
  for (std::size_t r = 0; r < kNumRois; ++r) {
    double cx, cy;
    if (kRoiAnchors[r] < 0) {
      cx = 0.5 * (landmarks[kGlabellaA][0] + landmarks[kGlabellaB][0]);
      cy = 0.5 * (landmarks[kGlabellaA][1] + landmarks[kGlabellaB][1]);
    } else {
      cx = landmarks[static_cast<std::size_t>(kRoiAnchors[r])][0];
      cy = landmarks[static_cast<std::size_t>(kRoiAnchors[r])][1];
    }
    layout.rois[r] = detail::clamp_rect_into({cx, cy, half, half}, bbox);
  }
  layout.nose_rect = detail::clamp_rect_into(
      {landmarks[kNoseAnchor][0], landmarks[kNoseAnchor][1], half, half}, bbox);
  return layout;
}

// Three-scale pooling hierarchy: 10 facial nodes, 5 region nodes, 1 global
// node. Edges are undirected and unit-weighted; self-loops are added by
// adjacency().
struct PoolHierarchy {
  std::array<std::size_t, 3> scales = {10, 5, 1};
  // groups[t][g] lists the scale-t nodes pooled into node g of scale t+1.
  std::array<std::vector<std::vector<std::size_t>>, 2> groups = {{
      {{0, 1}, {2, 3}, {4}, {5, 6, 7}, {8, 9}},
      {{0, 1, 2, 3, 4}},
  }};
  std::array<std::vector<std::pair<std::size_t, std::size_t>>, 3> edges = {{
      // brow chain, mouth ring, lip-chin link, glabella-to-upper-lip link
      {{0, 1}, {1, 4}, {4, 2}, {2, 3}, {5, 7}, {7, 6}, {6, 8}, {8, 5}, {8, 9}, {4, 7}},
      // left brow - glabella - right brow chain, then down the mouth
      {{0, 2}, {2, 1}, {2, 3}, {3, 4}},
      {},
  }};
};

// Dense S x S matrix of 0/1 edges plus self-loops.
inline std::vector<double> adjacency(const PoolHierarchy& h, std::size_t scale_index) {
  require(scale_index < 3, Errc::invalid_argument, "scale index out of range");
  const std::size_t s = h.scales[scale_index];
  std::vector<double> a(s * s, 0.0);
  for (std::size_t i = 0; i < s; ++i) a[i * s + i] = 1.0;
  for (auto [u, v] : h.edges[scale_index]) {
    require(u < s && v < s, Errc::invalid_argument, "edge endpoint out of range");
    a[u * s + v] = 1.0;
    a[v * s + u] = 1.0;
  }
  return a;
}

// A_hat = D^(-1/2) A D^(-1/2) with D the diagonal of row sums.
inline std::vector<double> normalize_adjacency(const std::vector<double>& a, std::size_t s) {
  require(a.size() == s * s, Errc::invalid_argument, "adjacency must be square");
  std::vector<double> dinv(s);
  for (std::size_t i = 0; i < s; ++i) {
    double row = 0;
    for (std::size_t j = 0; j < s; ++j) {
      require(a[i * s + j] >= 0, Errc::invalid_argument, "adjacency must be nonnegative");
      row += a[i * s + j];
    }
    require(row > 0, Errc::invalid_argument, "isolated node without self-loop");
    dinv[i] = 1.0 / std::sqrt(row);
  }
  std::vector<double> out(s * s);
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = 0; j < s; ++j) out[i * s + j] = dinv[i] * a[i * s + j] * dinv[j];
  return out;
}

template <typename T>
Tensor<T> normalized_adjacency_tensor(const PoolHierarchy& h, std::size_t scale_index) {
  const std::size_t s = h.scales[scale_index];
  auto norm = normalize_adjacency(adjacency(h, scale_index), s);
  std::vector<T> v(norm.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<T>(norm[i]);
  return Tensor<T>::leaf({s, s}, std::move(v), false);
}

// Per-sample pooling over an [S, T, C] feature block.
template <typename T>
Tensor<T> flgp_pool_stc(const Tensor<T>& x, const PoolHierarchy& h, std::size_t transition_index) {
  require(transition_index < 2, Errc::invalid_argument, "transition index out of range");
  require(x.shape().size() == 3, Errc::invalid_argument, "flgp_pool: x must be [S,T,C]");
  const std::size_t S = x.dim(0), Tn = x.dim(1), C = x.dim(2);
  require(S == h.scales[transition_index], Errc::invalid_argument, "flgp_pool: node count mismatch");
  const std::size_t G = h.scales[transition_index + 1];
  Tensor<T> t = transpose01(x);                    // [T, S, C]
  t = reshape(t, {Tn, S, std::size_t(1), C});      // [T, S, 1, C]
  t = flgp_pool(t, h.groups[transition_index]);    // [T, G, 1, C]
  t = reshape(t, {Tn, G, C});
  return transpose01(t);                           // [G, T, C]
}

inline void write_graph_json(const std::string& path, const RoiLayout& layout,
                             const PoolHierarchy& h) {
  nlohmann::json j;
  auto rect_json = [](const Rect& r) {
    return nlohmann::json{{"cx", r.cx}, {"cy", r.cy}, {"hw", r.hw}, {"hh", r.hh}};
  };
  for (const auto& r : layout.rois) j["rois"].push_back(rect_json(r));
  j["nose_rect"] = rect_json(layout.nose_rect);
  j["source_bbox"] = rect_json(layout.source_bbox);
  j["scales"] = h.scales;
  for (const auto& g : h.groups) j["groups"].push_back(g);
  for (const auto& es : h.edges) {
    nlohmann::json arr = nlohmann::json::array();
    for (auto [u, v] : es) arr.push_back({u, v});
    j["edges"].push_back(arr);
  }
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot open graph json for writing: " + path);
  out << j.dump(2) << "\n";
}

inline PoolHierarchy read_hierarchy_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open graph json: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::data, std::string("malformed graph json: ") + e.what());
  }
  PoolHierarchy h;
  try {
    for (std::size_t i = 0; i < 3; ++i) h.scales[i] = j.at("scales").at(i).get<std::size_t>();
    for (std::size_t t = 0; t < 2; ++t)
      h.groups[t] = j.at("groups").at(t).get<std::vector<std::vector<std::size_t>>>();
    for (std::size_t s = 0; s < 3; ++s) {
      h.edges[s].clear();
      for (const auto& e : j.at("edges").at(s))
        h.edges[s].emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    raise(Errc::data, std::string("malformed graph json: ") + e.what());
  }
  // Each transition must partition the parent scale.
  for (std::size_t t = 0; t < 2; ++t) {
    std::vector<int> seen(h.scales[t], 0);
    require(h.groups[t].size() == h.scales[t + 1], Errc::data, "group count mismatch in graph json");
    for (const auto& g : h.groups[t])
      for (auto n : g) {
        require(n < h.scales[t] && !seen[n], Errc::data, "groups do not partition nodes");
        seen[n] = 1;
      }
    for (int s : seen) require(s == 1, Errc::data, "groups do not cover all nodes");
  }
  return h;
}

}  // namespace spotgcn
