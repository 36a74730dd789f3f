#pragma once

// Independent brute-force references for the test suites. Everything here
// is written as plainly as possible (nested loops, no shared code with the
// library kernels) so a bug in an optimized path cannot hide in its own
// reference.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <unistd.h>
#include <vector>

#include <spotgcn/annotations.hpp>
#include <spotgcn/image.hpp>
#include <spotgcn/intervals.hpp>
#include <spotgcn/model.hpp>
#include <spotgcn/rng.hpp>
#include <spotgcn/spotting.hpp>

namespace testutil {

// Unique scratch directory, removed on destruction.
struct TempDir {
  std::filesystem::path path;

  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    const unsigned id = counter++;
    path = std::filesystem::temp_directory_path() /
           ("spotgcn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(id));
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path.string(); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// ---- dense little helpers ----

template <typename T>
using Grid3 = std::vector<std::vector<std::vector<T>>>;  // [A][B][C]

template <typename T>
Grid3<T> make_grid3(std::size_t a, std::size_t b, std::size_t c, T fill = T(0)) {
  return Grid3<T>(a, std::vector<std::vector<T>>(b, std::vector<T>(c, fill)));
}

// ---- neural-layer references ----

// Valid temporal convolution of one node sequence followed by ReLU-free
// linear map: out[t][o] = sum_k sum_c x[t+k][c] * w[k*C+c][o] + b[o].
template <typename T>
std::vector<std::vector<T>> conv_ref(const std::vector<std::vector<T>>& x,
                                     const std::vector<std::vector<T>>& w, const std::vector<T>& b,
                                     std::size_t K) {
  const std::size_t Tn = x.size(), C = x[0].size(), Cout = w[0].size();
  std::vector<std::vector<T>> out(Tn - K + 1, std::vector<T>(Cout, T(0)));
  for (std::size_t t = 0; t + K <= Tn; ++t)
    for (std::size_t o = 0; o < Cout; ++o) {
      T acc = b.empty() ? T(0) : b[o];
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t c = 0; c < C; ++c) acc += x[t + k][c] * w[k * C + c][o];
      out[t][o] = acc;
    }
  return out;
}

// ST-GCN layer on x[S][T][C]: per-node temporal conv (no bias), then graph
// mixing with ahat[S][S], bias, ReLU. Mirrors H = relu(A * conv(X) * W + b).
template <typename T>
Grid3<T> stgcn_ref(const Grid3<T>& x, const std::vector<std::vector<T>>& ahat,
                   const std::vector<std::vector<T>>& w, const std::vector<T>& b, std::size_t K) {
  const std::size_t S = x.size(), Tn = x[0].size(), Cout = w[0].size();
  const std::size_t To = Tn - K + 1;
  Grid3<T> conv(S);
  for (std::size_t s = 0; s < S; ++s) conv[s] = conv_ref(x[s], w, std::vector<T>{}, K);
  Grid3<T> out = make_grid3<T>(S, To, Cout);
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t o = 0; o < Cout; ++o) {
        T acc = b[o];
        for (std::size_t sp = 0; sp < S; ++sp) acc += ahat[s][sp] * conv[sp][t][o];
        out[s][t][o] = std::max(acc, T(0));
      }
  return out;
}

// TCN layer on x[T][C]: temporal conv with bias then ReLU.
template <typename T>
std::vector<std::vector<T>> tcn_ref(const std::vector<std::vector<T>>& x,
                                    const std::vector<std::vector<T>>& w, const std::vector<T>& b,
                                    std::size_t K) {
  auto out = conv_ref(x, w, b, K);
  for (auto& row : out)
    for (auto& v : row) v = std::max(v, T(0));
  return out;
}

// Per-group max pool on x[S][T][C].
template <typename T>
Grid3<T> pool_ref(const Grid3<T>& x, const std::vector<std::vector<std::size_t>>& groups) {
  const std::size_t Tn = x[0].size(), C = x[0][0].size();
  Grid3<T> out = make_grid3<T>(groups.size(), Tn, C, std::numeric_limits<T>::lowest());
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t t = 0; t < Tn; ++t)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t node : groups[g]) out[g][t][c] = std::max(out[g][t][c], x[node][t][c]);
  return out;
}

// ---- loss references ----

template <typename T>
T focal_term_ref(T p, T alpha, T gamma) {
  const T pc = std::max(p, T(1e-7));
  return alpha * std::pow(T(1) - pc, gamma) * (-std::log(pc));
}

template <typename T>
T focal_multi_ref(const std::vector<std::vector<T>>& probs, const std::vector<int>& targets, T alpha,
                  T gamma) {
  T total = T(0);
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (targets[i] < 0) continue;
    total += focal_term_ref(probs[i][static_cast<std::size_t>(targets[i])], alpha, gamma);
  }
  return total;
}

template <typename T>
T focal_binary_ref(const std::vector<T>& p, const std::vector<int>& targets, T alpha, T gamma) {
  T total = T(0);
  for (std::size_t i = 0; i < p.size(); ++i)
    total += focal_term_ref(targets[i] ? p[i] : T(1) - p[i], alpha, gamma);
  return total;
}

// Literal double-loop supervised contrastive loss over normalized rows.
template <typename T>
T supcon_ref(const std::vector<std::vector<T>>& z, const std::vector<int>& labels, T tau) {
  const std::size_t B = z.size();
  const auto dot = [&](std::size_t i, std::size_t j) {
    T s = T(0);
    for (std::size_t d = 0; d < z[i].size(); ++d) s += z[i][d] * z[j][d];
    return s;
  };
  T total = T(0);
  for (std::size_t i = 0; i < B; ++i) {
    std::vector<std::size_t> q;
    for (std::size_t e = 0; e < B; ++e)
      if (e != i && labels[e] == labels[i]) q.push_back(e);
    if (q.empty()) continue;
    T denom = T(0);
    for (std::size_t e = 0; e < B; ++e)
      if (e != i) denom += std::exp(dot(i, e) / tau);
    T anchor = T(0);
    for (std::size_t qi : q) anchor += std::log(std::exp(dot(i, qi) / tau) / denom);
    total += -anchor / static_cast<T>(q.size());
  }
  return total;
}

// ---- spotting references ----

// NMS by repeated global-best selection instead of a pre-sort.
inline std::vector<spotgcn::ExpressionProposal> nms_ref(
    std::vector<spotgcn::ExpressionProposal> pool, double theta_overlap) {
  std::vector<spotgcn::ExpressionProposal> kept;
  std::vector<char> alive(pool.size(), 1);
  for (;;) {
    std::size_t best = pool.size();
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!alive[i]) continue;
      if (best == pool.size()) {
        best = i;
        continue;
      }
      const auto &a = pool[i], &b = pool[best];
      const bool wins = a.score != b.score  ? a.score > b.score
                        : a.onset != b.onset ? a.onset < b.onset
                                             : a.offset < b.offset;
      if (wins) best = i;
    }
    if (best == pool.size()) break;
    kept.push_back(pool[best]);
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (!alive[i]) continue;
      if (pool[i].video != pool[best].video || pool[i].type != pool[best].type) continue;
      if (spotgcn::interval_iou(pool[i].onset, pool[i].offset, pool[best].onset,
                                pool[best].offset) > theta_overlap)
        alive[i] = 0;
    }
  }
  return kept;
}

inline std::vector<std::size_t> candidates_ref(const std::vector<spotgcn::ProbabilityMap>& maps,
                                               spotgcn::ExprType type, double theta, bool gate) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const auto& p = maps[i].of(type);
    if ((gate ? p.apex * p.exp : p.apex) > theta) out.push_back(i);
  }
  return out;
}

// Proposal expansion with the explicit earliest-tie argmax.
inline std::optional<spotgcn::ExpressionProposal> proposal_ref(
    std::size_t l, const std::vector<spotgcn::ProbabilityMap>& maps, spotgcn::ExprType type,
    std::int64_t k, std::int64_t j, const std::string& video) {
  const std::int64_t n = static_cast<std::int64_t>(maps.size());
  const std::int64_t li = static_cast<std::int64_t>(l);
  const std::int64_t hj = (j + 1) / 2;
  const std::int64_t b_lo = std::max<std::int64_t>(0, li - k / 2), b_hi = li - hj;
  const std::int64_t d_lo = li + hj, d_hi = std::min(n - 1, li + k / 2);
  if (b_hi < b_lo || d_hi < d_lo) return std::nullopt;
  std::int64_t b = b_lo, d = d_lo;
  for (std::int64_t f = b_lo; f <= b_hi; ++f)
    if (maps[static_cast<std::size_t>(f)].of(type).onset > maps[static_cast<std::size_t>(b)].of(type).onset)
      b = f;
  for (std::int64_t f = d_lo; f <= d_hi; ++f)
    if (maps[static_cast<std::size_t>(f)].of(type).offset > maps[static_cast<std::size_t>(d)].of(type).offset)
      d = f;
  spotgcn::ExpressionProposal out;
  out.video = video;
  out.type = type;
  out.onset = b;
  out.offset = d;
  out.score = maps[static_cast<std::size_t>(b)].of(type).onset * maps[l].of(type).apex *
              maps[static_cast<std::size_t>(d)].of(type).offset;
  return out;
}

// ---- evaluation references ----

// Exhaustive maximum bipartite matching for small instances: recursion over
// ground-truth rows, trying every unused eligible proposal or none.
inline std::int64_t max_matching_ref(const std::vector<spotgcn::AnnotationClip>& gts,
                                     const std::vector<spotgcn::ExpressionProposal>& proposals,
                                     double theta_iou) {
  std::vector<std::vector<std::size_t>> adj(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      const std::string key =
          gts[g].subject.empty() ? gts[g].video : gts[g].subject + "/" + gts[g].video;
      if (key != proposals[p].video || gts[g].type != proposals[p].type) continue;
      if (spotgcn::interval_iou(gts[g].onset, gts[g].offset, proposals[p].onset,
                                proposals[p].offset) >= theta_iou)
        adj[g].push_back(p);
    }
  std::vector<char> used(proposals.size(), 0);
  const std::function<std::int64_t(std::size_t)> best = [&](std::size_t g) -> std::int64_t {
    if (g == gts.size()) return 0;
    std::int64_t r = best(g + 1);
    for (std::size_t p : adj[g]) {
      if (used[p]) continue;
      used[p] = 1;
      r = std::max(r, 1 + best(g + 1));
      used[p] = 0;
    }
    return r;
  };
  return best(0);
}

// ---- spectral radius reference ----

inline double spectral_radius_ref(const std::vector<double>& a, std::size_t n,
                                  std::size_t iters = 500) {
  std::vector<double> v(n, 1.0), w(n);
  double lam = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] * v[j];
      w[i] = s;
    }
    double norm = 0.0;
    for (double x : w) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    lam = norm;
    for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
  }
  return lam;
}

// ---- synthetic imagery helpers ----

inline float bilerp_ref(const spotgcn::Image& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const std::size_t x0 = std::min(img.width - 2, static_cast<std::size_t>(x));
  const std::size_t y0 = std::min(img.height - 2, static_cast<std::size_t>(y));
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = img.at(x0, y0) * (1 - fx) + img.at(x0 + 1, y0) * fx;
  const double bot = img.at(x0, y0 + 1) * (1 - fx) + img.at(x0 + 1, y0 + 1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

// Warps src by a displacement field: out(x, y) = src(x - dx, y - dy), i.e.
// content at p moves to p + d(p).
template <typename Field>
spotgcn::Image warp_ref(const spotgcn::Image& src, Field&& field) {
  spotgcn::Image out = spotgcn::Image::zeros(src.width, src.height);
  for (std::size_t y = 0; y < src.height; ++y)
    for (std::size_t x = 0; x < src.width; ++x) {
      const std::array<double, 2> d = field(static_cast<double>(x), static_cast<double>(y));
      out.at(x, y) = bilerp_ref(src, static_cast<double>(x) - d[0], static_cast<double>(y) - d[1]);
    }
  return out;
}

// Random probability maps with valid structure (simplex triples, exp in
// (0,1)). Values are generic: no ties, no zeros.
inline std::vector<spotgcn::ProbabilityMap> random_maps(std::size_t n, spotgcn::SplitMix64& rng) {
  std::vector<spotgcn::ProbabilityMap> maps(n);
  for (auto& m : maps) {
    for (spotgcn::TypeProbs* p : {&m.micro, &m.macro_}) {
      const double a = rng.uniform(0.05, 1.0), b = rng.uniform(0.05, 1.0), c = rng.uniform(0.05, 1.0);
      p->onset = a / (a + b + c);
      p->apex = b / (a + b + c);
      p->offset = c / (a + b + c);
      p->exp = rng.uniform(0.01, 0.99);
      p->norm = 1.0 - p->exp;
    }
  }
  return maps;
}

}  // namespace testutil
