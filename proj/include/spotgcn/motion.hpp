#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spotgcn/common.hpp"
#include "spotgcn/facial_graph.hpp"
#include "spotgcn/image.hpp"

namespace spotgcn {

// Receptive-field-adaptive sliding windows: the video is padded with
// floor(w/2) copies of the first and last frames so that clip i is the
// w-frame window whose center is original frame i.
struct WindowPlan {
  std::size_t n_frames = 0;
  std::size_t window = 0;
  std::size_t pad = 0;

  std::size_t padded_length() const { return n_frames + 2 * pad; }
  std::size_t clips() const { return n_frames; }
  std::size_t original_index(std::size_t padded) const {
    if (padded < pad) return 0;
    const std::size_t shifted = padded - pad;
    return shifted >= n_frames ? n_frames - 1 : shifted;
  }
  std::size_t frame_of(std::size_t clip, std::size_t s) const { return original_index(clip + s); }
};

inline WindowPlan partition_windows(std::size_t n_frames, std::size_t window) {
  require(n_frames >= 1, Errc::invalid_argument, "empty video");
  require(window % 2 == 1, Errc::invalid_argument, "window must be odd");
  return WindowPlan{n_frames, window, window / 2};
}

struct Flow {
  double dx = 0, dy = 0;
  bool low_confidence = false;
};

struct FlowParams {
  int pyramid_levels = 3;
  int block = 8;
  int search_radius = 4;
  // Blocks whose intensity spread falls below this are flat enough that
  // any match is a guess.
  float min_texture_stddev = 1.0f;
};

struct Pyramid {
  std::vector<Image> levels;
};

inline Pyramid build_pyramid(const Image& im, int levels = 3) {
  Pyramid p;
  p.levels.push_back(im);
  for (int l = 1; l < levels; ++l) {
    const Image& prev = p.levels.back();
    const std::size_t w = prev.width / 2, h = prev.height / 2;
    if (w < 8 || h < 8) break;
    Image next = Image::zeros(w, h);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        next.at(x, y) = 0.25f * (prev.at(2 * x, 2 * y) + prev.at(2 * x + 1, 2 * y) +
                                 prev.at(2 * x, 2 * y + 1) + prev.at(2 * x + 1, 2 * y + 1));
    p.levels.push_back(std::move(next));
  }
  return p;
}

namespace detail {

inline double block_ssd(const Image& a, const Image& b, int ax, int ay, int bx, int by, int n) {
  double s = 0;
  for (int y = 0; y < n; ++y) {
    const float* pa = a.pixels.data() + (ay + y) * a.width + ax;
    const float* pb = b.pixels.data() + (by + y) * b.width + bx;
    for (int x = 0; x < n; ++x) {
      const double d = static_cast<double>(pa[x]) - static_cast<double>(pb[x]);
      s += d * d;
    }
  }
  return s;
}

// One-axis parabolic refinement from SSD at offsets -1, 0, +1; clamped to
// half a pixel, zero when the fit is degenerate.
inline double parabolic_offset(double sm, double s0, double sp) {
  const double denom = sm - 2.0 * s0 + sp;
  if (denom <= 0) return 0.0;
  const double off = 0.5 * (sm - sp) / denom;
  return std::min(std::max(off, -0.5), 0.5);
}

inline int clamp_int(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

}  // namespace detail

// Coarse-to-fine block matching. Each block's integer displacement is
// searched within +-radius around the propagated guess per level; the
// finest level adds parabolic sub-pixel refinement. The returned flow is
// the mean over the region's blocks.
class FlowEstimator {
 public:
  explicit FlowEstimator(FlowParams params = {}) : params_(params) {}

  const FlowParams& params() const { return params_; }

  Flow between(const Pyramid& a, const Pyramid& b, const Rect& region,
               std::array<double, 2> guess = {0.0, 0.0}) const {
    const Image& full = a.levels[0];
    require(full.width == b.levels[0].width && full.height == b.levels[0].height,
            Errc::invalid_argument, "frames must have equal size");
    const int n = params_.block;
    const int iw = static_cast<int>(full.width), ih = static_cast<int>(full.height);
    const int rx0 = static_cast<int>(std::floor(region.x0()));
    const int ry0 = static_cast<int>(std::floor(region.y0()));
    const int rx1 = static_cast<int>(std::ceil(region.x1()));
    const int ry1 = static_cast<int>(std::ceil(region.y1()));
    require(rx0 >= 0 && ry0 >= 0 && rx1 <= iw && ry1 <= ih && rx1 > rx0 && ry1 > ry0,
            Errc::invalid_argument, "region outside image");

    std::vector<std::array<int, 2>> anchors;
    for (int y = ry0; y < ry1; y += n)
      for (int x = rx0; x < rx1; x += n)
        anchors.push_back({detail::clamp_int(x, 0, iw - n), detail::clamp_int(y, 0, ih - n)});

    Flow out;
    bool any_textured = false;
    double sum_dx = 0, sum_dy = 0;
    for (auto [ax, ay] : anchors) {
      if (block_stddev(full, ax, ay, n) >= params_.min_texture_stddev) any_textured = true;
      auto [dx, dy] = match_block(a, b, ax, ay, guess);
      sum_dx += dx;
      sum_dy += dy;
    }
    out.dx = sum_dx / static_cast<double>(anchors.size());
    out.dy = sum_dy / static_cast<double>(anchors.size());
    out.low_confidence = !any_textured;
    return out;
  }

 private:
  static double block_stddev(const Image& im, int x0, int y0, int n) {
    double s = 0, s2 = 0;
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) {
        const double v = im.at(static_cast<std::size_t>(x0 + x), static_cast<std::size_t>(y0 + y));
        s += v;
        s2 += v * v;
      }
    const double cnt = static_cast<double>(n) * n;
    const double var = std::max(0.0, s2 / cnt - (s / cnt) * (s / cnt));
    return std::sqrt(var);
  }

  std::array<double, 2> match_block(const Pyramid& a, const Pyramid& b, int ax, int ay,
                                    std::array<double, 2> guess) const {
    const int n = params_.block;
    const int top = static_cast<int>(std::min(a.levels.size(), b.levels.size())) - 1;
    const double top_scale = static_cast<double>(1 << top);
    int gx = static_cast<int>(std::lround(guess[0] / top_scale));
    int gy = static_cast<int>(std::lround(guess[1] / top_scale));
    double sub_x = 0, sub_y = 0;
    for (int level = top; level >= 0; --level) {
      const Image& la = a.levels[static_cast<std::size_t>(level)];
      const Image& lb = b.levels[static_cast<std::size_t>(level)];
      const int lax = detail::clamp_int(ax >> level, 0, static_cast<int>(la.width) - n);
      const int lay = detail::clamp_int(ay >> level, 0, static_cast<int>(la.height) - n);
      const int xlo = -lax, xhi = static_cast<int>(lb.width) - n - lax;
      const int ylo = -lay, yhi = static_cast<int>(lb.height) - n - lay;
      gx = detail::clamp_int(gx, xlo, xhi);
      gy = detail::clamp_int(gy, ylo, yhi);
      int best_dx = gx, best_dy = gy;
      double best = 1e300;
      const int r = params_.search_radius;
      for (int dy = std::max(ylo, gy - r); dy <= std::min(yhi, gy + r); ++dy)
        for (int dx = std::max(xlo, gx - r); dx <= std::min(xhi, gx + r); ++dx) {
          const double ssd = detail::block_ssd(la, lb, lax, lay, lax + dx, lay + dy, n);
          if (ssd < best) {
            best = ssd;
            best_dx = dx;
            best_dy = dy;
          }
        }
      if (level == 0 && best > 0) {
        if (best_dx > xlo && best_dx < xhi) {
          const double sm = detail::block_ssd(la, lb, lax, lay, lax + best_dx - 1, lay + best_dy, n);
          const double sp = detail::block_ssd(la, lb, lax, lay, lax + best_dx + 1, lay + best_dy, n);
          sub_x = detail::parabolic_offset(sm, best, sp);
        }
        if (best_dy > ylo && best_dy < yhi) {
          const double sm = detail::block_ssd(la, lb, lax, lay, lax + best_dx, lay + best_dy - 1, n);
          const double sp = detail::block_ssd(la, lb, lax, lay, lax + best_dx, lay + best_dy + 1, n);
          sub_y = detail::parabolic_offset(sm, best, sp);
        }
      }
      gx = best_dx;
      gy = best_dy;
      if (level > 0) {
        gx *= 2;
        gy *= 2;
      }
    }
    return {static_cast<double>(gx) + sub_x, static_cast<double>(gy) + sub_y};
  }

  FlowParams params_;
};

inline Flow estimate_region_flow(const Image& a, const Image& b, const Rect& region) {
  FlowEstimator est;
  return est.between(build_pyramid(a, est.params().pyramid_levels),
                     build_pyramid(b, est.params().pyramid_levels), region);
}

inline constexpr std::size_t kFlowDims = 2;

// O: n windows x window length x 10 ROIs x (dx, dy).
struct FeatureTensor {
  std::size_t n = 0, window = 0, rois = 0;
  std::vector<float> data;

  float at(std::size_t i, std::size_t s, std::size_t r, std::size_t d) const {
    return data[((i * window + s) * rois + r) * kFlowDims + d];
  }
  float& at(std::size_t i, std::size_t s, std::size_t r, std::size_t d) {
    return data[((i * window + s) * rois + r) * kFlowDims + d];
  }
  // One clip's [window, rois, 2] block.
  const float* clip(std::size_t i) const { return data.data() + i * window * rois * kFlowDims; }
};

// Flows of one clip against its own first frame. The nose flow seeds and
// re-anchors each ROI search (integer shift) and its unrounded value is
// subtracted from the measured ROI flows, so pure head motion cancels.
// Row 0 (the clip's first frame against itself) is exactly zero.
inline void extract_clip_features(const std::vector<const Pyramid*>& frames, const RoiLayout& layout,
                                  const FlowEstimator& est, float* out) {
  const std::size_t w = frames.size();
  std::fill(out, out + w * kNumRois * kFlowDims, 0.0f);
  std::array<double, 2> nose_guess = {0.0, 0.0};
  std::size_t prev_frame = 0;
  for (std::size_t s = 1; s < w; ++s) {
    float* row = out + s * kNumRois * kFlowDims;
    if (frames[s] == frames[0]) continue;
    if (frames[s] == frames[prev_frame] && prev_frame != 0) {
      std::memcpy(row, out + prev_frame * kNumRois * kFlowDims,
                  kNumRois * kFlowDims * sizeof(float));
      continue;
    }
    const Flow nose = est.between(*frames[0], *frames[s], layout.nose_rect, nose_guess);
    nose_guess = {nose.dx, nose.dy};
    const std::array<double, 2> roi_guess = {std::round(nose.dx), std::round(nose.dy)};
    for (std::size_t r = 0; r < kNumRois; ++r) {
      const Flow total = est.between(*frames[0], *frames[s], layout.rois[r], roi_guess);
      row[r * kFlowDims + 0] = static_cast<float>(total.dx - nose.dx);
      row[r * kFlowDims + 1] = static_cast<float>(total.dy - nose.dy);
    }
    prev_frame = s;
  }
}

inline Rect landmarks_bbox(const Landmarks& lm, std::size_t image_w, std::size_t image_h) {
  double x0 = lm[0][0], x1 = lm[0][0], y0 = lm[0][1], y1 = lm[0][1];
  for (const auto& p : lm) {
    x0 = std::min(x0, p[0]);
    x1 = std::max(x1, p[0]);
    y0 = std::min(y0, p[1]);
    y1 = std::max(y1, p[1]);
  }
  const double mx = 0.15 * (x1 - x0), my = 0.15 * (y1 - y0);
  x0 = std::max(0.0, x0 - mx);
  y0 = std::max(0.0, y0 - my);
  x1 = std::min(static_cast<double>(image_w), x1 + mx);
  y1 = std::min(static_cast<double>(image_h), y1 + my);
  return Rect{0.5 * (x0 + x1), 0.5 * (y0 + y1), 0.5 * (x1 - x0), 0.5 * (y1 - y0)};
}

inline FeatureTensor extract_video_features(const std::vector<Image>& frames,
                                            const std::vector<Landmarks>& landmarks, std::size_t w,
                                            const FlowEstimator& est = FlowEstimator()) {
  require(!frames.empty(), Errc::data, "empty video");
  require(frames.size() == landmarks.size(), Errc::data,
          "frame count mismatch between video and landmarks");
  const WindowPlan plan = partition_windows(frames.size(), w);

  std::vector<Pyramid> pyramids(frames.size());
  parallel_for(frames.size(), [&](std::size_t i) {
    pyramids[i] = build_pyramid(frames[i], est.params().pyramid_levels);
  });

  FeatureTensor out;
  out.n = plan.clips();
  out.window = w;
  out.rois = kNumRois;
  out.data.assign(out.n * w * kNumRois * kFlowDims, 0.0f);

  parallel_for(plan.clips(), [&](std::size_t i) {
    const std::size_t f0 = plan.frame_of(i, 0);
    const RoiLayout layout =
        build_roi_layout(landmarks[f0], landmarks_bbox(landmarks[f0], frames[0].width, frames[0].height));
    std::vector<const Pyramid*> clip(w);
    for (std::size_t s = 0; s < w; ++s) clip[s] = &pyramids[plan.frame_of(i, s)];
    extract_clip_features(clip, layout, est, out.data.data() + i * w * kNumRois * kFlowDims);
  });
  return out;
}

// ---- feature file format ----

inline constexpr char kFeatureMagic[8] = {'S', 'P', 'O', 'T', '-', 'O', 'F', '1'};
inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_features(const std::string& path, const FeatureTensor& t) {
  require(t.data.size() == t.n * t.window * t.rois * kFlowDims, Errc::invalid_argument,
          "feature tensor shape mismatch");
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open feature file for writing: " + path);
  if (std::fwrite(kFeatureMagic, 1, 8, f.get()) != 8) raise(Errc::io, "short write");
  write_u32le(f.get(), kFeatureVersion);
  write_u32le(f.get(), static_cast<std::uint32_t>(t.n));
  write_u32le(f.get(), static_cast<std::uint32_t>(t.window));
  write_u32le(f.get(), static_cast<std::uint32_t>(t.rois));
  write_u32le(f.get(), static_cast<std::uint32_t>(kFlowDims));
  write_f32_block(f.get(), t.data.data(), t.data.size());
}

inline FeatureTensor read_features(const std::string& path) {
  FilePtr f = open_file(path, "rb");
  require(f != nullptr, Errc::io, "cannot open feature file: " + path);
  char magic[8];
  if (std::fread(magic, 1, 8, f.get()) != 8 || std::memcmp(magic, kFeatureMagic, 8) != 0)
    raise(Errc::data, "bad magic in feature file: " + path);
  std::uint32_t version = 0, n = 0, w = 0, r = 0, d = 0;
  if (!read_u32le(f.get(), version) || !read_u32le(f.get(), n) || !read_u32le(f.get(), w) ||
      !read_u32le(f.get(), r) || !read_u32le(f.get(), d))
    raise(Errc::data, "truncated payload in feature file: " + path);
  require(version == kFeatureVersion, Errc::data, "unsupported feature file version");
  require(d == kFlowDims && r == kNumRois, Errc::data, "dimension overflow in feature file");
  const std::uint64_t numel = static_cast<std::uint64_t>(n) * w * r * d;
  require(numel <= (1ull << 31), Errc::data, "dimension overflow in feature file");
  FeatureTensor t;
  t.n = n;
  t.window = w;
  t.rois = r;
  t.data.resize(numel);
  if (!read_f32_block(f.get(), t.data.data(), t.data.size()))
    raise(Errc::data, "truncated payload in feature file: " + path);
  return t;
}

// ---- landmarks CSV ----

inline void write_landmarks_csv(const std::string& path, const std::vector<Landmarks>& lm) {
  std::ofstream out(path);
  require(out.good(), Errc::io, "cannot open landmarks file for writing: " + path);
  out << "frame";
  for (int i = 0; i < 68; ++i) out << ",x" << i << ",y" << i;
  out << "\n";
  for (std::size_t f = 0; f < lm.size(); ++f) {
    out << f;
    char buf[64];
    for (const auto& p : lm[f]) {
      std::snprintf(buf, sizeof(buf), ",%.4f,%.4f", p[0], p[1]);
      out << buf;
    }
    out << "\n";
  }
  require(out.good(), Errc::io, "short write to landmarks file");
}

inline std::vector<Landmarks> read_landmarks_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "landmarks not found: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::data, "empty landmarks file");
  std::vector<Landmarks> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    require(static_cast<bool>(std::getline(ss, cell, ',')), Errc::data, "malformed landmarks row");
    const long frame = std::strtol(cell.c_str(), nullptr, 10);
    require(frame == static_cast<long>(out.size()), Errc::data,
            "landmarks rows must cover frames 0..N-1 in order");
    Landmarks lm;
    for (int i = 0; i < 68; ++i) {
      for (int d = 0; d < 2; ++d) {
        require(static_cast<bool>(std::getline(ss, cell, ',')), Errc::data,
                "landmarks row has too few columns");
        lm[i][d] = std::strtod(cell.c_str(), nullptr);
      }
    }
    out.push_back(lm);
  }
  require(!out.empty(), Errc::data, "landmarks file has no rows");
  return out;
}

}  // namespace spotgcn
