#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/facial_graph.hpp"
#include "spotgcn/image.hpp"
#include "spotgcn/motion.hpp"
#include "spotgcn/rng.hpp"

namespace spotgcn {

struct SynthSpec {
  std::size_t subjects = 6;
  std::size_t videos_per_subject = 4;
  std::size_t frames_per_video = 500;
  std::size_t image_size = 128;
  std::size_t window = 17;
  std::int64_t micro_min = 6, micro_max = 14;
  std::int64_t macro_min = 16, macro_max = 60;
  std::size_t micro_events_min = 1, micro_events_max = 2;
  std::size_t macro_events_min = 1, macro_events_max = 2;
  // Peak displacement in pixels at the event apex.
  double micro_peak = 2.0;
  double macro_peak = 3.6;
  double drift_amplitude = 2.5;
  double pixel_noise = 1.0;
  double feature_noise = 0.05;
  bool blinks = false;
  bool direct_features = false;
  std::uint64_t seed = 1;

  void validate() const {
    require(subjects > 0 && videos_per_subject > 0, Errc::invalid_argument,
            "need at least one subject and one video");
    require(image_size >= 64, Errc::invalid_argument, "image size too small");
    require(window % 2 == 1 && window >= 3, Errc::invalid_argument, "window must be odd and >= 3");
    require(micro_min >= 3 && micro_min <= micro_max && micro_max <= 14, Errc::invalid_argument,
            "micro durations must lie in [3, 14]");
    require(macro_min >= 16 && macro_min <= macro_max, Errc::invalid_argument,
            "macro durations must be at least 16");
    require(frames_per_video >= static_cast<std::size_t>(macro_max) + 2 * window,
            Errc::invalid_argument, "videos too short for the longest event");
    require(micro_peak > 0 && macro_peak > 0 && drift_amplitude >= 0 && pixel_noise >= 0 &&
                feature_noise >= 0,
            Errc::invalid_argument, "magnitudes must be non-negative");
  }
};

// Raised-cosine displacement magnitude: zero with zero slope at onset and
// offset, maximal at the apex, continuously differentiable throughout.
inline double motion_profile(double t, std::int64_t onset, std::int64_t apex, std::int64_t offset,
                             double peak) {
  require(onset < apex && apex < offset, Errc::invalid_argument,
          "degenerate event ordering: onset < apex < offset required");
  const double on = static_cast<double>(onset), ap = static_cast<double>(apex),
               off = static_cast<double>(offset);
  if (t <= on || t >= off) return 0;
  const double phase = t <= ap ? (t - on) / (ap - on) : (off - t) / (off - ap);
  return peak * 0.5 * (1.0 - std::cos(kPi * phase));
}

struct SynthEvent {
  ExprType type = ExprType::macro;
  std::int64_t onset = 0, apex = 0, offset = 0;
  double peak = 0;
  std::vector<std::size_t> rois;
  std::vector<std::array<double, 2>> dirs;
};

struct BlinkEvent {
  std::int64_t start = 0, length = 0;
  double peak = 0;
};

struct SynthVideoPlan {
  std::string subject, video;
  std::size_t n_frames = 0;
  std::vector<SynthEvent> events;
  std::vector<BlinkEvent> blinks;
  // Sinusoidal head drift: amplitude, frequency (cycles/frame), phase per axis.
  std::array<double, 3> drift_x{}, drift_y{};

  std::array<double, 2> drift_at(double t) const {
    return {drift_x[0] * std::sin(2.0 * kPi * drift_x[1] * t + drift_x[2]),
            drift_y[0] * std::sin(2.0 * kPi * drift_y[1] * t + drift_y[2])};
  }
};

namespace detail {

inline constexpr double kEventMargin = 20;
inline constexpr std::uint64_t kSubjectStream = 0x632BE59BD9B4E019ull;
inline constexpr std::uint64_t kVideoStream = 0xD1B54A32D192ED03ull;

inline std::uint64_t substream(std::uint64_t seed, std::uint64_t salt, std::uint64_t index) {
  SplitMix64 mix(seed ^ (salt * (index + 1)));
  return mix.next_u64();
}

// Canonical 68-point layout in a 128px frame; scaled to the target size.
inline Landmarks face_template(std::size_t image_size) {
  Landmarks lm{};
  const auto put = [&](std::size_t i, double u, double v) {
    lm[i] = {24.0 + 80.0 * u, 18.0 + 94.0 * v};
  };
  for (std::size_t i = 0; i <= 16; ++i) {
    const double phi = kPi * static_cast<double>(i) / 16.0;
    put(i, 0.5 - 0.48 * std::cos(phi), 0.25 + 0.72 * std::sin(phi));
  }
  const double brow_u[5] = {0.13, 0.2, 0.275, 0.35, 0.42};
  for (std::size_t j = 0; j < 5; ++j) {
    const double dip = 0.03 * std::sin(kPi * static_cast<double>(j) / 4.0);
    put(17 + j, brow_u[j], 0.22 - dip);
    put(22 + j, 1.0 - brow_u[4 - j], 0.22 - 0.03 * std::sin(kPi * static_cast<double>(4 - j) / 4.0));
  }
  for (std::size_t j = 0; j < 4; ++j) put(27 + j, 0.5, 0.28 + 0.08 * static_cast<double>(j));
  for (std::size_t j = 0; j < 5; ++j) put(31 + j, 0.42 + 0.04 * static_cast<double>(j), 0.58);
  const auto eye = [&](std::size_t base, double cx) {
    put(base + 0, cx - 0.07, 0.3);
    put(base + 1, cx - 0.035, 0.285);
    put(base + 2, cx + 0.03, 0.285);
    put(base + 3, cx + 0.07, 0.3);
    put(base + 4, cx + 0.03, 0.315);
    put(base + 5, cx - 0.035, 0.315);
  };
  eye(36, 0.3);
  eye(42, 0.7);
  for (std::size_t j = 0; j < 12; ++j) {
    const double th = kPi + kPi * static_cast<double>(j) / 6.0;
    put(48 + j, 0.5 + 0.16 * std::cos(th), 0.78 + 0.07 * std::sin(th));
  }
  for (std::size_t j = 0; j < 8; ++j) {
    const double th = kPi + kPi * static_cast<double>(j) / 4.0;
    put(60 + j, 0.5 + 0.10 * std::cos(th), 0.78 + 0.035 * std::sin(th));
  }
  const double s = static_cast<double>(image_size) / 128.0;
  for (auto& p : lm) {
    p[0] *= s;
    p[1] *= s;
  }
  return lm;
}

inline std::array<std::array<double, 2>, kNumRois> roi_centers(const Landmarks& lm) {
  std::array<std::array<double, 2>, kNumRois> centers{};
  for (std::size_t r = 0; r < kNumRois; ++r) {
    if (kRoiAnchors[r] >= 0) {
      centers[r] = lm[static_cast<std::size_t>(kRoiAnchors[r])];
    } else {
      centers[r] = {0.5 * (lm[kGlabellaA][0] + lm[kGlabellaB][0]),
                    0.5 * (lm[kGlabellaA][1] + lm[kGlabellaB][1])};
    }
  }
  return centers;
}

// Band-limited value noise: three bilinearly interpolated octaves.
inline Image make_texture(std::size_t size, SplitMix64& rng) {
  Image img = Image::zeros(size, size);
  const std::size_t cells[3] = {8, 16, 32};
  const double amps[3] = {45, 28, 16};
  for (std::size_t o = 0; o < 3; ++o) {
    const std::size_t n = cells[o] + 1;
    std::vector<double> grid(n * n);
    for (auto& g : grid) g = rng.uniform(-1.0, 1.0);
    const double step = static_cast<double>(cells[o]) / static_cast<double>(size);
    for (std::size_t y = 0; y < size; ++y) {
      const double gv = static_cast<double>(y) * step;
      const std::size_t y0 = std::min(cells[o] - 1, static_cast<std::size_t>(gv));
      const double fy = gv - static_cast<double>(y0);
      for (std::size_t x = 0; x < size; ++x) {
        const double gu = static_cast<double>(x) * step;
        const std::size_t x0 = std::min(cells[o] - 1, static_cast<std::size_t>(gu));
        const double fx = gu - static_cast<double>(x0);
        const double a = grid[y0 * n + x0], b = grid[y0 * n + x0 + 1];
        const double c = grid[(y0 + 1) * n + x0], d = grid[(y0 + 1) * n + x0 + 1];
        img.at(x, y) += static_cast<float>(
            amps[o] * ((a * (1 - fx) + b * fx) * (1 - fy) + (c * (1 - fx) + d * fx) * fy));
      }
    }
  }
  for (auto& p : img.pixels) p = std::clamp(p + 128.0f, 25.0f, 230.0f);
  return img;
}

inline float bilinear_sample(const Image& img, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
  const std::size_t x0 = std::min(img.width - 2, static_cast<std::size_t>(x));
  const std::size_t y0 = std::min(img.height - 2, static_cast<std::size_t>(y));
  const double fx = x - static_cast<double>(x0), fy = y - static_cast<double>(y0);
  const double top = img.at(x0, y0) * (1 - fx) + img.at(x0 + 1, y0) * fx;
  const double bot = img.at(x0, y0 + 1) * (1 - fx) + img.at(x0 + 1, y0 + 1) * fx;
  return static_cast<float>(top * (1 - fy) + bot * fy);
}

}  // namespace detail

inline SynthVideoPlan plan_video(const SynthSpec& spec, std::size_t subject_idx,
                                 std::size_t video_idx) {
  spec.validate();
  SynthVideoPlan plan;
  char name[16];
  std::snprintf(name, sizeof(name), "s%02zu", subject_idx + 1);
  plan.subject = name;
  std::snprintf(name, sizeof(name), "v%02zu", video_idx + 1);
  plan.video = name;
  plan.n_frames = spec.frames_per_video;
  SplitMix64 rng(detail::substream(spec.seed, detail::kSubjectStream, subject_idx) ^
                 detail::substream(spec.seed, detail::kVideoStream, video_idx));

  const double amp = spec.drift_amplitude;
  plan.drift_x = {amp * rng.uniform(0.6, 1.0), rng.uniform(0.002, 0.008), rng.uniform(0.0, 2.0 * kPi)};
  plan.drift_y = {amp * rng.uniform(0.6, 1.0), rng.uniform(0.002, 0.008), rng.uniform(0.0, 2.0 * kPi)};

  // Bump centers skip the philtrum region (node 7): its rendered footprint
  // would overlap the nose anchor blocks and corrupt the alignment signal.
  // The philtrum node still sees motion through neighboring bumps.
  static const std::vector<std::vector<std::size_t>> kMicroGroups = {
      {0, 1, 4}, {2, 3, 4}, {5, 8}, {6, 8}, {0, 1, 2, 3, 4}};
  static const std::vector<std::vector<std::size_t>> kMacroGroups = {
      {5, 6, 8, 9}, {0, 1, 2, 3, 4}, {5, 6, 8}, {8, 9}};

  const double margin = detail::kEventMargin;
  const auto place = [&](ExprType type, std::size_t count) {
    for (std::size_t e = 0; e < count; ++e) {
      const std::int64_t dmin = type == ExprType::micro ? spec.micro_min : spec.macro_min;
      const std::int64_t dmax = type == ExprType::micro ? spec.micro_max : spec.macro_max;
      for (int attempt = 0; attempt < 200; ++attempt) {
        const std::int64_t dur = dmin + static_cast<std::int64_t>(
                                            rng.next_below(static_cast<std::uint64_t>(dmax - dmin + 1)));
        const std::int64_t span = static_cast<std::int64_t>(spec.frames_per_video) - dur -
                                  2 * static_cast<std::int64_t>(margin);
        if (span <= 0) break;
        const std::int64_t onset = static_cast<std::int64_t>(margin) +
                                   static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(span)));
        const std::int64_t offset = onset + dur - 1;
        bool clear = true;
        for (const auto& other : plan.events)
          if (!(offset + margin < other.onset || onset > other.offset + margin)) {
            clear = false;
            break;
          }
        if (!clear) continue;
        SynthEvent ev;
        ev.type = type;
        ev.onset = onset;
        ev.offset = offset;
        const double rise = rng.uniform(0.38, 0.62);
        ev.apex = onset + std::clamp<std::int64_t>(
                              std::llround(static_cast<double>(dur - 1) * rise), 1, dur - 2);
        const double base_peak = type == ExprType::micro ? spec.micro_peak : spec.macro_peak;
        ev.peak = base_peak * rng.uniform(0.8, 1.0);
        const auto& groups = type == ExprType::micro ? kMicroGroups : kMacroGroups;
        ev.rois = groups[rng.next_below(groups.size())];
        const double base_angle = rng.uniform(0.0, 2.0 * kPi);
        for (std::size_t r = 0; r < ev.rois.size(); ++r) {
          const double a = base_angle + rng.uniform(-0.4, 0.4);
          ev.dirs.push_back({std::cos(a), std::sin(a)});
        }
        plan.events.push_back(std::move(ev));
        break;
      }
    }
  };
  place(ExprType::macro, spec.macro_events_min +
                             rng.next_below(spec.macro_events_max - spec.macro_events_min + 1));
  place(ExprType::micro, spec.micro_events_min +
                             rng.next_below(spec.micro_events_max - spec.micro_events_min + 1));
  std::sort(plan.events.begin(), plan.events.end(),
            [](const SynthEvent& a, const SynthEvent& b) { return a.onset < b.onset; });

  if (spec.blinks) {
    const std::size_t n_blinks = 2 + rng.next_below(4);
    for (std::size_t b = 0; b < n_blinks; ++b) {
      BlinkEvent blink;
      blink.length = 3 + static_cast<std::int64_t>(rng.next_below(3));
      blink.start = static_cast<std::int64_t>(
          rng.next_below(spec.frames_per_video - static_cast<std::size_t>(blink.length)));
      blink.peak = rng.uniform(1.0, 1.8);
      plan.blinks.push_back(blink);
    }
  }
  return plan;
}

inline std::vector<AnnotationClip> plan_annotations(const SynthVideoPlan& plan) {
  std::vector<AnnotationClip> out;
  for (const auto& ev : plan.events) {
    AnnotationClip c;
    c.subject = plan.subject;
    c.video = plan.video;
    c.type = ev.type;
    c.onset = ev.onset;
    c.apex = ev.apex;
    c.offset = ev.offset;
    out.push_back(std::move(c));
  }
  return out;
}

struct SubjectAssets {
  Image texture;
  Landmarks face{};
};

inline SubjectAssets make_subject_assets(const SynthSpec& spec, std::size_t subject_idx) {
  SplitMix64 rng(detail::substream(spec.seed, detail::kSubjectStream, subject_idx));
  SubjectAssets assets;
  assets.texture = detail::make_texture(spec.image_size, rng);
  assets.face = detail::face_template(spec.image_size);
  const double jitter = 1.5 * static_cast<double>(spec.image_size) / 128.0;
  for (auto& p : assets.face) {
    p[0] += rng.uniform(-jitter, jitter);
    p[1] += rng.uniform(-jitter, jitter);
  }
  return assets;
}

struct RenderedVideo {
  std::vector<Image> frames;
  std::vector<Landmarks> landmarks;
};

// Warps the subject texture: rigid sinusoidal drift everywhere plus
// flat-top displacement bumps at the active regions, then pixel noise.
// The flat core must cover a block-matching footprint (the ROI rectangle
// padded by one block) so the measured flow equals the planted peak; the
// cos^2 skirt must die out before the nose anchor blocks.
inline RenderedVideo render_video(const SynthSpec& spec, const SynthVideoPlan& plan,
                                  const SubjectAssets& assets) {
  spec.validate();
  const std::size_t size = spec.image_size;
  const double bump_r0 = 0.08 * static_cast<double>(size);
  const double bump_r1 = 0.115 * static_cast<double>(size);
  const auto centers = detail::roi_centers(assets.face);
  const std::array<double, 2> eye_l = {
      0.5 * (assets.face[36][0] + assets.face[39][0]),
      0.5 * (assets.face[36][1] + assets.face[39][1])};
  const std::array<double, 2> eye_r = {
      0.5 * (assets.face[42][0] + assets.face[45][0]),
      0.5 * (assets.face[42][1] + assets.face[45][1])};

  RenderedVideo out;
  out.frames.resize(plan.n_frames);
  out.landmarks.resize(plan.n_frames);
  SplitMix64 noise_rng(detail::substream(spec.seed, detail::kVideoStream,
                                         std::hash<std::string>{}(plan.subject + "/" + plan.video)));

  struct Bump {
    std::array<double, 2> center, dir;
    double magnitude, r0, r1;
  };
  for (std::size_t t = 0; t < plan.n_frames; ++t) {
    const auto drift = plan.drift_at(static_cast<double>(t));
    Image frame = Image::zeros(size, size);
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x)
        frame.at(x, y) = detail::bilinear_sample(assets.texture, static_cast<double>(x) - drift[0],
                                                 static_cast<double>(y) - drift[1]);

    std::vector<Bump> bumps;
    for (const auto& ev : plan.events) {
      if (static_cast<std::int64_t>(t) <= ev.onset || static_cast<std::int64_t>(t) >= ev.offset)
        continue;
      const double m = motion_profile(static_cast<double>(t), ev.onset, ev.apex, ev.offset, ev.peak);
      for (std::size_t r = 0; r < ev.rois.size(); ++r) {
        const auto& c = centers[ev.rois[r]];
        bumps.push_back({{c[0] + drift[0], c[1] + drift[1]}, ev.dirs[r], m, bump_r0, bump_r1});
      }
    }
    for (const auto& blink : plan.blinks) {
      const std::int64_t rel = static_cast<std::int64_t>(t) - blink.start;
      if (rel <= 0 || rel >= blink.length) continue;
      const double m =
          blink.peak * (1.0 - std::abs(2.0 * static_cast<double>(rel) / static_cast<double>(blink.length) - 1.0));
      const double blink_radius = 0.0625 * static_cast<double>(size);
      for (const auto& eye : {eye_l, eye_r})
        bumps.push_back({{eye[0] + drift[0], eye[1] + drift[1]}, {0.0, 1.0}, m, 0.0, blink_radius});
    }
    for (const auto& bump : bumps) {
      const std::int64_t x0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(bump.center[0] - bump.r1));
      const std::int64_t x1 = std::min<std::int64_t>(static_cast<std::int64_t>(size) - 1,
                                                     static_cast<std::int64_t>(bump.center[0] + bump.r1) + 1);
      const std::int64_t y0 = std::max<std::int64_t>(0, static_cast<std::int64_t>(bump.center[1] - bump.r1));
      const std::int64_t y1 = std::min<std::int64_t>(static_cast<std::int64_t>(size) - 1,
                                                     static_cast<std::int64_t>(bump.center[1] + bump.r1) + 1);
      for (std::int64_t y = y0; y <= y1; ++y)
        for (std::int64_t x = x0; x <= x1; ++x) {
          const double dx = static_cast<double>(x) - bump.center[0];
          const double dy = static_cast<double>(y) - bump.center[1];
          const double d = std::sqrt(dx * dx + dy * dy);
          if (d >= bump.r1) continue;
          const double fall =
              d <= bump.r0 ? 1.0 : std::cos(0.5 * kPi * (d - bump.r0) / (bump.r1 - bump.r0));
          const double disp = bump.magnitude * fall * fall;
          frame.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) =
              detail::bilinear_sample(assets.texture,
                                      static_cast<double>(x) - drift[0] - disp * bump.dir[0],
                                      static_cast<double>(y) - drift[1] - disp * bump.dir[1]);
        }
    }
    if (spec.pixel_noise > 0)
      for (auto& p : frame.pixels)
        p = std::clamp(p + static_cast<float>(noise_rng.gaussian(0.0, spec.pixel_noise)), 0.0f,
                       255.0f);
    Landmarks lm = assets.face;
    for (auto& p : lm) {
      p[0] += drift[0];
      p[1] += drift[1];
    }
    out.frames[t] = std::move(frame);
    out.landmarks[t] = lm;
  }
  return out;
}

// Idealized window features: the per-region displacement difference
// between each window slot and the window's first frame, drift already
// cancelled, plus a little measurement noise (slot 0 stays exactly zero).
inline FeatureTensor direct_features(const SynthSpec& spec, const SynthVideoPlan& plan) {
  spec.validate();
  const WindowPlan windows = partition_windows(plan.n_frames, spec.window);
  FeatureTensor ft;
  ft.n = plan.n_frames;
  ft.window = spec.window;
  ft.rois = kNumRois;
  ft.data.assign(ft.n * ft.window * ft.rois * kFlowDims, 0.0f);
  SplitMix64 noise_rng(detail::substream(spec.seed, detail::kVideoStream,
                                         std::hash<std::string>{}(plan.subject + "/" + plan.video)) ^
                       0x5EEDull);

  const auto displacement = [&](std::int64_t frame, std::size_t roi) -> std::array<double, 2> {
    std::array<double, 2> d{};
    for (const auto& ev : plan.events) {
      if (frame <= ev.onset || frame >= ev.offset) continue;
      for (std::size_t r = 0; r < ev.rois.size(); ++r) {
        if (ev.rois[r] != roi) continue;
        const double m = motion_profile(static_cast<double>(frame), ev.onset, ev.apex, ev.offset, ev.peak);
        d[0] += m * ev.dirs[r][0];
        d[1] += m * ev.dirs[r][1];
      }
    }
    return d;
  };

  for (std::size_t i = 0; i < ft.n; ++i) {
    const std::int64_t f0 = static_cast<std::int64_t>(windows.frame_of(i, 0));
    for (std::size_t s = 1; s < ft.window; ++s) {
      const std::int64_t fs = static_cast<std::int64_t>(windows.frame_of(i, s));
      for (std::size_t r = 0; r < ft.rois; ++r) {
        const auto a = displacement(f0, r);
        const auto b = displacement(fs, r);
        ft.at(i, s, r, 0) =
            static_cast<float>(b[0] - a[0] + noise_rng.gaussian(0.0, spec.feature_noise));
        ft.at(i, s, r, 1) =
            static_cast<float>(b[1] - a[1] + noise_rng.gaussian(0.0, spec.feature_noise));
      }
    }
  }
  return ft;
}

struct SynthVideoData {
  std::string subject, video;
  RenderedVideo rendered;
  FeatureTensor features;
};

struct SynthDataset {
  std::vector<AnnotationClip> annotations;
  std::vector<SynthVideoData> videos;
};

inline SynthDataset generate(const SynthSpec& spec) {
  spec.validate();
  SynthDataset ds;
  for (std::size_t si = 0; si < spec.subjects; ++si) {
    SubjectAssets assets;
    if (!spec.direct_features) assets = make_subject_assets(spec, si);
    for (std::size_t vi = 0; vi < spec.videos_per_subject; ++vi) {
      const SynthVideoPlan plan = plan_video(spec, si, vi);
      SynthVideoData data;
      data.subject = plan.subject;
      data.video = plan.video;
      if (spec.direct_features)
        data.features = direct_features(spec, plan);
      else
        data.rendered = render_video(spec, plan, assets);
      for (auto& a : plan_annotations(plan)) ds.annotations.push_back(std::move(a));
      ds.videos.push_back(std::move(data));
    }
  }
  return ds;
}

// Writes root/<subject>/<video>/frames/frame_%06d.pgm plus a per-video
// landmarks.csv (or features.of1 in direct-feature mode) and a dataset
// level annotations.csv.
inline std::vector<AnnotationClip> generate_to_dir(const SynthSpec& spec, const std::string& root) {
  spec.validate();
  std::error_code ec;
  std::filesystem::create_directories(root, ec);
  require(!ec, Errc::io, "cannot create output directory: " + root);
  std::vector<AnnotationClip> annotations;
  for (std::size_t si = 0; si < spec.subjects; ++si) {
    SubjectAssets assets;
    if (!spec.direct_features) assets = make_subject_assets(spec, si);
    for (std::size_t vi = 0; vi < spec.videos_per_subject; ++vi) {
      const SynthVideoPlan plan = plan_video(spec, si, vi);
      const std::string video_dir = root + "/" + plan.subject + "/" + plan.video;
      if (spec.direct_features) {
        std::filesystem::create_directories(video_dir, ec);
        require(!ec, Errc::io, "cannot create output directory: " + video_dir);
        write_features(video_dir + "/features.of1", direct_features(spec, plan));
      } else {
        std::filesystem::create_directories(video_dir + "/frames", ec);
        require(!ec, Errc::io, "cannot create output directory: " + video_dir);
        const RenderedVideo rendered = render_video(spec, plan, assets);
        char name[32];
        for (std::size_t t = 0; t < rendered.frames.size(); ++t) {
          std::snprintf(name, sizeof(name), "/frames/frame_%06zu.pgm", t);
          write_pgm(video_dir + name, rendered.frames[t]);
        }
        write_landmarks_csv(video_dir + "/landmarks.csv", rendered.landmarks);
      }
      for (auto& a : plan_annotations(plan)) annotations.push_back(std::move(a));
    }
  }
  write_annotations_csv(root + "/annotations.csv", annotations);
  return annotations;
}

}  // namespace spotgcn
