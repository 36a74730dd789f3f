#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <spotgcn/spotgcn.hpp>

#include "oracles.hpp"

using namespace spotgcn;

namespace {

// Smooth, strongly textured test pattern with only low spatial frequencies
// so block matching and its parabolic refinement behave like the analysis
// they assume.
double pattern(double x, double y) {
  return 128.0 + 55.0 * std::sin(0.22 * x + 0.3) * std::cos(0.19 * y) +
         35.0 * std::sin(0.07 * (x + y)) + 20.0 * std::cos(0.13 * x - 0.11 * y + 0.5);
}

Image pattern_image(std::size_t w, std::size_t h, double shift_x = 0.0, double shift_y = 0.0) {
  Image im = Image::zeros(w, h);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      im.at(x, y) = static_cast<float>(
          pattern(static_cast<double>(x) - shift_x, static_cast<double>(y) - shift_y));
  return im;
}

}  // namespace

TEST_CASE("window partition pads by half the window") {
  const WindowPlan p = partition_windows(5, 17);
  REQUIRE(p.pad == 8);
  REQUIRE(p.padded_length() == 21);
  REQUIRE(p.clips() == 5);
  // Clip i is centered on frame i: the center slot maps back to i.
  for (std::size_t i = 0; i < 5; ++i) REQUIRE(p.frame_of(i, 8) == i);
  REQUIRE(p.frame_of(0, 0) == 0);
  REQUIRE(p.frame_of(4, 16) == 4);
}

TEST_CASE("window partition clamps padding to the clip range") {
  const WindowPlan one = partition_windows(1, 3);
  for (std::size_t s = 0; s < 3; ++s) REQUIRE(one.frame_of(0, s) == 0);

  const WindowPlan big = partition_windows(100, 17);
  REQUIRE(big.clips() == 100);
  REQUIRE(big.frame_of(50, 8) == 50);
  REQUIRE(big.frame_of(50, 0) == 42);
  REQUIRE(big.frame_of(50, 16) == 58);
  REQUIRE(big.frame_of(0, 0) == 0);
  REQUIRE(big.frame_of(99, 16) == 99);
}

TEST_CASE("window partition validates its arguments") {
  REQUIRE_THROWS_WITH(partition_windows(10, 16),
                      Catch::Matchers::ContainsSubstring("window must be odd"));
  REQUIRE_THROWS_WITH(partition_windows(0, 17), Catch::Matchers::ContainsSubstring("empty video"));
}

TEST_CASE("flow between identical frames is exactly zero") {
  const Image a = pattern_image(96, 96);
  const Flow f = estimate_region_flow(a, a, Rect{48, 48, 12, 12});
  REQUIRE(f.dx == 0.0);
  REQUIRE(f.dy == 0.0);
  REQUIRE_FALSE(f.low_confidence);
}

TEST_CASE("flow recovers an integer shift") {
  const Image a = pattern_image(128, 128);
  const Image b = pattern_image(128, 128, 3.0, 0.0);
  const Flow f = estimate_region_flow(a, b, Rect{64, 64, 14, 14});
  REQUIRE(f.dx == Catch::Approx(3.0).margin(0.25));
  REQUIRE(f.dy == Catch::Approx(0.0).margin(0.25));
}

TEST_CASE("flow resolves sub-pixel displacements") {
  const Image a = pattern_image(128, 128);
  const Image b = pattern_image(128, 128, 1.5, -2.0);
  const Flow f = estimate_region_flow(a, b, Rect{64, 64, 14, 14});
  REQUIRE(f.dx == Catch::Approx(1.5).margin(0.3));
  REQUIRE(f.dy == Catch::Approx(-2.0).margin(0.3));
}

TEST_CASE("flow flags textureless regions") {
  const Image flat = Image::zeros(64, 64);
  const Flow f = estimate_region_flow(flat, flat, Rect{32, 32, 10, 10});
  REQUIRE(f.low_confidence);
}

TEST_CASE("flow rejects a region outside the image") {
  const Image a = pattern_image(64, 64);
  REQUIRE_THROWS_WITH(estimate_region_flow(a, a, Rect{60, 32, 10, 10}),
                      Catch::Matchers::ContainsSubstring("region outside image"));
}

TEST_CASE("a static video produces exactly zero features") {
  const std::size_t size = 128;
  const Image frame = pattern_image(size, size);
  const Landmarks lm = detail::face_template(size);
  const std::vector<Image> frames(6, frame);
  const std::vector<Landmarks> marks(6, lm);
  const FeatureTensor ft = extract_video_features(frames, marks, 5);
  REQUIRE(ft.n == 6);
  REQUIRE(ft.window == 5);
  REQUIRE(ft.rois == kNumRois);
  for (float v : ft.data) REQUIRE(v == 0.0f);
}

TEST_CASE("global drift cancels through the alignment anchor") {
  const std::size_t size = 160;
  const Landmarks lm = detail::face_template(size);
  std::vector<Image> frames;
  std::vector<Landmarks> marks;
  for (int t = 0; t < 6; ++t) {
    frames.push_back(pattern_image(size, size, 1.0 * t, 0.5 * t));
    marks.push_back(lm);
  }
  const FeatureTensor ft = extract_video_features(frames, marks, 5);
  // Sub-pixel refinement carries up to ~0.15 px of phase-dependent bias per
  // region and the anchor subtraction can double it; uncancelled drift would
  // instead accumulate to the raw shift (several px). Bound each slot well
  // below the drift and the mean at the alignment budget.
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < ft.n; ++i)
    for (std::size_t s = 0; s < ft.window; ++s)
      for (std::size_t r = 0; r < ft.rois; ++r) {
        REQUIRE(std::abs(ft.at(i, s, r, 0)) <= 0.35f);
        REQUIRE(std::abs(ft.at(i, s, r, 1)) <= 0.35f);
        if (s == 0) continue;
        sum += std::hypot(ft.at(i, s, r, 0), ft.at(i, s, r, 1));
        ++count;
      }
  REQUIRE(sum / static_cast<double>(count) <= 0.1);
}

TEST_CASE("a planted mouth-corner ramp is recovered at the right nodes") {
  const std::size_t size = 256;
  const Landmarks lm = detail::face_template(size);
  const std::array<double, 2> corner_l = {lm[48][0], lm[48][1]};
  const std::array<double, 2> corner_r = {lm[54][0], lm[54][1]};
  const double ux = 0.8, uy = 0.6, peak = 2.0;

  const Image base = pattern_image(size, size);
  std::vector<Image> frames;
  std::vector<Landmarks> marks;
  for (int t = 0; t < 5; ++t) {
    const double m = peak * t / 4.0;
    // Flat-top displacement bumps over both corners: full displacement
    // within 20 px, smooth decay to zero at 28 px.
    auto field = [&](double x, double y) -> std::array<double, 2> {
      double w = 0.0;
      for (const auto& c : {corner_l, corner_r}) {
        const double d = std::hypot(x - c[0], y - c[1]);
        if (d <= 20.0)
          w = 1.0;
        else if (d < 28.0)
          w = std::max(w, std::pow(std::cos(0.5 * kPi * (d - 20.0) / 8.0), 2.0));
      }
      return {m * w * ux, m * w * uy};
    };
    frames.push_back(testutil::warp_ref(base, field));
    marks.push_back(lm);
  }

  const FeatureTensor ft = extract_video_features(frames, marks, 5);
  // Clip 2 spans original frames 0..4, so its last row measures the full
  // planted displacement against the undeformed first frame.
  const std::size_t clip = 2, last = 4;
  for (std::size_t corner : {std::size_t(5), std::size_t(6)}) {
    REQUIRE(ft.at(clip, last, corner, 0) == Catch::Approx(peak * ux).margin(0.3));
    REQUIRE(ft.at(clip, last, corner, 1) == Catch::Approx(peak * uy).margin(0.3));
  }
  // Brows and chin sit far outside the bumps.
  for (std::size_t quiet : {std::size_t(0), std::size_t(1), std::size_t(2), std::size_t(3),
                            std::size_t(4), std::size_t(9)}) {
    REQUIRE(std::abs(ft.at(clip, last, quiet, 0)) < 0.3f);
    REQUIRE(std::abs(ft.at(clip, last, quiet, 1)) < 0.3f);
  }
  // Philtrum and lip receive partial bleed from the skirt but clearly less
  // than the corners themselves.
  for (std::size_t near : {std::size_t(7), std::size_t(8)}) {
    REQUIRE(std::abs(ft.at(clip, last, near, 0)) < 1.2f);
    REQUIRE(std::abs(ft.at(clip, last, near, 1)) < 1.2f);
  }
  // The measured corner motion follows the planted ramp.
  double prev = -1.0;
  for (std::size_t s = 1; s <= 4; ++s) {
    const double v = ft.at(clip, s, 5, 0);
    REQUIRE(v >= prev - 0.25);
    prev = v;
  }
  REQUIRE(ft.at(clip, 4, 5, 0) > ft.at(clip, 1, 5, 0));
}

TEST_CASE("feature extraction is deterministic") {
  const std::size_t size = 128;
  const Landmarks lm = detail::face_template(size);
  std::vector<Image> frames;
  std::vector<Landmarks> marks;
  for (int t = 0; t < 4; ++t) {
    frames.push_back(pattern_image(size, size, 0.7 * t, -0.4 * t));
    marks.push_back(lm);
  }
  const FeatureTensor a = extract_video_features(frames, marks, 3);
  const FeatureTensor b = extract_video_features(frames, marks, 3);
  REQUIRE(a.data == b.data);
}

TEST_CASE("feature extraction validates inputs") {
  const Landmarks lm = detail::face_template(64);
  const std::vector<Image> frames(3, pattern_image(64, 64));
  REQUIRE_THROWS_WITH(extract_video_features({}, {}, 5),
                      Catch::Matchers::ContainsSubstring("empty video"));
  REQUIRE_THROWS_WITH(extract_video_features(frames, {lm, lm}, 5),
                      Catch::Matchers::ContainsSubstring("frame count mismatch"));
}

TEST_CASE("feature files round-trip bit-exactly") {
  testutil::TempDir dir("feat");
  FeatureTensor t;
  t.n = 3;
  t.window = 5;
  t.rois = kNumRois;
  t.data.resize(t.n * t.window * t.rois * kFlowDims);
  SplitMix64 rng(31);
  for (auto& v : t.data) v = static_cast<float>(rng.gaussian(0.0, 1.0));
  const std::string path = dir.file("x.of1");
  write_features(path, t);
  const FeatureTensor back = read_features(path);
  REQUIRE(back.n == t.n);
  REQUIRE(back.window == t.window);
  REQUIRE(back.rois == t.rois);
  REQUIRE(back.data == t.data);
}

TEST_CASE("feature reader rejects damaged files") {
  testutil::TempDir dir("feat_bad");
  FeatureTensor t;
  t.n = 1;
  t.window = 3;
  t.rois = kNumRois;
  t.data.assign(t.n * t.window * t.rois * kFlowDims, 0.5f);
  const std::string path = dir.file("x.of1");
  write_features(path, t);

  SECTION("bad magic") {
    std::string bytes = testutil::read_file_bytes(path);
    bytes[2] = 'Z';
    std::ofstream(path, std::ios::binary) << bytes;
    REQUIRE_THROWS_WITH(read_features(path),
                        Catch::Matchers::ContainsSubstring("bad magic in feature file"));
  }

  SECTION("truncated payload") {
    std::string bytes = testutil::read_file_bytes(path);
    bytes.resize(bytes.size() - 7);
    std::ofstream(path, std::ios::binary) << bytes;
    REQUIRE_THROWS_WITH(read_features(path),
                        Catch::Matchers::ContainsSubstring("truncated payload in feature file"));
  }

  SECTION("dimension overflow") {
    std::string bytes = testutil::read_file_bytes(path);
    // Header layout: magic[8], version, n, window, rois, dims as u32le.
    // Patch n to 2^28 windows so numel overflows the sanity cap.
    bytes[12] = 0;
    bytes[13] = 0;
    bytes[14] = 0;
    bytes[15] = 0x10;
    std::ofstream(path, std::ios::binary) << bytes;
    REQUIRE_THROWS_WITH(read_features(path),
                        Catch::Matchers::ContainsSubstring("dimension overflow in feature file"));
  }
}

TEST_CASE("landmark csv files round-trip to within format precision") {
  testutil::TempDir dir("lmcsv");
  std::vector<Landmarks> lm = {detail::face_template(128), detail::face_template(128)};
  for (auto& p : lm[1]) {
    p[0] += 1.25;
    p[1] -= 0.5;
  }
  const std::string path = dir.file("landmarks.csv");
  write_landmarks_csv(path, lm);
  const auto back = read_landmarks_csv(path);
  REQUIRE(back.size() == 2);
  for (std::size_t f = 0; f < 2; ++f)
    for (std::size_t i = 0; i < 68; ++i) {
      REQUIRE(back[f][i][0] == Catch::Approx(lm[f][i][0]).margin(1.1e-4));
      REQUIRE(back[f][i][1] == Catch::Approx(lm[f][i][1]).margin(1.1e-4));
    }
}

TEST_CASE("landmark csv reader rejects malformed rows") {
  testutil::TempDir dir("lmcsv_bad");

  SECTION("out-of-order frames") {
    const std::string path = dir.file("bad.csv");
    std::ofstream out(path);
    out << "frame,x0,y0\n1,1.0,2.0\n";
    out.close();
    REQUIRE_THROWS_WITH(read_landmarks_csv(path),
                        Catch::Matchers::ContainsSubstring("cover frames 0..N-1"));
  }

  SECTION("too few columns") {
    const std::string path = dir.file("short.csv");
    std::ofstream out(path);
    out << "frame,x0,y0\n0,1.0,2.0\n";
    out.close();
    REQUIRE_THROWS_WITH(read_landmarks_csv(path),
                        Catch::Matchers::ContainsSubstring("too few columns"));
  }

  SECTION("empty file") {
    const std::string path = dir.file("empty.csv");
    std::ofstream(path) << "";
    REQUIRE_THROWS_WITH(read_landmarks_csv(path),
                        Catch::Matchers::ContainsSubstring("empty landmarks file"));
  }
}

TEST_CASE("pgm images round-trip") {
  testutil::TempDir dir("pgm");
  Image im = Image::zeros(17, 9);
  for (std::size_t y = 0; y < 9; ++y)
    for (std::size_t x = 0; x < 17; ++x) im.at(x, y) = static_cast<float>((x * 13 + y * 7) % 256);
  const std::string path = dir.file("t.pgm");
  write_pgm(path, im);
  const Image back = read_pgm(path);
  REQUIRE(back.width == 17);
  REQUIRE(back.height == 9);
  for (std::size_t i = 0; i < back.pixels.size(); ++i) REQUIRE(back.pixels[i] == im.pixels[i]);
}
