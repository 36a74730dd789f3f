#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <spotgcn/spotgcn.hpp>

#include "oracles.hpp"

using namespace spotgcn;

TEST_CASE("glorot init respects its uniform bound") {
  // fan_in + fan_out = 2 -> bound sqrt(3)
  const double a11 = std::sqrt(3.0);
  for (std::uint64_t seed : {1ull, 2ull, 99ull, 12345ull}) {
    auto t = glorot_init<double>({1, 1}, seed);
    REQUIRE(t.size() == 1);
    REQUIRE(std::abs(t.values()[0]) <= a11);
    REQUIRE(t.requires_grad());
  }

  const double a = std::sqrt(6.0 / 12.0);
  auto t = glorot_init<double>({10, 2}, 7);
  REQUIRE(t.size() == 20);
  double mean = 0;
  for (double v : t.values()) {
    REQUIRE(std::abs(v) <= a);
    mean += v;
  }
  mean /= 20.0;
  // U(-a, a) has sd a/sqrt(3); the 20-sample mean should sit within 4 sd.
  REQUIRE(std::abs(mean) <= 4.0 * a / std::sqrt(3.0) / std::sqrt(20.0));
}

TEST_CASE("glorot init is seed-deterministic") {
  auto t1 = glorot_init<float>({8, 4}, 42);
  auto t2 = glorot_init<float>({8, 4}, 42);
  auto t3 = glorot_init<float>({8, 4}, 43);
  REQUIRE(t1.values() == t2.values());
  REQUIRE(t1.values() != t3.values());
}

TEST_CASE("backward through sum(matmul) produces column sums") {
  auto A = Tensor<double>::leaf({2, 2}, {1, 2, 3, 4}, true);
  auto W = Tensor<double>::leaf({2, 2}, {1, 1, 1, 1}, true);
  auto loss = sum(matmul(A, W));
  REQUIRE(loss.item() == Catch::Approx(20.0));
  loss.backward();
  const std::vector<double> dw = W.grad();
  REQUIRE(dw[0] == Catch::Approx(4.0));
  REQUIRE(dw[1] == Catch::Approx(4.0));
  REQUIRE(dw[2] == Catch::Approx(6.0));
  REQUIRE(dw[3] == Catch::Approx(6.0));
  // dA rows are W's row sums since W is all-ones: every entry 2.
  for (double g : A.grad()) REQUIRE(g == Catch::Approx(2.0));
}

TEST_CASE("backward of a plain sum is all ones") {
  auto x = Tensor<double>::leaf({5}, {3, -1, 0, 7, 2}, true);
  sum(x).backward();
  for (double g : x.grad()) REQUIRE(g == Catch::Approx(1.0));
}

TEST_CASE("gradients accumulate across backward calls and clear_grad resets") {
  auto x = Tensor<double>::leaf({2}, {1, 2}, true);
  sum(mul(x, x)).backward();
  REQUIRE(x.grad()[0] == Catch::Approx(2.0));
  sum(mul(x, x)).backward();
  REQUIRE(x.grad()[0] == Catch::Approx(4.0));
  x.clear_grad();
  REQUIRE(x.grad()[0] == 0.0);
}

TEST_CASE("smooth op gradients agree with central differences") {
  SplitMix64 rng(11);
  auto randn = [&](Shape s) {
    std::vector<double> v(shape_numel(s));
    for (auto& x : v) x = rng.gaussian(0.0, 1.0);
    return Tensor<double>::leaf(s, std::move(v), true);
  };

  SECTION("add/mul/scale/sigmoid chain") {
    auto w = randn({3, 4});
    auto u = randn({3, 4});
    auto fn = [&] { return sum(mul(sigmoid(w), add(scale(u, 0.5), add_const(w, 0.25)))); };
    auto rep = grad_check<double>(fn, {{"w", w}, {"u", u}}, 1e-6, 1e-6);
    INFO(rep.worst_param << "[" << rep.worst_coord << "] err " << rep.max_rel_err);
    REQUIRE(rep.pass);
    REQUIRE(rep.checked == 24);
    REQUIRE(rep.skipped == 0);
  }

  SECTION("matmul + add_rowvec + softmax rows") {
    auto w = randn({4, 3});
    auto b = randn({3});
    auto x = randn({5, 4});
    auto tgt = randn({5, 3});
    auto fn = [&] { return sum(mul(softmax_rows(add_rowvec(matmul(x, w), b)), tgt)); };
    auto rep = grad_check<double>(fn, {{"w", w}, {"b", b}}, 1e-6, 1e-6);
    REQUIRE(rep.pass);
    REQUIRE(rep.skipped == 0);
  }

  SECTION("l2 normalize rows") {
    auto z = randn({4, 6});
    auto tgt = randn({4, 6});
    auto fn = [&] { return sum(mul(l2_normalize_rows(z), tgt)); };
    auto rep = grad_check<double>(fn, {{"z", z}}, 1e-6, 1e-6);
    REQUIRE(rep.pass);
  }

  SECTION("reshape/transpose01/slice_cols are pass-throughs") {
    auto w = randn({4, 6});
    auto fn = [&] {
      auto t = transpose01(reshape(w, {2, 2, 6}));  // [2,2,6]
      t = reshape(t, {4, 6});
      return sum(mul(slice_cols(t, 1, 3), slice_cols(t, 2, 3)));
    };
    auto rep = grad_check<double>(fn, {{"w", w}}, 1e-6, 1e-6);
    REQUIRE(rep.pass);
  }

  SECTION("temporal_conv and graph_mix") {
    const std::size_t Tn = 6, S = 3, B = 2, C = 2, K = 3, Cout = 4;
    auto x = randn({Tn, S, B, C});
    auto w = randn({K * C, Cout});
    auto bias = randn({Cout});
    auto a = randn({S, S});
    auto tgt = randn({(Tn - K + 1) * S * B * Cout});
    auto fn = [&] {
      auto t = temporal_conv(x, w, bias, K);
      t = graph_mix(t, a);
      return sum(mul(reshape(t, {tgt.size()}), tgt));
    };
    auto rep = grad_check<double>(fn, {{"x", x}, {"w", w}, {"bias", bias}}, 1e-6, 1e-6);
    REQUIRE(rep.pass);
    REQUIRE(rep.skipped == 0);
  }

  SECTION("flgp_pool routes gradients to argmax coordinates") {
    const std::size_t Tn = 5, S = 4, B = 2, C = 3;
    auto x = randn({Tn, S, B, C});
    auto tgt = randn({Tn * 2 * B * C});
    const std::vector<std::vector<std::size_t>> groups = {{0, 2}, {1, 3}};
    auto fn = [&] { return sum(mul(reshape(flgp_pool(x, groups), {tgt.size()}), tgt)); };
    auto rep = grad_check<double>(fn, {{"x", x}}, 1e-7, 1e-5);
    REQUIRE(rep.pass);
    // Continuous random values never tie, so no probe should straddle a
    // route change at h=1e-7.
    REQUIRE(rep.checked + rep.skipped == Tn * S * B * C);
  }
}

TEST_CASE("relu gradient is exact away from zero and kinks are skipped at zero") {
  auto x = Tensor<double>::leaf({3}, {1.0, 1e-9, -1.0}, true);
  auto fn = [&] { return sum(relu(x)); };
  auto rep = grad_check<double>(fn, {{"x", x}}, 1e-6, 1e-9);
  REQUIRE(rep.pass);
  REQUIRE(rep.checked == 2);
  REQUIRE(rep.skipped == 1);
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  auto w = Tensor<double>::leaf({2}, {1.5, -0.5}, true);
  // y = w*w elementwise, but the hand-written backward doubles the true
  // gradient.
  auto fn = [&] {
    std::vector<double> y(2);
    for (int i = 0; i < 2; ++i) y[i] = w.values()[i] * w.values()[i];
    auto bad = Tensor<double>::make({2}, std::move(y), {w.node()},
                                    [](detail::Node<double>& self) {
                                      auto& p = *self.parents[0];
                                      p.ensure_grad();
                                      for (std::size_t i = 0; i < 2; ++i)
                                        p.grad[i] += self.grad[i] * 4.0 * p.value[i];
                                    });
    return sum(bad);
  };
  auto rep = grad_check<double>(fn, {{"bad", w}}, 1e-6, 1e-4);
  REQUIRE_FALSE(rep.pass);
  REQUIRE(rep.worst_param == "bad");
  // Claimed 4w vs true 2w: |4w - 2w| / |4w| = 0.5 at every coordinate.
  REQUIRE(rep.max_rel_err == Catch::Approx(0.5).margin(1e-3));
}

TEST_CASE("grad_check on a simple quadratic is clean") {
  auto w = Tensor<double>::leaf({1}, {3.0}, true);
  auto fn = [&] { return sum(mul(w, w)); };
  auto rep = grad_check<double>(fn, {{"w", w}}, 1e-6, 1e-9);
  REQUIRE(rep.pass);
  REQUIRE(rep.checked == 1);
  REQUIRE(rep.skipped == 0);
  // Analytic derivative at 3 is 6; the central difference of x^2 is exact
  // up to rounding.
  w.clear_grad();
  fn().backward();
  REQUIRE(w.grad()[0] == Catch::Approx(6.0));
}

TEST_CASE("full model gradient check passes in double precision") {
  for (std::uint64_t seed : {3ull, 9ull}) {
    SpotGcnConfig cfg;
    auto model = SpotGcnModel<double>::init(cfg, seed);
    SplitMix64 rng(seed * 1000 + 7);
    const std::size_t clip_len = cfg.window * cfg.scales[0] * cfg.channels[0];
    std::vector<std::vector<float>> clips(3, std::vector<float>(clip_len));
    std::vector<const float*> ptrs;
    std::vector<FrameLabels> labels(3);
    std::vector<int> con_labels(3);
    for (std::size_t b = 0; b < 3; ++b) {
      for (auto& v : clips[b]) v = static_cast<float>(rng.gaussian(0.0, 1.0));
      labels[b].frame_type = static_cast<FrameType>(b);
      labels[b].mi_exp = b == 0 ? 1 : 0;
      labels[b].ma_exp = b == 1 ? 1 : 0;
      labels[b].mi_boundary = b == 0 ? Boundary::apex : Boundary::none;
      labels[b].ma_boundary = b == 1 ? Boundary::onset : Boundary::none;
      con_labels[b] = supcon_label(labels[b]);
      ptrs.push_back(clips[b].data());
    }
    const auto x = model.pack_batch(ptrs);
    const auto fn = [&] {
      auto out = model.forward_batch(x);
      auto l_cls = classification_loss(out.logits, labels, 0.25, 2.0);
      int contributing = 0;
      auto raw = supcon_loss(l2_normalize_rows(out.features), con_labels, 0.5, &contributing);
      auto l_con =
          contributing > 0 ? scale(raw, 1.0 / contributing) : Tensor<double>::scalar(0.0);
      return total_loss(l_cls, l_con, 0.05);
    };
    auto rep = grad_check<double>(fn, model.named_params(), 1e-5, 1e-4);
    INFO("seed " << seed << ": worst " << rep.worst_param << "[" << rep.worst_coord << "] err "
                 << rep.max_rel_err << ", " << rep.checked << " checked, " << rep.skipped
                 << " at kinks");
    REQUIRE(rep.pass);
    REQUIRE(rep.checked > 500);
  }
}

TEST_CASE("adamw single step matches the hand-computed value") {
  std::vector<double> w = {1.0};
  std::vector<double> g = {0.5};
  AdamWState<double> st;
  adamw_step<double>(w, g, st, 0.01, 0.5, 0.9, 1e-8, 0.01);
  // m=0.25 v=0.025, mhat=0.5 vhat=0.25,
  // w -= 0.01 * (0.5/(0.5+1e-8) + 0.01*1) = 0.0100999998
  REQUIRE(w[0] == Catch::Approx(0.9899).epsilon(1e-6));
}

TEST_CASE("adamw leaves weights alone when gradient and decay vanish") {
  std::vector<double> w = {0.7, -1.3};
  std::vector<double> g = {0.0, 0.0};
  AdamWState<double> st;
  for (int i = 0; i < 3; ++i) adamw_step<double>(w, g, st, 0.05, 0.9, 0.999, 1e-8, 0.0);
  REQUIRE(w[0] == Catch::Approx(0.7));
  REQUIRE(w[1] == Catch::Approx(-1.3));
}

TEST_CASE("adamw with zero betas steps by about lr in the gradient direction") {
  std::vector<double> w = {2.0};
  std::vector<double> g = {0.3};
  AdamWState<double> st;
  adamw_step<double>(w, g, st, 0.01, 0.0, 0.0, 1e-8, 0.0);
  // m=g, v=g^2 -> update ~ lr * g/|g|
  REQUIRE(std::abs((2.0 - w[0]) - 0.01) < 1e-7);
}

TEST_CASE("adamw trajectory matches an independent scalar reference") {
  SplitMix64 rng(5);
  std::vector<double> w(6), ref_w(6);
  for (std::size_t i = 0; i < 6; ++i) ref_w[i] = w[i] = rng.gaussian(0.0, 1.0);
  AdamWState<double> st;
  std::vector<double> m(6, 0.0), v(6, 0.0);
  const double lr = 0.02, b1 = 0.9, b2 = 0.99, eps = 1e-8, wd = 0.04;
  for (int step = 1; step <= 25; ++step) {
    std::vector<double> g(6);
    for (auto& x : g) x = rng.gaussian(0.0, 1.0);
    adamw_step<double>(w, g, st, lr, b1, b2, eps, wd);
    for (std::size_t i = 0; i < 6; ++i) {
      m[i] = b1 * m[i] + (1 - b1) * g[i];
      v[i] = b2 * v[i] + (1 - b2) * g[i] * g[i];
      const double mh = m[i] / (1 - std::pow(b1, step));
      const double vh = v[i] / (1 - std::pow(b2, step));
      ref_w[i] -= lr * (mh / (std::sqrt(vh) + eps) + wd * ref_w[i]);
    }
  }
  for (std::size_t i = 0; i < 6; ++i) REQUIRE(w[i] == Catch::Approx(ref_w[i]).margin(1e-12));
}

TEST_CASE("adamw validates inputs") {
  std::vector<double> w = {1.0};
  AdamWState<double> st;
  std::vector<double> bad_g = {std::numeric_limits<double>::quiet_NaN()};
  REQUIRE_THROWS_WITH(adamw_step<double>(w, bad_g, st, 0.01, 0.9, 0.99, 1e-8, 0.0),
                      Catch::Matchers::ContainsSubstring("non-finite gradient"));
  std::vector<double> g = {0.5};
  AdamWState<double> st2;
  REQUIRE_THROWS_WITH(adamw_step<double>(w, g, st2, 0.01, 1.0, 0.99, 1e-8, 0.0),
                      Catch::Matchers::ContainsSubstring("betas"));
  std::vector<double> wrong = {0.5, 0.5};
  AdamWState<double> st3;
  REQUIRE_THROWS_WITH(adamw_step<double>(w, wrong, st3, 0.01, 0.9, 0.99, 1e-8, 0.0),
                      Catch::Matchers::ContainsSubstring("shape mismatch"));
}

TEST_CASE("the optimizer wrapper steps parameters and clears their grads") {
  auto w = Tensor<double>::leaf({2}, {1.0, 1.0}, true);
  AdamW<double> opt({w}, 0.01, 0.5, 0.9, 1e-8, 0.01);
  sum(scale(w, 0.5)).backward();  // grad 0.5 everywhere
  REQUIRE(w.grad()[0] == Catch::Approx(0.5));
  opt.step();
  REQUIRE(w.values()[0] == Catch::Approx(0.9899).epsilon(1e-6));
  REQUIRE(w.grad()[0] == 0.0);
}

TEST_CASE("tensor factories validate their arguments") {
  REQUIRE_THROWS_WITH((Tensor<double>::leaf({2, 2}, {1, 2, 3})),
                      Catch::Matchers::ContainsSubstring("shape/value size mismatch"));
  auto t = Tensor<double>::leaf({2}, {1, 2});
  REQUIRE_THROWS_WITH(t.item(), Catch::Matchers::ContainsSubstring("non-scalar"));
  auto a = Tensor<double>::zeros({2, 3});
  auto b = Tensor<double>::zeros({3, 2});
  REQUIRE_THROWS_WITH(add(a, b), Catch::Matchers::ContainsSubstring("shape mismatch"));
  REQUIRE_THROWS_WITH(a.backward(), Catch::Matchers::ContainsSubstring("scalar"));
}

TEST_CASE("no-grad regions drop the tape") {
  auto w = Tensor<double>::leaf({2}, {1, 2}, true);
  Tensor<double> y;
  {
    NoGradGuard ng;
    y = mul(w, w);
  }
  REQUIRE_FALSE(y.requires_grad());
  auto z = mul(w, w);
  REQUIRE(z.requires_grad());
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  testutil::TempDir dir("ckpt");
  std::vector<NamedTensor> tensors;
  SplitMix64 rng(21);
  tensors.push_back({"alpha", {3, 4}, {}});
  tensors.push_back({"beta", {7}, {}});
  tensors.push_back({"gamma.w", {2, 2, 2}, {}});
  for (auto& t : tensors) {
    t.data.resize(shape_numel(t.shape));
    for (auto& v : t.data) v = static_cast<float>(rng.gaussian(0.0, 3.0));
  }
  const std::string path = dir.file("model.ckpt");
  write_checkpoint(path, tensors);
  const auto back = read_checkpoint(path);
  REQUIRE(back.size() == tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    REQUIRE(back[i].name == tensors[i].name);
    REQUIRE(back[i].shape == tensors[i].shape);
    REQUIRE(back[i].data == tensors[i].data);
  }
}

TEST_CASE("checkpoint reader rejects damaged files") {
  testutil::TempDir dir("ckpt_bad");
  const std::string path = dir.file("model.ckpt");
  write_checkpoint(path, {{"w", {2}, {1.0f, 2.0f}}});

  SECTION("bad magic") {
    std::string bytes = testutil::read_file_bytes(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary) << bytes;
    REQUIRE_THROWS_WITH(read_checkpoint(path),
                        Catch::Matchers::ContainsSubstring("bad magic in checkpoint"));
  }

  SECTION("truncated payload") {
    std::string bytes = testutil::read_file_bytes(path);
    bytes.resize(bytes.size() - 5);
    std::ofstream(path, std::ios::binary) << bytes;
    REQUIRE_THROWS_WITH(read_checkpoint(path),
                        Catch::Matchers::ContainsSubstring("truncated payload"));
  }
}

TEST_CASE("model checkpoints restore identical predictions") {
  SpotGcnConfig cfg;
  auto model = SpotGcnModel<float>::init(cfg, 77);
  testutil::TempDir dir("model_ckpt");
  const std::string path = dir.file("m.ckpt");
  write_checkpoint(path, model.to_checkpoint());

  auto other = SpotGcnModel<float>::init(cfg, 1234);
  other.load_checkpoint_tensors(read_checkpoint(path));

  SplitMix64 rng(3);
  std::vector<float> clip(cfg.window * cfg.scales[0] * cfg.channels[0]);
  for (auto& v : clip) v = static_cast<float>(rng.gaussian(0.0, 1.0));
  ProbabilityMap m1, m2;
  FrameEmbedding e1, e2;
  std::vector<float> l1, l2;
  model.forward(clip.data(), m1, e1, l1);
  other.forward(clip.data(), m2, e2, l2);
  REQUIRE(l1 == l2);
  REQUIRE(e1.z == e2.z);
}
