#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "spotgcn/common.hpp"
#include "spotgcn/rng.hpp"
#include "spotgcn/tensor.hpp"

namespace spotgcn {

// Glorot uniform: values in [-a, a], a = sqrt(6 / (fan_in + fan_out)).
// Rank-1 shapes use fan_in = fan_out = length.
template <typename T>
Tensor<T> glorot_init(Shape shape, std::uint64_t seed, bool requires_grad = true) {
  require(!shape.empty(), Errc::invalid_argument, "invalid shape");
  for (auto d : shape) require(d > 0, Errc::invalid_argument, "invalid shape");
  const double fan_in = static_cast<double>(shape.size() >= 2 ? shape[shape.size() - 2] : shape[0]);
  const double fan_out = static_cast<double>(shape.back());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  SplitMix64 rng(seed);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(rng.uniform(-a, a));
  return Tensor<T>::leaf(std::move(shape), std::move(v), requires_grad);
}

template <typename T>
struct AdamWState {
  std::vector<T> m, v;
  std::uint64_t t = 0;
};

// Decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   w <- w - lr (m_hat / (sqrt(v_hat) + eps) + wd w)
template <typename T>
void adamw_step(std::vector<T>& w, const std::vector<T>& g, AdamWState<T>& st, T lr, T beta1, T beta2,
                T eps, T weight_decay) {
  require(w.size() == g.size(), Errc::invalid_argument, "adamw_step: shape mismatch");
  require(beta1 >= T(0) && beta1 < T(1) && beta2 >= T(0) && beta2 < T(1), Errc::invalid_argument,
          "adamw_step: betas must lie in [0,1)");
  if (st.m.empty()) {
    st.m.assign(w.size(), T(0));
    st.v.assign(w.size(), T(0));
  }
  require(st.m.size() == w.size() && st.v.size() == w.size(), Errc::invalid_argument,
          "adamw_step: state shape mismatch");
  for (T x : g)
    require(std::isfinite(static_cast<double>(x)), Errc::numeric, "non-finite gradient");
  st.t += 1;
  const T c1 = T(1) - std::pow(beta1, static_cast<T>(st.t));
  const T c2 = T(1) - std::pow(beta2, static_cast<T>(st.t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    st.m[i] = beta1 * st.m[i] + (T(1) - beta1) * g[i];
    st.v[i] = beta2 * st.v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mh = st.m[i] / c1;
    const T vh = st.v[i] / c2;
    w[i] -= lr * (mh / (std::sqrt(vh) + eps) + weight_decay * w[i]);
  }
}

// Convenience wrapper stepping a named parameter list in a fixed order.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, T lr, T beta1, T beta2, T eps, T weight_decay)
      : params_(std::move(params)),
        states_(params_.size()),
        lr_(lr),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps),
        weight_decay_(weight_decay) {}

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      adamw_step(params_[i].values(), params_[i].grad(), states_[i], lr_, beta1_, beta2_, eps_,
                 weight_decay_);
      params_[i].clear_grad();
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.clear_grad();
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<AdamWState<T>> states_;
  T lr_, beta1_, beta2_, eps_, weight_decay_;
};

template <typename T>
struct GradCheckReport {
  T max_rel_err = T(0);
  std::string worst_param;
  std::size_t worst_coord = 0;
  std::size_t checked = 0;
  // Coordinates whose +-h probes landed in different smooth regions
  // (a relu, pooling argmax, or clamp flipped between them). A central
  // difference across such a kink does not estimate the derivative, so
  // these are not comparable and are reported instead of checked.
  std::size_t skipped = 0;
  bool pass = true;
};

// Central-difference check of analytic gradients. Parameters with more
// than `max_full` elements are probed at `max_full` seeded coordinates.
// The relative-error denominator is floored at 1e-3 so finite-difference
// noise near zero-gradient coordinates does not dominate the report.
template <typename T>
GradCheckReport<T> grad_check(const std::function<Tensor<T>()>& loss_fn,
                              std::vector<std::pair<std::string, Tensor<T>>> params, T h, T tol,
                              std::uint64_t probe_seed = 17, std::size_t max_full = 256) {
  for (auto& [name, p] : params) p.clear_grad();
  Tensor<T> loss = loss_fn();
  loss.backward();

  GradCheckReport<T> report;
  const T denom_floor = T(1e-3);
  SplitMix64 rng(probe_seed);
  for (auto& [name, p] : params) {
    const std::vector<T> analytic = p.grad();
    std::vector<std::size_t> coords;
    if (p.size() <= max_full) {
      coords.resize(p.size());
      for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    } else {
      std::unordered_set<std::size_t> taken;
      while (taken.size() < max_full) taken.insert(static_cast<std::size_t>(rng.next_below(p.size())));
      coords.assign(taken.begin(), taken.end());
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      T& wi = p.values()[i];
      const T keep = wi;
      T fp, fm;
      std::uint64_t sig_plus, sig_minus;
      {
        NoGradGuard ng;
        wi = keep + h;
        {
          KinkProbe probe;
          fp = loss_fn().item();
          sig_plus = probe.signature();
        }
        wi = keep - h;
        {
          KinkProbe probe;
          fm = loss_fn().item();
          sig_minus = probe.signature();
        }
        wi = keep;
      }
      if (sig_plus != sig_minus) {
        ++report.skipped;
        continue;
      }
      ++report.checked;
      const T numeric = (fp - fm) / (T(2) * h);
      const T a = analytic[i];
      const T rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), denom_floor});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = name;
        report.worst_coord = i;
      }
    }
    p.clear_grad();
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace spotgcn
