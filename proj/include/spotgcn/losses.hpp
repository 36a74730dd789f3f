#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/model.hpp"
#include "spotgcn/tensor.hpp"

namespace spotgcn {

enum class Boundary : std::uint8_t { onset = 0, apex = 1, offset = 2, none = 3 };
enum class FrameType : std::uint8_t { micro = 0, macro = 1, normal = 2 };

struct FrameLabels {
  std::uint8_t mi_exp = 0, ma_exp = 0;
  Boundary mi_boundary = Boundary::none, ma_boundary = Boundary::none;
  FrameType frame_type = FrameType::normal;
};

inline constexpr double kProbFloor = 1e-7;

// One focal term: alpha * (1 - p)^gamma * (-log p), with p floored at 1e-7.
template <typename T>
T focal_term(T p, T alpha, T gamma) {
  const T pc = std::max(p, static_cast<T>(kProbFloor));
  return alpha * std::pow(T(1) - pc, gamma) * (-std::log(pc));
}

namespace detail {

template <typename T>
T focal_term_dp(T p, T alpha, T gamma) {
  if (p < static_cast<T>(kProbFloor)) return T(0);
  const T q = T(1) - p;
  return alpha * (gamma * std::pow(q, gamma - T(1)) * std::log(p) - std::pow(q, gamma) / p);
}

}  // namespace detail

// Focal loss over class-probability rows. targets[i] picks the true
// column; -1 drops the row. Returns the plain sum over contributing rows.
template <typename T>
Tensor<T> focal_loss_multi(const Tensor<T>& probs, const std::vector<int>& targets, T alpha, T gamma) {
  require(probs.shape().size() == 2, Errc::invalid_argument, "focal_loss: probs must be [B,K]");
  const std::size_t B = probs.dim(0), K = probs.dim(1);
  require(targets.size() == B, Errc::invalid_argument, "focal_loss: target count mismatch");
  const auto& pv = probs.values();
  T total = T(0);
  std::uint64_t clamp_sig = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const int t = targets[i];
    if (t < 0) continue;
    require(static_cast<std::size_t>(t) < K, Errc::invalid_argument, "focal_loss: target out of range");
    total += focal_term(pv[i * K + t], alpha, gamma);
    clamp_sig = clamp_sig * 131 + (pv[i * K + t] < static_cast<T>(kProbFloor) ? 1 : 0);
  }
  if (detail::kink_tracking()) detail::fold_kink(clamp_sig);
  auto tgt = std::make_shared<std::vector<int>>(targets);
  return Tensor<T>::make({1}, {total}, {probs.node()}, [K, alpha, gamma, tgt](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < tgt->size(); ++i) {
      const int t = (*tgt)[i];
      if (t < 0) continue;
      p.grad[i * K + t] += g * detail::focal_term_dp(p.value[i * K + t], alpha, gamma);
    }
  });
}

// Binary focal loss on a probability column: the true-class probability is
// p for positives and 1-p for negatives. Returns the sum over rows.
template <typename T>
Tensor<T> focal_loss_binary(const Tensor<T>& p, const std::vector<int>& targets, T alpha, T gamma) {
  require(p.shape().size() <= 2, Errc::invalid_argument, "focal_loss: p must be a column");
  const std::size_t B = p.size();
  require(targets.size() == B, Errc::invalid_argument, "focal_loss: target count mismatch");
  const auto& pv = p.values();
  T total = T(0);
  std::uint64_t clamp_sig = 0;
  for (std::size_t i = 0; i < B; ++i) {
    const T pt = targets[i] ? pv[i] : T(1) - pv[i];
    total += focal_term(pt, alpha, gamma);
    clamp_sig = clamp_sig * 131 + (pt < static_cast<T>(kProbFloor) ? 1 : 0);
  }
  if (detail::kink_tracking()) detail::fold_kink(clamp_sig);
  auto tgt = std::make_shared<std::vector<int>>(targets);
  return Tensor<T>::make({1}, {total}, {p.node()}, [alpha, gamma, tgt](detail::Node<T>& self) {
    auto& p = *self.parents[0];
    p.ensure_grad();
    const T g = self.grad[0];
    for (std::size_t i = 0; i < tgt->size(); ++i) {
      if ((*tgt)[i]) {
        p.grad[i] += g * detail::focal_term_dp(p.value[i], alpha, gamma);
      } else {
        p.grad[i] -= g * detail::focal_term_dp(T(1) - p.value[i], alpha, gamma);
      }
    }
  });
}

// Supervised contrastive loss over L2-normalized embeddings z: [B, D].
// Returns the raw sum over anchors of Eq-style per-anchor terms; anchors
// without a same-label partner contribute nothing. `contributing`, when
// given, receives the number of anchors that do.
template <typename T>
Tensor<T> supcon_loss(const Tensor<T>& z, const std::vector<int>& labels, T tau,
                      int* contributing = nullptr) {
  require(z.shape().size() == 2, Errc::invalid_argument, "supcon_loss: z must be [B,D]");
  const std::size_t B = z.dim(0), D = z.dim(1);
  require(B >= 2, Errc::invalid_argument, "supcon_loss: batch must have at least 2 samples");
  require(labels.size() == B, Errc::invalid_argument, "supcon_loss: label count mismatch");
  require(tau > T(0), Errc::invalid_argument, "supcon_loss: tau must be positive");

  // Pairwise similarities s_ie = z_i . z_e / tau.
  std::vector<T> sims(B * B);
  detail::as_mat(sims, B, B).noalias() =
      detail::as_cmat(z.values(), B, D) * detail::as_cmat(z.values(), B, D).transpose() / tau;

  auto probs = std::make_shared<std::vector<T>>(B * B, T(0));   // masked softmax rows
  auto invq = std::make_shared<std::vector<T>>(B, T(0));        // 1/|Q(i)| or 0
  auto same = std::make_shared<std::vector<std::uint8_t>>(B * B, 0);
  T total = T(0);
  int anchors = 0;
  for (std::size_t i = 0; i < B; ++i) {
    std::size_t q = 0;
    for (std::size_t e = 0; e < B; ++e) {
      if (e != i && labels[e] == labels[i]) {
        (*same)[i * B + e] = 1;
        ++q;
      }
    }
    T m = -std::numeric_limits<T>::infinity();
    for (std::size_t e = 0; e < B; ++e)
      if (e != i) m = std::max(m, sims[i * B + e]);
    T denom = T(0);
    for (std::size_t e = 0; e < B; ++e)
      if (e != i) denom += std::exp(sims[i * B + e] - m);
    const T log_denom = m + std::log(denom);
    for (std::size_t e = 0; e < B; ++e)
      if (e != i) (*probs)[i * B + e] = std::exp(sims[i * B + e] - log_denom);
    if (q == 0) continue;
    ++anchors;
    (*invq)[i] = T(1) / static_cast<T>(q);
    T pos_sum = T(0);
    for (std::size_t e = 0; e < B; ++e)
      if ((*same)[i * B + e]) pos_sum += sims[i * B + e];
    total += log_denom - (*invq)[i] * pos_sum;
  }
  if (contributing) *contributing = anchors;

  return Tensor<T>::make({1}, {total}, {z.node()}, [B, D, tau, probs, invq, same](detail::Node<T>& self) {
    auto& pz = *self.parents[0];
    pz.ensure_grad();
    const T g = self.grad[0];
    // dL/ds is G[i][e] = p_ie - [e in Q(i)]/|Q(i)| on contributing rows;
    // dZ = (G + G^T) Z / tau.
    std::vector<T> gmat(B * B, T(0));
    for (std::size_t i = 0; i < B; ++i) {
      if ((*invq)[i] == T(0)) continue;
      for (std::size_t e = 0; e < B; ++e) {
        if (e == i) continue;
        gmat[i * B + e] = (*probs)[i * B + e] - ((*same)[i * B + e] ? (*invq)[i] : T(0));
      }
    }
    std::vector<T> sym(B * B);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t e = 0; e < B; ++e) sym[i * B + e] = gmat[i * B + e] + gmat[e * B + i];
    detail::as_mat(pz.grad, B, D).noalias() +=
        (g / tau) * (detail::as_cmat(sym, B, B) * detail::as_cmat(pz.value, B, D));
  });
}

template <typename T>
Tensor<T> total_loss(const Tensor<T>& l_cls, const Tensor<T>& l_con, T lambda) {
  require(lambda >= T(0), Errc::invalid_argument, "total_loss: lambda must be nonnegative");
  return add(l_cls, scale(l_con, lambda));
}

// Per-batch classification loss: for each expression type, a binary focal
// task on the exp probability plus a 3-class focal task on the boundary
// triple (only where a boundary is labeled). Mean over the batch.
template <typename T>
Tensor<T> classification_loss(const Tensor<T>& logits, const std::vector<FrameLabels>& labels,
                              T alpha, T gamma) {
  require(logits.shape().size() == 2 && logits.dim(1) == 2 * kPerType, Errc::invalid_argument,
          "classification_loss: logits must be [B,10]");
  const std::size_t B = logits.dim(0);
  require(labels.size() == B, Errc::invalid_argument, "classification_loss: label count mismatch");

  Tensor<T> loss;
  for (ExprType t : {ExprType::micro, ExprType::macro}) {
    const std::size_t base = t == ExprType::macro ? kPerType : 0;
    std::vector<int> exp_targets(B), boundary_targets(B);
    for (std::size_t i = 0; i < B; ++i) {
      const auto& l = labels[i];
      exp_targets[i] = t == ExprType::micro ? l.mi_exp : l.ma_exp;
      const Boundary b = t == ExprType::micro ? l.mi_boundary : l.ma_boundary;
      boundary_targets[i] = b == Boundary::none ? -1 : static_cast<int>(b);
    }
    Tensor<T> exp_p = sigmoid(slice_cols(logits, base + kExp, 1));
    Tensor<T> term = focal_loss_binary(exp_p, exp_targets, alpha, gamma);
    Tensor<T> triple = softmax_rows(slice_cols(logits, base + kOnset, 3));
    term = add(term, focal_loss_multi(triple, boundary_targets, alpha, gamma));
    loss = loss.defined() ? add(loss, term) : term;
  }
  return scale(loss, T(1) / static_cast<T>(B));
}

inline int supcon_label(const FrameLabels& l) { return static_cast<int>(l.frame_type); }

}  // namespace spotgcn
