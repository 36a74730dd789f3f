#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/checkpoint.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/facial_graph.hpp"
#include "spotgcn/motion.hpp"
#include "spotgcn/optim.hpp"
#include "spotgcn/tensor.hpp"

namespace spotgcn {

struct SpotGcnConfig {
  std::size_t window = 17;
  std::array<std::size_t, 4> kernels = {5, 5, 5, 5};
  std::array<std::size_t, 5> channels = {2, 32, 64, 128, 128};
  std::array<std::size_t, 3> scales = {10, 5, 1};
  std::size_t head_dim = 10;
  std::size_t embed_dim() const { return channels[4]; }
};

inline std::size_t receptive_field(const SpotGcnConfig& cfg) {
  std::size_t rf = 1;
  for (auto k : cfg.kernels) rf += k - 1;
  return rf;
}

// Logit layout within the 10-vector head output. Each expression type
// carries its five probability components in paper order; the norm
// probability is the sigmoid complement of the exp logit, so the norm
// logit column exists but stays inert.
enum LogitIndex : std::size_t {
  kOnset = 0,
  kApex = 1,
  kOffset = 2,
  kExp = 3,
  kNorm = 4,
  kPerType = 5,
};

inline std::size_t logit_index(ExprType t, std::size_t component) {
  return (t == ExprType::macro ? kPerType : 0) + component;
}

struct TypeProbs {
  double onset = 0, apex = 0, offset = 0, exp = 0, norm = 0;
};

struct ProbabilityMap {
  TypeProbs micro, macro_;
  const TypeProbs& of(ExprType t) const { return t == ExprType::micro ? micro : macro_; }
};

struct FrameEmbedding {
  std::vector<float> z;
};

namespace detail {

template <typename T>
inline T sigmoid_scalar(T x) {
  return x >= T(0) ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

}  // namespace detail

// Converts one 10-logit row into the per-frame probability map: a sigmoid
// on each type's exp logit and a softmax over each boundary triple.
template <typename T>
ProbabilityMap probability_map_from_logits(const T* row) {
  ProbabilityMap out;
  for (ExprType t : {ExprType::micro, ExprType::macro}) {
    TypeProbs p;
    const std::size_t base = t == ExprType::macro ? kPerType : 0;
    const double exp_p = detail::sigmoid_scalar(static_cast<double>(row[base + kExp]));
    p.exp = exp_p;
    p.norm = 1.0 - exp_p;
    double m = static_cast<double>(row[base + kOnset]);
    m = std::max(m, static_cast<double>(row[base + kApex]));
    m = std::max(m, static_cast<double>(row[base + kOffset]));
    const double eo = std::exp(static_cast<double>(row[base + kOnset]) - m);
    const double ea = std::exp(static_cast<double>(row[base + kApex]) - m);
    const double ef = std::exp(static_cast<double>(row[base + kOffset]) - m);
    const double z = eo + ea + ef;
    p.onset = eo / z;
    p.apex = ea / z;
    p.offset = ef / z;
    (t == ExprType::micro ? out.micro : out.macro_) = p;
  }
  return out;
}

// Per-sample ST-GCN layer on an [S, T, C] block: temporal gather of K
// frames, linear map, graph mixing, bias, ReLU. Weight rows are laid out
// tap-major: w[k*C_in + c].
template <typename T>
Tensor<T> stgcn_layer(const Tensor<T>& x, const Tensor<T>& a_hat, const Tensor<T>& w,
                      const Tensor<T>& bias, std::size_t kernel) {
  require(x.shape().size() == 3, Errc::invalid_argument, "stgcn_layer: x must be [S,T,C]");
  const std::size_t S = x.dim(0), Tn = x.dim(1), C = x.dim(2);
  require(Tn >= kernel, Errc::invalid_argument, "window too short");
  Tensor<T> t = transpose01(x);                  // [T, S, C]
  t = reshape(t, {Tn, S, std::size_t(1), C});    // [T, S, 1, C]
  t = temporal_conv(t, w, kernel);
  t = graph_mix(t, a_hat);
  t = add_rowvec(t, bias);
  t = relu(t);
  const std::size_t To = Tn - kernel + 1, Cout = w.dim(1);
  t = reshape(t, {To, S, Cout});
  return transpose01(t);                         // [S, T-K+1, C_out]
}

// Single-node temporal convolution layer with ReLU.
template <typename T>
Tensor<T> tcn_layer(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                    std::size_t kernel) {
  require(x.shape().size() == 3 && x.dim(0) == 1, Errc::invalid_argument,
          "tcn_layer: x must be [1,T,C]");
  const std::size_t Tn = x.dim(1), C = x.dim(2);
  require(Tn >= kernel, Errc::invalid_argument, "window too short");
  Tensor<T> t = reshape(x, {Tn, std::size_t(1), std::size_t(1), C});
  t = temporal_conv(t, w, bias, kernel);
  t = relu(t);
  const std::size_t To = Tn - kernel + 1, Cout = w.dim(1);
  return reshape(t, {std::size_t(1), To, Cout});
}

template <typename T>
struct SpotGcnModel {
  SpotGcnConfig cfg;
  PoolHierarchy hierarchy;
  Tensor<T> a0, a1;  // normalized adjacency at scales 0 and 1
  Tensor<T> w1, b1, w2, b2;  // ST-GCN stages
  Tensor<T> w3, b3, w4, b4;  // TCN stages
  Tensor<T> wfc, bfc;

  static SpotGcnModel init(const SpotGcnConfig& cfg, std::uint64_t seed,
                           const PoolHierarchy& hierarchy = PoolHierarchy{}) {
    require(receptive_field(cfg) == cfg.window, Errc::invalid_argument,
            "window must equal the temporal receptive field");
    SpotGcnModel m;
    m.cfg = cfg;
    m.hierarchy = hierarchy;
    m.a0 = normalized_adjacency_tensor<T>(hierarchy, 0);
    m.a1 = normalized_adjacency_tensor<T>(hierarchy, 1);
    const auto& ch = cfg.channels;
    const auto& k = cfg.kernels;
    SplitMix64 seeder(seed);
    m.w1 = glorot_init<T>({k[0] * ch[0], ch[1]}, seeder.next_u64());
    m.w2 = glorot_init<T>({k[1] * ch[1], ch[2]}, seeder.next_u64());
    m.w3 = glorot_init<T>({k[2] * ch[2], ch[3]}, seeder.next_u64());
    m.w4 = glorot_init<T>({k[3] * ch[3], ch[4]}, seeder.next_u64());
    m.wfc = glorot_init<T>({ch[4], cfg.head_dim}, seeder.next_u64());
    m.b1 = Tensor<T>::zeros({ch[1]}, true);
    m.b2 = Tensor<T>::zeros({ch[2]}, true);
    m.b3 = Tensor<T>::zeros({ch[3]}, true);
    m.b4 = Tensor<T>::zeros({ch[4]}, true);
    m.bfc = Tensor<T>::zeros({cfg.head_dim}, true);
    return m;
  }

  std::vector<std::pair<std::string, Tensor<T>>> named_params() {
    return {{"stgcn1.w", w1}, {"stgcn1.b", b1}, {"stgcn2.w", w2}, {"stgcn2.b", b2},
            {"tcn1.w", w3},  {"tcn1.b", b3},  {"tcn2.w", w4},  {"tcn2.b", b4},
            {"fc.w", wfc},   {"fc.b", bfc}};
  }

  std::vector<Tensor<T>> params() {
    std::vector<Tensor<T>> out;
    for (auto& [name, p] : named_params()) out.push_back(p);
    return out;
  }

  struct BatchOutput {
    Tensor<T> features;  // [B, embed_dim], pre-normalization
    Tensor<T> logits;    // [B, head_dim]
  };

  // Batched forward over x laid out [T, S, B, C]. Keeps every layer a
  // single fused op so the tape stays short.
  BatchOutput forward_batch(const Tensor<T>& x) const {
    require(x.shape().size() == 4 && x.dim(0) == cfg.window && x.dim(1) == cfg.scales[0] &&
                x.dim(3) == cfg.channels[0],
            Errc::invalid_argument, "forward: unexpected input shape");
    const std::size_t B = x.dim(2);
    Tensor<T> t = temporal_conv(x, w1, cfg.kernels[0]);
    t = graph_mix(t, a0);
    t = add_rowvec(t, b1);
    t = relu(t);
    t = flgp_pool(t, hierarchy.groups[0]);
    t = temporal_conv(t, w2, cfg.kernels[1]);
    t = graph_mix(t, a1);
    t = add_rowvec(t, b2);
    t = relu(t);
    t = flgp_pool(t, hierarchy.groups[1]);
    t = temporal_conv(t, w3, b3, cfg.kernels[2]);
    t = relu(t);
    t = temporal_conv(t, w4, b4, cfg.kernels[3]);
    t = relu(t);
    BatchOutput out;
    out.features = reshape(t, {B, cfg.embed_dim()});
    out.logits = add_rowvec(matmul(out.features, wfc), bfc);
    return out;
  }

  // Packs per-clip [w, R, 2] feature blocks into the batched layout.
  Tensor<T> pack_batch(const std::vector<const float*>& clips) const {
    const std::size_t B = clips.size(), W = cfg.window, S = cfg.scales[0], C = cfg.channels[0];
    std::vector<T> data(W * S * B * C);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t t = 0; t < W; ++t)
        for (std::size_t s = 0; s < S; ++s) {
          const float* src = clips[b] + (t * S + s) * C;
          T* dst = data.data() + ((t * S + s) * B + b) * C;
          for (std::size_t c = 0; c < C; ++c) dst[c] = static_cast<T>(src[c]);
        }
    return Tensor<T>::leaf({W, S, B, C}, std::move(data), false);
  }

  // Single-clip inference.
  void forward(const float* clip, ProbabilityMap& map, FrameEmbedding& embedding,
               std::vector<T>& logits) const {
    NoGradGuard ng;
    BatchOutput out = forward_batch(pack_batch({clip}));
    logits = out.logits.values();
    map = probability_map_from_logits(logits.data());
    Tensor<T> z = l2_normalize_rows(out.features);
    embedding.z.assign(z.values().begin(), z.values().end());
  }

  // Batched inference over a whole feature tensor: probability maps plus
  // normalized embeddings (row-major [n, embed_dim]).
  std::vector<ProbabilityMap> predict_video(const FeatureTensor& features,
                                            std::vector<float>* embeddings = nullptr,
                                            std::size_t batch = 512) const {
    NoGradGuard ng;
    require(features.window == cfg.window && features.rois == cfg.scales[0], Errc::data,
            "feature tensor does not match model config");
    std::vector<ProbabilityMap> maps(features.n);
    if (embeddings) embeddings->assign(features.n * cfg.embed_dim(), 0.0f);
    for (std::size_t start = 0; start < features.n; start += batch) {
      const std::size_t nb = std::min(batch, features.n - start);
      std::vector<const float*> clips(nb);
      for (std::size_t i = 0; i < nb; ++i) clips[i] = features.clip(start + i);
      BatchOutput out = forward_batch(pack_batch(clips));
      for (std::size_t i = 0; i < nb; ++i)
        maps[start + i] = probability_map_from_logits(out.logits.values().data() + i * cfg.head_dim);
      if (embeddings) {
        Tensor<T> z = l2_normalize_rows(out.features);
        for (std::size_t i = 0; i < nb; ++i)
          for (std::size_t c = 0; c < cfg.embed_dim(); ++c)
            (*embeddings)[(start + i) * cfg.embed_dim() + c] =
                static_cast<float>(z.values()[i * cfg.embed_dim() + c]);
      }
    }
    return maps;
  }

  std::vector<NamedTensor> to_checkpoint() {
    std::vector<NamedTensor> out;
    for (auto& [name, p] : named_params()) out.push_back(to_named(name, p));
    return out;
  }

  void load_checkpoint_tensors(const std::vector<NamedTensor>& tensors) {
    auto params = named_params();
    require(tensors.size() == params.size(), Errc::data, "checkpoint tensor count mismatch");
    for (auto& [name, p] : params) {
      bool found = false;
      for (const auto& t : tensors)
        if (t.name == name) {
          load_named(t, p);
          found = true;
          break;
        }
      require(found, Errc::data, "checkpoint missing tensor: " + name);
    }
  }
};

}  // namespace spotgcn
