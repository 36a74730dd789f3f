#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/losses.hpp"
#include "spotgcn/model.hpp"
#include "spotgcn/motion.hpp"
#include "spotgcn/optim.hpp"
#include "spotgcn/rng.hpp"

namespace spotgcn {

struct TrainConfig {
  float lr = 0.01f;
  float beta1 = 0.5f;
  float beta2 = 0.9f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
  std::size_t epochs = 100;
  std::size_t batch = 512;
  float tau = 0.5f;
  float lambda = 0.05f;
  std::size_t window = 17;
  float focal_alpha = 0.25f;
  float focal_gamma = 2.0f;
  std::uint64_t seed = 1;
  // Periodic checkpoint snapshots for inspection; 0 disables.
  std::size_t snapshot_every = 0;

  void validate() const {
    require(lr > 0 && epochs > 0 && batch > 0 && tau > 0 && lambda >= 0, Errc::invalid_argument,
            "train config values must be positive");
    require(window % 2 == 1, Errc::invalid_argument, "window must be odd");
  }
};

// Per-frame labels for one video. Expression flags cover [onset, offset]
// inclusive; onset/apex/offset bands are +-1 around the annotated index
// (apex falls back to the clip midpoint), applied with priority
// apex > onset > offset; bands may spill one frame beyond the clip.
// The contrastive frame type prefers micro over macro where both cover.
inline std::vector<FrameLabels> make_labels(const std::vector<AnnotationClip>& clips, std::size_t n) {
  require(n > 0, Errc::invalid_argument, "empty video");
  for (const auto& c : clips) {
    validate_clip(c);
    require(c.onset >= 0 && c.offset < static_cast<std::int64_t>(n), Errc::data,
            "annotation outside [0, N)");
  }
  for (ExprType t : {ExprType::macro, ExprType::micro}) {
    std::vector<const AnnotationClip*> of_type;
    for (const auto& c : clips)
      if (c.type == t) of_type.push_back(&c);
    std::sort(of_type.begin(), of_type.end(),
              [](const AnnotationClip* a, const AnnotationClip* b) { return a->onset < b->onset; });
    for (std::size_t i = 1; i < of_type.size(); ++i)
      require(of_type[i]->onset > of_type[i - 1]->offset, Errc::data, "conflicting annotation");
  }

  std::vector<FrameLabels> labels(n);
  const auto band = [&](std::int64_t center, Boundary which, ExprType t) {
    for (std::int64_t f = std::max<std::int64_t>(0, center - 1);
         f <= std::min<std::int64_t>(static_cast<std::int64_t>(n) - 1, center + 1); ++f) {
      auto& slot = t == ExprType::micro ? labels[static_cast<std::size_t>(f)].mi_boundary
                                        : labels[static_cast<std::size_t>(f)].ma_boundary;
      slot = which;
    }
  };
  for (const auto& c : clips)
    for (std::int64_t f = c.onset; f <= c.offset; ++f) {
      if (c.type == ExprType::micro)
        labels[static_cast<std::size_t>(f)].mi_exp = 1;
      else
        labels[static_cast<std::size_t>(f)].ma_exp = 1;
    }
  for (const auto& c : clips) band(c.offset, Boundary::offset, c.type);
  for (const auto& c : clips) band(c.onset, Boundary::onset, c.type);
  for (const auto& c : clips)
    band(c.apex >= 0 ? c.apex : (c.onset + c.offset) / 2, Boundary::apex, c.type);
  for (auto& l : labels) {
    if (l.mi_exp)
      l.frame_type = FrameType::micro;
    else if (l.ma_exp)
      l.frame_type = FrameType::macro;
    else
      l.frame_type = FrameType::normal;
  }
  return labels;
}

struct LosoFold {
  std::string test_subject;
  std::vector<std::string> train_subjects;
};

inline std::vector<LosoFold> loso_split(const std::vector<std::string>& subjects) {
  std::set<std::string> unique(subjects.begin(), subjects.end());
  require(unique.size() >= 2, Errc::invalid_argument, "leave-one-subject-out needs at least 2 subjects");
  std::vector<LosoFold> folds;
  for (const auto& test : unique) {
    LosoFold fold;
    fold.test_subject = test;
    for (const auto& s : unique)
      if (s != test) fold.train_subjects.push_back(s);
    folds.push_back(std::move(fold));
  }
  return folds;
}

// One video's windows plus their per-frame labels.
struct VideoSample {
  std::string subject, video;
  FeatureTensor features;
  std::vector<FrameLabels> labels;
};

struct TraceRow {
  std::size_t epoch = 0;
  double mean_cls = 0, mean_con = 0, mean_total = 0;
};

inline void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open trace file for writing: " + path);
  std::fprintf(f.get(), "epoch,mean_cls_loss,mean_con_loss,mean_total\n");
  for (const auto& row : trace)
    std::fprintf(f.get(), "%zu,%.6f,%.6f,%.6f\n", row.epoch, row.mean_cls, row.mean_con,
                 row.mean_total);
}

template <typename T>
std::vector<TraceRow> train(SpotGcnModel<T>& model, const std::vector<VideoSample>& videos,
                            const TrainConfig& cfg, const std::string& test_subject = "",
                            const std::string& snapshot_dir = "") {
  cfg.validate();
  require(!videos.empty(), Errc::invalid_argument, "empty training set");
  for (const auto& v : videos) {
    require(v.subject != test_subject || test_subject.empty(), Errc::data,
            "test-subject leakage into training set: " + v.subject);
    require(v.features.n == v.labels.size(), Errc::data, "feature/label length mismatch");
    require(v.features.window == cfg.window, Errc::data, "feature window mismatch");
  }

  struct Ref {
    std::uint32_t video, frame;
  };
  std::vector<Ref> order;
  for (std::size_t v = 0; v < videos.size(); ++v)
    for (std::size_t i = 0; i < videos[v].features.n; ++i)
      order.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(i)});

  AdamW<T> opt(model.params(), static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
               static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps), static_cast<T>(cfg.weight_decay));
  SplitMix64 rng(cfg.seed);
  std::vector<TraceRow> trace;
  std::vector<const float*> clips;
  std::vector<FrameLabels> batch_labels;
  std::vector<int> con_labels;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double cls_sum = 0, con_sum = 0, total_sum = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t nb = std::min(cfg.batch, order.size() - start);
      clips.resize(nb);
      batch_labels.resize(nb);
      con_labels.resize(nb);
      for (std::size_t i = 0; i < nb; ++i) {
        const Ref r = order[start + i];
        clips[i] = videos[r.video].features.clip(r.frame);
        batch_labels[i] = videos[r.video].labels[r.frame];
        con_labels[i] = supcon_label(batch_labels[i]);
      }
      auto out = model.forward_batch(model.pack_batch(clips));
      Tensor<T> l_cls = classification_loss(out.logits, batch_labels,
                                            static_cast<T>(cfg.focal_alpha),
                                            static_cast<T>(cfg.focal_gamma));
      Tensor<T> l_con = Tensor<T>::scalar(T(0));
      if (nb >= 2) {
        int contributing = 0;
        Tensor<T> raw = supcon_loss(l2_normalize_rows(out.features), con_labels,
                                    static_cast<T>(cfg.tau), &contributing);
        if (contributing > 0) l_con = scale(raw, T(1) / static_cast<T>(contributing));
      }
      Tensor<T> loss = total_loss(l_cls, l_con, static_cast<T>(cfg.lambda));
      const double cls_v = static_cast<double>(l_cls.item());
      const double con_v = static_cast<double>(l_con.item());
      const double total_v = static_cast<double>(loss.item());
      if (!std::isfinite(total_v)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "non-finite loss at epoch %zu batch %zu (cls=%g con=%g)", epoch,
                      start / cfg.batch, cls_v, con_v);
        raise(Errc::numeric, msg);
      }
      loss.backward();
      opt.step();
      cls_sum += cls_v * static_cast<double>(nb);
      con_sum += con_v * static_cast<double>(nb);
      total_sum += total_v * static_cast<double>(nb);
    }
    const double denom = static_cast<double>(order.size());
    trace.push_back({epoch, cls_sum / denom, con_sum / denom, total_sum / denom});
    if (cfg.snapshot_every > 0 && !snapshot_dir.empty() && epoch % cfg.snapshot_every == 0) {
      char name[64];
      std::snprintf(name, sizeof(name), "/ckpt_epoch_%03zu.ckpt", epoch);
      write_checkpoint(snapshot_dir + name, model.to_checkpoint());
    }
  }
  return trace;
}

}  // namespace spotgcn
