#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/intervals.hpp"
#include "spotgcn/model.hpp"

namespace spotgcn {

struct ExpressionProposal {
  std::string video;
  ExprType type = ExprType::macro;
  std::int64_t onset = 0, offset = 0;
  double score = 0;
};

struct SpottingConfig {
  double theta_apex = 0.5;
  double theta_overlap = 0.5;
  // Window extents per type: k bounds the search span around a peak,
  // j keeps onset and offset at least a minimal distance apart.
  std::int64_t micro_k = 15, micro_j = 3;
  std::int64_t macro_k = 45, macro_j = 16;
  bool gate_by_exp = true;

  std::int64_t k(ExprType t) const { return t == ExprType::micro ? micro_k : macro_k; }
  std::int64_t j(ExprType t) const { return t == ExprType::micro ? micro_j : macro_j; }

  void validate() const {
    require(theta_apex > 0 && theta_apex < 1 && theta_overlap > 0 && theta_overlap < 1,
            Errc::invalid_argument, "thresholds must lie in (0, 1)");
    require(micro_j > 0 && micro_j < micro_k && macro_j > 0 && macro_j < macro_k,
            Errc::invalid_argument, "duration bounds must satisfy 0 < j < k");
  }
};

// Replaces the per-type extents with statistics of the training
// annotations: k = round(mean duration), j = min duration. Types with no
// annotated clips keep the fallback values already in cfg.
inline SpottingConfig derive_durations(const std::vector<AnnotationClip>& clips,
                                       SpottingConfig cfg = {}) {
  for (ExprType t : {ExprType::micro, ExprType::macro}) {
    double sum = 0;
    std::int64_t count = 0, shortest = 0;
    for (const auto& c : clips) {
      if (c.type != t) continue;
      validate_clip(c);
      const std::int64_t dur = c.offset - c.onset + 1;
      sum += static_cast<double>(dur);
      shortest = count == 0 ? dur : std::min(shortest, dur);
      ++count;
    }
    if (count == 0) continue;
    const std::int64_t k = std::max<std::int64_t>(2, std::llround(sum / static_cast<double>(count)));
    const std::int64_t j = std::max<std::int64_t>(1, std::min(shortest, k - 1));
    if (t == ExprType::micro) {
      cfg.micro_k = k;
      cfg.micro_j = j;
    } else {
      cfg.macro_k = k;
      cfg.macro_j = j;
    }
  }
  cfg.validate();
  return cfg;
}

inline std::vector<std::size_t> apex_candidates(const std::vector<ProbabilityMap>& maps,
                                                ExprType type, double theta_apex,
                                                bool gate_by_exp = true) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    const TypeProbs& p = maps[i].of(type);
    const double v = gate_by_exp ? p.apex * p.exp : p.apex;
    if (v > theta_apex) out.push_back(i);
  }
  return out;
}

// Expands peak frame l into an interval: the onset is the strongest
// onset-probability frame in [l-k/2, l-ceil(j/2)] and the offset the
// strongest offset frame in [l+ceil(j/2), l+k/2], clipped to the video.
// Earliest frame wins ties. Returns nothing when either range is empty.
inline std::optional<ExpressionProposal> make_proposal(std::size_t l,
                                                       const std::vector<ProbabilityMap>& maps,
                                                       ExprType type, std::int64_t k,
                                                       std::int64_t j, const std::string& video) {
  require(l < maps.size(), Errc::invalid_argument, "peak index outside video");
  require(j > 0 && j < k, Errc::invalid_argument, "duration bounds must satisfy 0 < j < k");
  const std::int64_t n = static_cast<std::int64_t>(maps.size());
  const std::int64_t li = static_cast<std::int64_t>(l);
  const std::int64_t half_j = (j + 1) / 2;
  const std::int64_t b_lo = std::max<std::int64_t>(0, li - k / 2);
  const std::int64_t b_hi = li - half_j;
  const std::int64_t d_lo = li + half_j;
  const std::int64_t d_hi = std::min(n - 1, li + k / 2);
  if (b_hi < b_lo || d_hi < d_lo) return std::nullopt;

  const auto argmax = [&](std::int64_t lo, std::int64_t hi, bool onset) {
    std::int64_t best = lo;
    double best_p = -1;
    for (std::int64_t f = lo; f <= hi; ++f) {
      const TypeProbs& p = maps[static_cast<std::size_t>(f)].of(type);
      const double v = onset ? p.onset : p.offset;
      if (v > best_p) {
        best_p = v;
        best = f;
      }
    }
    return best;
  };
  ExpressionProposal prop;
  prop.video = video;
  prop.type = type;
  prop.onset = argmax(b_lo, b_hi, true);
  prop.offset = argmax(d_lo, d_hi, false);
  prop.score = maps[static_cast<std::size_t>(prop.onset)].of(type).onset *
               maps[l].of(type).apex *
               maps[static_cast<std::size_t>(prop.offset)].of(type).offset;
  return prop;
}

// Greedy non-maximum suppression: keep proposals in score order (ties by
// earlier onset, then offset) and drop any that overlap a kept proposal
// of the same video and type above theta.
inline std::vector<ExpressionProposal> nms(std::vector<ExpressionProposal> proposals,
                                           double theta_overlap) {
  std::sort(proposals.begin(), proposals.end(),
            [](const ExpressionProposal& a, const ExpressionProposal& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.onset != b.onset) return a.onset < b.onset;
              return a.offset < b.offset;
            });
  std::vector<ExpressionProposal> kept;
  for (const auto& p : proposals) {
    bool suppressed = false;
    for (const auto& q : kept) {
      if (q.video != p.video || q.type != p.type) continue;
      if (interval_iou(p.onset, p.offset, q.onset, q.offset) > theta_overlap) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(p);
  }
  return kept;
}

inline std::vector<ExpressionProposal> spot_video(const std::vector<ProbabilityMap>& maps,
                                                  const std::string& video,
                                                  const SpottingConfig& cfg) {
  cfg.validate();
  std::vector<ExpressionProposal> out;
  for (ExprType t : {ExprType::macro, ExprType::micro}) {
    std::vector<ExpressionProposal> raw;
    for (std::size_t l : apex_candidates(maps, t, cfg.theta_apex, cfg.gate_by_exp))
      if (auto p = make_proposal(l, maps, t, cfg.k(t), cfg.j(t), video)) raw.push_back(*p);
    for (auto& p : nms(std::move(raw), cfg.theta_overlap)) out.push_back(std::move(p));
  }
  std::sort(out.begin(), out.end(), [](const ExpressionProposal& a, const ExpressionProposal& b) {
    if (a.type != b.type) return static_cast<int>(a.type) < static_cast<int>(b.type);
    if (a.onset != b.onset) return a.onset < b.onset;
    return a.offset < b.offset;
  });
  return out;
}

inline void write_proposals_csv(const std::string& path,
                                const std::vector<ExpressionProposal>& proposals) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open proposals file for writing: " + path);
  std::fprintf(f.get(), "video,type,onset,offset,score\n");
  for (const auto& p : proposals)
    std::fprintf(f.get(), "%s,%s,%lld,%lld,%.6f\n", p.video.c_str(), expr_type_name(p.type),
                 static_cast<long long>(p.onset), static_cast<long long>(p.offset), p.score);
}

inline std::vector<ExpressionProposal> read_proposals_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::io, "cannot open proposals file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), Errc::data, "empty proposals file: " + path);
  std::vector<ExpressionProposal> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string video, type, onset, offset, score;
    require(std::getline(ss, video, ',') && std::getline(ss, type, ',') &&
                std::getline(ss, onset, ',') && std::getline(ss, offset, ',') &&
                std::getline(ss, score, ','),
            Errc::data, "malformed proposals row: " + line);
    ExpressionProposal p;
    p.video = video;
    p.type = parse_expr_type(type);
    try {
      p.onset = std::stoll(onset);
      p.offset = std::stoll(offset);
      p.score = std::stod(score);
    } catch (const std::exception&) {
      raise(Errc::data, "malformed proposals row: " + line);
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace spotgcn
