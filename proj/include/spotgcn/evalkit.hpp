#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "spotgcn/annotations.hpp"
#include "spotgcn/common.hpp"
#include "spotgcn/intervals.hpp"
#include "spotgcn/spotting.hpp"

namespace spotgcn {

struct EvalCounts {
  std::int64_t total = 0, tp = 0, fp = 0, fn = 0;
};

struct Metrics {
  double precision = 0, recall = 0, f1 = 0;
};

inline Metrics prf1(const EvalCounts& c) {
  Metrics m;
  m.precision = c.tp + c.fp > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0;
  m.recall = c.tp + c.fn > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
  return m;
}

struct MatchPair {
  std::size_t gt_index = 0, proposal_index = 0;
  double iou = 0;
};

// Proposals carry a single video identity string; annotations split it
// into subject and video. Qualify with the subject so same-named videos
// of different subjects cannot cross-match.
inline std::string video_key(const AnnotationClip& c) {
  return c.subject.empty() ? c.video : c.subject + "/" + c.video;
}

// Greedy one-to-one matching by descending IoU. Ties are broken on
// interval content (ground-truth onset/offset, then proposal
// onset/offset, then video name) so the result does not depend on input
// order. A pair is eligible when video and type agree and IoU >= theta.
inline EvalCounts match_proposals(const std::vector<AnnotationClip>& gts,
                                  const std::vector<ExpressionProposal>& proposals,
                                  double theta_iou = 0.5,
                                  std::vector<MatchPair>* audit = nullptr) {
  struct Cand {
    double iou;
    std::size_t g, p;
  };
  std::vector<Cand> cands;
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      if (video_key(gts[g]) != proposals[p].video || gts[g].type != proposals[p].type) continue;
      const double iou =
          interval_iou(gts[g].onset, gts[g].offset, proposals[p].onset, proposals[p].offset);
      if (iou >= theta_iou) cands.push_back({iou, g, p});
    }
  std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
    if (a.iou != b.iou) return a.iou > b.iou;
    const AnnotationClip &ga = gts[a.g], &gb = gts[b.g];
    if (ga.video != gb.video) return ga.video < gb.video;
    if (ga.onset != gb.onset) return ga.onset < gb.onset;
    if (ga.offset != gb.offset) return ga.offset < gb.offset;
    const ExpressionProposal &pa = proposals[a.p], &pb = proposals[b.p];
    if (pa.onset != pb.onset) return pa.onset < pb.onset;
    return pa.offset < pb.offset;
  });
  std::vector<char> g_used(gts.size(), 0), p_used(proposals.size(), 0);
  EvalCounts counts;
  counts.total = static_cast<std::int64_t>(gts.size());
  for (const auto& c : cands) {
    if (g_used[c.g] || p_used[c.p]) continue;
    g_used[c.g] = p_used[c.p] = 1;
    ++counts.tp;
    if (audit) audit->push_back({c.g, c.p, c.iou});
  }
  counts.fp = static_cast<std::int64_t>(proposals.size()) - counts.tp;
  counts.fn = static_cast<std::int64_t>(gts.size()) - counts.tp;
  return counts;
}

// Maximum-cardinality matching on the same eligibility graph, via
// Kuhn's augmenting paths. Used to audit the greedy count.
inline std::int64_t optimal_tp_count(const std::vector<AnnotationClip>& gts,
                                     const std::vector<ExpressionProposal>& proposals,
                                     double theta_iou = 0.5) {
  std::vector<std::vector<std::size_t>> adj(gts.size());
  for (std::size_t g = 0; g < gts.size(); ++g)
    for (std::size_t p = 0; p < proposals.size(); ++p) {
      if (video_key(gts[g]) != proposals[p].video || gts[g].type != proposals[p].type) continue;
      if (interval_iou(gts[g].onset, gts[g].offset, proposals[p].onset, proposals[p].offset) >=
          theta_iou)
        adj[g].push_back(p);
    }
  std::vector<std::int64_t> match_p(proposals.size(), -1);
  std::vector<char> visited;
  std::function<bool(std::size_t)> try_kuhn = [&](std::size_t g) {
    for (std::size_t p : adj[g]) {
      if (visited[p]) continue;
      visited[p] = 1;
      if (match_p[p] < 0 || try_kuhn(static_cast<std::size_t>(match_p[p]))) {
        match_p[p] = static_cast<std::int64_t>(g);
        return true;
      }
    }
    return false;
  };
  std::int64_t matched = 0;
  for (std::size_t g = 0; g < gts.size(); ++g) {
    visited.assign(proposals.size(), 0);
    if (try_kuhn(g)) ++matched;
  }
  return matched;
}

struct EvalCategory {
  std::string name;
  EvalCounts counts;
  Metrics metrics;
};

struct EvalReport {
  EvalCategory macro_, micro_, overall;
};

inline EvalReport evaluate(const std::vector<AnnotationClip>& gts,
                           const std::vector<ExpressionProposal>& proposals,
                           double theta_iou = 0.5) {
  EvalReport rep;
  rep.macro_.name = "macro";
  rep.micro_.name = "micro";
  rep.overall.name = "overall";
  const auto split = [&](ExprType t, EvalCategory& cat) {
    std::vector<AnnotationClip> g;
    std::vector<ExpressionProposal> p;
    for (const auto& c : gts)
      if (c.type == t) g.push_back(c);
    for (const auto& c : proposals)
      if (c.type == t) p.push_back(c);
    cat.counts = match_proposals(g, p, theta_iou);
    cat.metrics = prf1(cat.counts);
  };
  split(ExprType::macro, rep.macro_);
  split(ExprType::micro, rep.micro_);
  rep.overall.counts.total = rep.macro_.counts.total + rep.micro_.counts.total;
  rep.overall.counts.tp = rep.macro_.counts.tp + rep.micro_.counts.tp;
  rep.overall.counts.fp = rep.macro_.counts.fp + rep.micro_.counts.fp;
  rep.overall.counts.fn = rep.macro_.counts.fn + rep.micro_.counts.fn;
  rep.overall.metrics = prf1(rep.overall.counts);
  return rep;
}

inline void write_report_csv(const std::string& path, const EvalReport& rep) {
  FilePtr f = open_file(path, "wb");
  require(f != nullptr, Errc::io, "cannot open report file for writing: " + path);
  std::fprintf(f.get(), "category,total,tp,fp,fn,precision,recall,f1\n");
  for (const EvalCategory* cat : {&rep.macro_, &rep.micro_, &rep.overall})
    std::fprintf(f.get(), "%s,%lld,%lld,%lld,%lld,%.6f,%.6f,%.6f\n", cat->name.c_str(),
                 static_cast<long long>(cat->counts.total), static_cast<long long>(cat->counts.tp),
                 static_cast<long long>(cat->counts.fp), static_cast<long long>(cat->counts.fn),
                 cat->metrics.precision, cat->metrics.recall, cat->metrics.f1);
}

inline std::string format_report(const EvalReport& rep) {
  char buf[512];
  std::string out = "category  total     tp     fp     fn  precision  recall      f1\n";
  for (const EvalCategory* cat : {&rep.macro_, &rep.micro_, &rep.overall}) {
    std::snprintf(buf, sizeof(buf), "%-8s %6lld %6lld %6lld %6lld     %.4f  %.4f  %.4f\n",
                  cat->name.c_str(), static_cast<long long>(cat->counts.total),
                  static_cast<long long>(cat->counts.tp), static_cast<long long>(cat->counts.fp),
                  static_cast<long long>(cat->counts.fn), cat->metrics.precision,
                  cat->metrics.recall, cat->metrics.f1);
    out += buf;
  }
  return out;
}

}  // namespace spotgcn
