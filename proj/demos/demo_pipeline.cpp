// Miniature in-process run of the whole pipeline: synthesize motion
// features for a handful of subjects, train with one subject held out,
// spot expressions on that subject, and print the evaluation table.

#include <cstdio>
#include <spotgcn/spotgcn.hpp>

using namespace spotgcn;

int main() {
  SynthSpec spec;
  spec.subjects = 3;
  spec.videos_per_subject = 2;
  spec.frames_per_video = 200;
  spec.macro_max = 40;
  spec.direct_features = true;
  spec.seed = 7;

  const std::string held = "s01";
  std::vector<VideoSample> train_set;
  std::vector<VideoSample> held_out;
  std::vector<AnnotationClip> held_gts;
  for (std::size_t si = 0; si < spec.subjects; ++si)
    for (std::size_t vi = 0; vi < spec.videos_per_subject; ++vi) {
      const SynthVideoPlan plan = plan_video(spec, si, vi);
      VideoSample v;
      v.subject = plan.subject;
      v.video = plan.video;
      v.features = direct_features(spec, plan);
      v.labels = make_labels(plan_annotations(plan), plan.n_frames);
      if (plan.subject == held) {
        for (auto& a : plan_annotations(plan)) held_gts.push_back(a);
        held_out.push_back(std::move(v));
      } else {
        train_set.push_back(std::move(v));
      }
    }
  std::printf("training on %zu videos, holding out %s (%zu events)\n", train_set.size(),
              held.c_str(), held_gts.size());

  TrainConfig tcfg;
  tcfg.epochs = 30;
  tcfg.batch = 256;
  tcfg.seed = 7;
  SpotGcnModel<float> model = SpotGcnModel<float>::init(SpotGcnConfig{}, tcfg.seed);
  const auto trace = train(model, train_set, tcfg, held);
  std::printf("final mean loss %.4f after %zu epochs\n", trace.back().mean_total,
              trace.size());

  SpottingConfig scfg;
  std::vector<AnnotationClip> train_gts;
  for (std::size_t si = 0; si < spec.subjects; ++si)
    for (std::size_t vi = 0; vi < spec.videos_per_subject; ++vi) {
      const SynthVideoPlan plan = plan_video(spec, si, vi);
      if (plan.subject == held) continue;
      for (auto& a : plan_annotations(plan)) train_gts.push_back(a);
    }
  scfg = derive_durations(train_gts, scfg);

  std::vector<ExpressionProposal> proposals;
  for (const auto& v : held_out) {
    const auto maps = model.predict_video(v.features);
    for (auto& p : spot_video(maps, v.subject + "/" + v.video, scfg))
      proposals.push_back(std::move(p));
  }
  std::printf("%zu proposals on the held-out subject\n\n", proposals.size());

  const EvalReport rep = evaluate(held_gts, proposals, 0.5);
  std::fputs(format_report(rep).c_str(), stdout);
  return 0;
}
