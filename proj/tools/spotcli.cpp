#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <spotgcn/spotgcn.hpp>

namespace fs = std::filesystem;
using namespace spotgcn;

namespace {

int exit_code(Errc code) {
  switch (code) {
    case Errc::invalid_argument:
      return 2;
    case Errc::data:
    case Errc::io:
      return 3;
    case Errc::numeric:
      return 4;
  }
  return 3;
}

// features-dir layout: <root>/<subject>/<video>/features.of1
struct FeatureEntry {
  std::string subject, video, path;
  std::string key() const { return subject + "/" + video; }
};

std::vector<FeatureEntry> scan_features_dir(const std::string& root) {
  require(fs::is_directory(root), Errc::invalid_argument, "features directory not found: " + root);
  std::vector<FeatureEntry> out;
  for (const auto& subject : fs::directory_iterator(root)) {
    if (!subject.is_directory()) continue;
    for (const auto& video : fs::directory_iterator(subject.path())) {
      if (!video.is_directory()) continue;
      const fs::path file = video.path() / "features.of1";
      if (fs::exists(file))
        out.push_back({subject.path().filename().string(), video.path().filename().string(),
                       file.string()});
    }
  }
  std::sort(out.begin(), out.end(), [](const FeatureEntry& a, const FeatureEntry& b) {
    return a.key() < b.key();
  });
  require(!out.empty(), Errc::data, "no features.of1 files under " + root);
  return out;
}

void add_train_flags(CLI::App* cmd, TrainConfig& cfg) {
  cmd->add_option("--lr", cfg.lr);
  cmd->add_option("--beta1", cfg.beta1);
  cmd->add_option("--beta2", cfg.beta2);
  cmd->add_option("--eps", cfg.eps);
  cmd->add_option("--weight_decay", cfg.weight_decay);
  cmd->add_option("--epochs", cfg.epochs);
  cmd->add_option("--batch", cfg.batch);
  cmd->add_option("--tau", cfg.tau);
  cmd->add_option("--lambda", cfg.lambda);
  cmd->add_option("--window", cfg.window);
  cmd->add_option("--focal_alpha", cfg.focal_alpha);
  cmd->add_option("--focal_gamma", cfg.focal_gamma);
  cmd->add_option("--seed", cfg.seed);
  cmd->add_option("--snapshot_every", cfg.snapshot_every);
}

void add_spot_flags(CLI::App* cmd, SpottingConfig& cfg) {
  cmd->add_option("--theta_apex", cfg.theta_apex);
  cmd->add_option("--theta_overlap", cfg.theta_overlap);
  cmd->add_option("--micro_k", cfg.micro_k);
  cmd->add_option("--micro_j", cfg.micro_j);
  cmd->add_option("--macro_k", cfg.macro_k);
  cmd->add_option("--macro_j", cfg.macro_j);
  cmd->add_option("--gate_by_exp", cfg.gate_by_exp);
}

void use_config_file(CLI::App* cmd) {
  cmd->set_config("--config", "", "key = value file; unknown keys are rejected");
  cmd->allow_config_extras(CLI::config_extras_mode::error);
}

SpotGcnModel<float> load_model(const std::string& checkpoint_path) {
  SpotGcnModel<float> model = SpotGcnModel<float>::init(SpotGcnConfig{}, 1);
  model.load_checkpoint_tensors(read_checkpoint(checkpoint_path));
  return model;
}

int cmd_extract(const std::string& video_dir, const std::string& landmarks_path,
                const std::string& out_path, std::size_t window, std::size_t stride) {
  require(window % 2 == 1, Errc::invalid_argument, "window must be odd");
  require(fs::is_directory(video_dir), Errc::invalid_argument,
          "video directory not found: " + video_dir);
  require(fs::exists(landmarks_path), Errc::invalid_argument,
          "landmarks not found: " + landmarks_path);
  const std::vector<Image> frames = load_frame_dir(video_dir, stride);
  std::vector<Landmarks> landmarks = read_landmarks_csv(landmarks_path);
  if (stride > 1) {
    std::vector<Landmarks> sub;
    for (std::size_t i = 0; i < landmarks.size(); i += stride) sub.push_back(landmarks[i]);
    landmarks = std::move(sub);
  }
  const FeatureTensor features = extract_video_features(frames, landmarks, window);
  write_features(out_path, features);
  std::printf("extracted N=%zu w=%zu R=%zu -> %s\n", features.n, features.window, features.rois,
              out_path.c_str());
  return 0;
}

int cmd_train(const std::string& features_dir, const std::string& annotations_path,
              const std::string& fold, const std::string& out_dir, const TrainConfig& cfg) {
  const std::vector<FeatureEntry> entries = scan_features_dir(features_dir);
  const std::vector<AnnotationClip> annotations = read_annotations_csv(annotations_path);

  bool fold_known = false;
  for (const auto& e : entries) fold_known = fold_known || e.subject == fold;
  require(fold_known, Errc::invalid_argument, "unknown subject for --fold: " + fold);

  std::vector<VideoSample> samples;
  for (const auto& e : entries) {
    if (e.subject == fold) continue;
    VideoSample s;
    s.subject = e.subject;
    s.video = e.video;
    s.features = read_features(e.path);
    std::vector<AnnotationClip> mine;
    for (const auto& a : annotations)
      if (a.subject == e.subject && a.video == e.video) mine.push_back(a);
    s.labels = make_labels(mine, s.features.n);
    samples.push_back(std::move(s));
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, Errc::io, "cannot create output directory: " + out_dir);
  SpotGcnConfig mcfg;
  mcfg.window = cfg.window;
  SpotGcnModel<float> model = SpotGcnModel<float>::init(mcfg, cfg.seed);
  const std::vector<TraceRow> trace = train(model, samples, cfg, fold, out_dir);
  write_trace_csv(out_dir + "/trace.csv", trace);
  write_checkpoint(out_dir + "/model.ckpt", model.to_checkpoint());
  std::printf("trained %zu epochs on %zu videos (held out: %s); final loss %.6f -> %s\n",
              cfg.epochs, samples.size(), fold.c_str(), trace.back().mean_total, out_dir.c_str());
  return 0;
}

int cmd_spot(const std::string& features_dir, const std::string& checkpoint_path,
             const std::string& out_path, const std::string& subject_filter,
             const std::string& train_annotations, SpottingConfig cfg) {
  if (!train_annotations.empty())
    cfg = derive_durations(read_annotations_csv(train_annotations), cfg);
  cfg.validate();
  const SpotGcnModel<float> model = load_model(checkpoint_path);
  std::vector<ExpressionProposal> all;
  std::size_t n_videos = 0;
  for (const auto& e : scan_features_dir(features_dir)) {
    if (!subject_filter.empty() && e.subject != subject_filter) continue;
    const FeatureTensor features = read_features(e.path);
    const std::vector<ProbabilityMap> maps = model.predict_video(features);
    for (auto& p : spot_video(maps, e.key(), cfg)) all.push_back(std::move(p));
    ++n_videos;
  }
  require(n_videos > 0, Errc::data, "no videos matched the subject filter");
  write_proposals_csv(out_path, all);
  std::printf("spotted %zu proposals over %zu videos -> %s\n", all.size(), n_videos,
              out_path.c_str());
  return 0;
}

int cmd_eval(const std::string& annotations_path, const std::string& proposals_path,
             const std::string& out_path, double theta_iou) {
  const EvalReport rep = evaluate(read_annotations_csv(annotations_path),
                                  read_proposals_csv(proposals_path), theta_iou);
  if (!out_path.empty()) write_report_csv(out_path, rep);
  std::fputs(format_report(rep).c_str(), stdout);
  return 0;
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  const std::vector<AnnotationClip> annotations = generate_to_dir(spec, out_dir);
  std::size_t micro = 0;
  for (const auto& a : annotations) micro += a.type == ExprType::micro ? 1 : 0;
  std::printf("synthesized %zu subjects x %zu videos (%s): %zu events (%zu micro, %zu macro) -> %s\n",
              spec.subjects, spec.videos_per_subject,
              spec.direct_features ? "features" : "frames", annotations.size(), micro,
              annotations.size() - micro, out_dir.c_str());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, std::size_t batch, double h, double tol) {
  SpotGcnConfig cfg;
  SpotGcnModel<double> model = SpotGcnModel<double>::init(cfg, seed);
  SplitMix64 rng(seed ^ 0xABCDEF);
  const std::size_t clip_len = cfg.window * cfg.scales[0] * cfg.channels[0];
  std::vector<std::vector<float>> clips(batch, std::vector<float>(clip_len));
  std::vector<const float*> ptrs;
  std::vector<FrameLabels> labels(batch);
  std::vector<int> con_labels(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    for (auto& v : clips[b]) v = static_cast<float>(rng.gaussian(0.0, 1.0));
    FrameLabels& l = labels[b];
    l.frame_type = static_cast<FrameType>(rng.next_below(3));
    l.mi_exp = l.frame_type == FrameType::micro ? 1 : 0;
    l.ma_exp = l.frame_type == FrameType::macro ? 1 : 0;
    l.mi_boundary = static_cast<Boundary>(rng.next_below(4));
    l.ma_boundary = static_cast<Boundary>(rng.next_below(4));
    con_labels[b] = supcon_label(l);
    ptrs.push_back(clips[b].data());
  }
  const Tensor<double> x = model.pack_batch(ptrs);
  const auto loss_fn = [&]() {
    auto out = model.forward_batch(x);
    Tensor<double> l_cls = classification_loss(out.logits, labels, 0.25, 2.0);
    int contributing = 0;
    Tensor<double> raw = supcon_loss(l2_normalize_rows(out.features), con_labels, 0.5, &contributing);
    Tensor<double> l_con = contributing > 0 ? scale(raw, 1.0 / contributing)
                                            : Tensor<double>::scalar(0.0);
    return total_loss(l_cls, l_con, 0.05);
  };
  const auto report = grad_check<double>(loss_fn, model.named_params(), h, tol);
  std::printf("%s max_rel_err=%.3e (tol %.1e, worst %s[%zu], %zu coords checked, %zu at kinks)\n",
              report.pass ? "PASS" : "FAIL", report.max_rel_err, tol, report.worst_param.c_str(),
              report.worst_coord, report.checked, report.skipped);
  return report.pass ? 0 : 4;
}

int cmd_plot(const std::string& features_path, const std::string& checkpoint_path,
             const std::string& annotations_path, const std::string& video_key,
             const std::string& out_path, const std::string& embedding_out) {
  const SpotGcnModel<float> model = load_model(checkpoint_path);
  const FeatureTensor features = read_features(features_path);
  std::vector<float> embeddings;
  const std::vector<ProbabilityMap> maps =
      model.predict_video(features, embedding_out.empty() ? nullptr : &embeddings);
  std::vector<AnnotationClip> gts;
  if (!annotations_path.empty()) {
    for (const auto& a : read_annotations_csv(annotations_path))
      if (video_key.empty() || a.subject + "/" + a.video == video_key || a.video == video_key)
        gts.push_back(a);
  }
  write_text_file(out_path, probability_svg(maps, gts, video_key));
  std::printf("plotted %zu frames, %zu ground-truth intervals -> %s\n", maps.size(), gts.size(),
              out_path.c_str());
  if (!embedding_out.empty()) {
    std::vector<AnnotationClip> local = gts;
    const std::vector<FrameLabels> labels = make_labels(local, features.n);
    std::vector<int> cls(features.n);
    for (std::size_t i = 0; i < features.n; ++i) cls[i] = supcon_label(labels[i]);
    write_text_file(embedding_out,
                    embedding_svg(embeddings, features.n, model.cfg.embed_dim(), cls, video_key));
    std::printf("plotted embedding scatter -> %s\n", embedding_out.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"facial expression spotting pipeline"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = all cores)");

  auto* extract = app.add_subcommand("extract", "optical-flow features from a frame directory");
  std::string video_dir, landmarks_path, out_path;
  std::size_t window = 17, stride = 1;
  extract->add_option("--video-dir", video_dir)->required();
  extract->add_option("--landmarks", landmarks_path)->required();
  extract->add_option("--out", out_path)->required();
  extract->add_option("--window", window);
  extract->add_option("--stride", stride);

  auto* train_cmd = app.add_subcommand("train", "train one leave-one-subject-out fold");
  std::string features_dir, annotations_path, fold, out_dir;
  TrainConfig train_cfg;
  train_cmd->add_option("--features-dir", features_dir)->required();
  train_cmd->add_option("--annotations", annotations_path)->required();
  train_cmd->add_option("--fold", fold)->required();
  train_cmd->add_option("--out", out_dir)->required();
  add_train_flags(train_cmd, train_cfg);
  use_config_file(train_cmd);

  auto* spot = app.add_subcommand("spot", "apex-anchored proposals from a trained model");
  std::string checkpoint_path, subject_filter, train_annotations;
  SpottingConfig spot_cfg;
  spot->add_option("--features-dir", features_dir)->required();
  spot->add_option("--checkpoint", checkpoint_path)->required();
  spot->add_option("--out", out_path)->required();
  spot->add_option("--subject", subject_filter);
  spot->add_option("--train-annotations", train_annotations,
                   "derive per-type duration bounds from these clips");
  add_spot_flags(spot, spot_cfg);
  use_config_file(spot);

  auto* eval = app.add_subcommand("eval", "precision/recall/F1 against ground truth");
  std::string proposals_path;
  double theta_iou = 0.5;
  eval->add_option("--annotations", annotations_path)->required();
  eval->add_option("--proposals", proposals_path)->required();
  eval->add_option("--out", out_path);
  eval->add_option("--theta_iou", theta_iou);

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec synth_spec;
  std::string mode = "render";
  synth->add_option("--out", out_dir)->required();
  synth->add_option("--subjects", synth_spec.subjects);
  synth->add_option("--videos", synth_spec.videos_per_subject);
  synth->add_option("--frames", synth_spec.frames_per_video);
  synth->add_option("--image-size", synth_spec.image_size);
  synth->add_option("--window", synth_spec.window);
  synth->add_option("--seed", synth_spec.seed);
  synth->add_option("--micro-peak", synth_spec.micro_peak);
  synth->add_option("--macro-peak", synth_spec.macro_peak);
  synth->add_option("--drift", synth_spec.drift_amplitude);
  synth->add_option("--noise", synth_spec.pixel_noise);
  synth->add_flag("--blinks", synth_spec.blinks);
  synth->add_option("--mode", mode)->check(CLI::IsMember({"render", "features"}));

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of the gradients");
  std::uint64_t gc_seed = 1;
  std::size_t gc_batch = 4;
  double gc_h = 1e-5, gc_tol = 1e-4;
  gradcheck->add_option("--seed", gc_seed);
  gradcheck->add_option("--batch", gc_batch);
  gradcheck->add_option("--step", gc_h);
  gradcheck->add_option("--tol", gc_tol);

  auto* plot = app.add_subcommand("plot", "probability curves (and embeddings) as SVG");
  std::string video_key, embedding_out;
  plot->add_option("--features", features_dir)->required();
  plot->add_option("--checkpoint", checkpoint_path)->required();
  plot->add_option("--out", out_path)->required();
  plot->add_option("--annotations", annotations_path);
  plot->add_option("--video", video_key);
  plot->add_option("--embedding", embedding_out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (threads > 0) max_threads() = threads;
    if (*extract) return cmd_extract(video_dir, landmarks_path, out_path, window, stride);
    if (*train_cmd) return cmd_train(features_dir, annotations_path, fold, out_dir, train_cfg);
    if (*spot)
      return cmd_spot(features_dir, checkpoint_path, out_path, subject_filter, train_annotations,
                      spot_cfg);
    if (*eval) return cmd_eval(annotations_path, proposals_path, out_path, theta_iou);
    if (*synth) {
      synth_spec.direct_features = mode == "features";
      return cmd_synth(synth_spec, out_dir);
    }
    if (*gradcheck) return cmd_gradcheck(gc_seed, gc_batch, gc_h, gc_tol);
    if (*plot)
      return cmd_plot(features_dir, checkpoint_path, annotations_path, video_key, out_path,
                      embedding_out);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 2;
}
