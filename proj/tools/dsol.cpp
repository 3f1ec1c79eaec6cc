// dsol: stereo direct sparse odometry on image directories, trajectory evaluation, and
// synthetic dataset generation.
//
// Exit codes: 0 success, 1 usage or input error, 2 fewer than 80% of frames tracked,
// 3 internal inconsistency.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "dsol/config.hpp"
#include "dsol/error.hpp"
#include "dsol/io/dataset.hpp"
#include "dsol/io/eval.hpp"
#include "dsol/io/runner.hpp"
#include "dsol/io/synth.hpp"
#include "dsol/io/trajectory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTracking = 2;
constexpr int kExitConsistency = 3;
constexpr double kMinTrackedFraction = 0.8;

struct RunArgs {
  dsol::DatasetSpec spec;
  std::string config;
  std::string out;
  std::string timing;
  int threads = 1;
  bool deterministic = false;
  bool no_prefetch = false;
  bool verbose = false;
};

struct EvalArgs {
  std::string gt;
  std::string est;
  bool no_align = false;
  bool sim3 = false;
  bool json = false;
};

struct SynthArgs {
  std::string scene = "plane";
  int frames = 0;
  std::string motion;
  std::string out;
  double noise = 0;
  unsigned seed = 7;
  double depth = 2.0;
};

int Run(const RunArgs& a) {
  const dsol::Dataset dataset(a.spec);
  dsol::OdometryConfig cfg;
  if (!a.config.empty()) cfg = dsol::LoadConfig(a.config);
  if (dataset.stereo() && !cfg.align.stereo) {
    std::fprintf(stderr, "note: align.stereo = false, right images are used for initialization only\n");
  }
  dsol::RunOptions opts;
  opts.threads = a.threads;
  opts.deterministic = a.deterministic;
  opts.prefetch = !a.no_prefetch;
  if (a.verbose) {
    opts.on_frame = [](int i, const dsol::FrameOutput& f) {
      const auto& t = f.state.pose.translation();
      std::fprintf(stderr, "%5d %-13s Q=%.3f tracked=%d window=%d t=(%.3f %.3f %.3f)\n", i,
                   dsol::ToString(f.status), f.Q, f.tracked, f.window_size, t.x(), t.y(), t.z());
    };
  }

  const auto res = dsol::run_odometry(dataset, cfg, opts);
  dsol::WriteTrajectory(a.out, res.trajectory);
  if (!a.timing.empty()) {
    std::ofstream f(a.timing);
    if (!f) throw dsol::ParseError("cannot write " + a.timing);
    f << dsol::FormatTiming(res);
  }

  std::fprintf(stderr,
               "frames %d/%d  keyframes %d  reinitializations %d  tracked %.1f%%\n"
               "track %.2f ms mean (%d)  kf %.2f ms mean (%d)\n",
               res.trajectory.size(), res.total_frames, res.keyframes, res.reinitializations,
               100 * res.tracked_fraction, res.track.mean, res.track.count, res.kf.mean,
               res.kf.count);
  if (!res.error.empty()) {
    std::fprintf(stderr, "error: %s\n", res.error.c_str());
    return kExitUsage;
  }
  if (res.tracked_fraction < kMinTrackedFraction) {
    std::fprintf(stderr, "tracking failed: %.1f%% of frames tracked\n", 100 * res.tracked_fraction);
    return kExitTracking;
  }
  return kExitOk;
}

int Eval(const EvalArgs& a) {
  const auto gt = dsol::ReadTrajectory(a.gt);
  const auto est = dsol::ReadTrajectory(a.est);
  const auto rep = dsol::evaluate(est, gt, {.align = !a.no_align, .with_scale = a.sim3});
  std::cout << (a.json ? dsol::ToJson(rep) + "\n" : dsol::ToText(rep));
  return kExitOk;
}

int Synth(const SynthArgs& a) {
  dsol::SynthSequence seq;
  seq.scene.kind = dsol::ParseSceneKind(a.scene);
  seq.scene.depth = a.depth;
  seq.motion = dsol::Motion::Parse(a.motion);
  seq.frames = a.frames;
  seq.noise = a.noise;
  seq.noise_seed = a.seed;
  dsol::WriteSynthDataset(a.out, seq);
  std::fprintf(stderr, "wrote %d frames to %s\n", a.frames, a.out.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Direct sparse stereo odometry"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "Track a stereo or mono+depth image sequence");
  run_cmd->add_option("--left", run.spec.left_dir, "Left image directory")->required();
  run_cmd->add_option("--right", run.spec.right_dir, "Right image directory");
  run_cmd->add_option("--depth", run.spec.depth_dir, "16-bit depth image directory");
  run_cmd->add_option("--calib", run.spec.calib, "Calibration file")->required();
  run_cmd->add_option("--times", run.spec.timestamps, "Timestamps, one per line");
  run_cmd->add_option("--config", run.config, "key = value configuration file");
  run_cmd->add_option("--out", run.out, "Output trajectory")->required();
  run_cmd->add_option("--threads", run.threads, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_flag("--deterministic", run.deterministic,
                    "Reduce in a fixed order (output independent of --threads)");
  run_cmd->add_option("--timing", run.timing, "Write per-stage timing CSV");
  run_cmd->add_flag("--no-prefetch", run.no_prefetch, "Decode frames on the tracking thread");
  run_cmd->add_flag("-v,--verbose", run.verbose, "Per-frame log on stderr");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Compare an estimated trajectory to groundtruth");
  eval_cmd->add_option("--gt", eval.gt, "Groundtruth trajectory")->required();
  eval_cmd->add_option("--est", eval.est, "Estimated trajectory")->required();
  eval_cmd->add_flag("--no-align", eval.no_align, "Skip alignment");
  eval_cmd->add_flag("--sim3", eval.sim3, "Align with scale (mono)");
  eval_cmd->add_flag("--json", eval.json, "JSON output");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic stereo dataset");
  synth_cmd->add_option("--scene", synth.scene, "plane, ramp, or two-planes")
      ->check(CLI::IsMember({"plane", "ramp", "two-planes"}));
  synth_cmd->add_option("--frames", synth.frames, "Frame count")->required()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--motion", synth.motion,
                        "static | linear:tx,ty,tz[,rx,ry,rz] | orbit:radius,frames_per_rev[,depth]")
      ->required();
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--noise", synth.noise, "Intensity noise stddev")->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--seed", synth.seed, "Noise seed");
  synth_cmd->add_option("--depth", synth.depth, "Scene depth in meters")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*run_cmd) return Run(run);
    if (*eval_cmd) return Eval(eval);
    if (*synth_cmd) return Synth(synth);
  } catch (const dsol::ConsistencyError& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitConsistency;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
