#include "dsol/io/runner.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>
#include <numeric>

#include <tbb/global_control.h>
#include <tbb/task_arena.h>

#include "dsol/error.hpp"

namespace dsol {

StageTiming StageTiming::FromSamples(std::string name, std::vector<double> ms) {
  StageTiming s;
  s.name = std::move(name);
  s.count = static_cast<int>(ms.size());
  if (ms.empty()) return s;
  std::sort(ms.begin(), ms.end());
  // Nearest rank.
  auto pct = [&](double p) {
    const auto rank = static_cast<size_t>(std::ceil(p / 100.0 * static_cast<double>(ms.size())));
    return ms[std::clamp<size_t>(rank, 1, ms.size()) - 1];
  };
  s.mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  s.p50 = pct(50);
  s.p90 = pct(90);
  s.p99 = pct(99);
  s.max = ms.back();
  return s;
}

RunResult run_odometry(const FrameSource& source, const StereoRig& rig, OdometryConfig cfg,
                       const RunOptions& opts) {
  if (opts.threads < 1) throw ConfigError("threads must be >= 1");
  cfg.SetDeterministic(opts.deterministic);
  const tbb::global_control threads(tbb::global_control::max_allowed_parallelism,
                                    static_cast<size_t>(opts.threads));
  Odometry odom(rig, cfg);

  RunResult res;
  res.total_frames = source.size;
  std::vector<double> track_ms, kf_ms;
  std::future<StereoFrame> next;
  auto fetch = [&](int i) {
    return std::async(opts.prefetch ? std::launch::async : std::launch::deferred,
                      [&source, i] { return source.load(i); });
  };
  if (source.size > 0) next = fetch(0);
  // An explicit arena so that the requested workers exist even beyond the core count.
  tbb::task_arena arena(opts.threads);
  arena.execute([&] {
    for (int i = 0; i < source.size; ++i) {
      try {
        const StereoFrame frame = next.get();
        if (i + 1 < source.size) next = fetch(i + 1);
        const FrameOutput out = odom.ProcessFrame(frame);
        res.trajectory.Append(out.timestamp, out.state.pose);
        if (out.track_ms) track_ms.push_back(*out.track_ms);
        if (out.kf_ms) kf_ms.push_back(*out.kf_ms);
        if (opts.on_frame) opts.on_frame(i, out);
        res.frames.push_back(out);
      } catch (const Error& e) {
        res.error = "frame " + std::to_string(i) + ": " + e.what();
        if (next.valid()) next.wait();
        // Internal inconsistencies are not a property of the input; let the caller see them.
        if (dynamic_cast<const ConsistencyError*>(&e)) throw;
        break;
      }
    }
  });

  int tracked = 0;
  for (const auto& f : res.frames) tracked += f.status != FrameStatus::kReinitialized;
  res.tracked_fraction = source.size > 0 ? static_cast<double>(tracked) / source.size : 0.0;
  res.keyframes = odom.keyframes_created();
  res.reinitializations = odom.reinitializations();
  res.track = StageTiming::FromSamples("track", std::move(track_ms));
  res.kf = StageTiming::FromSamples("kf", std::move(kf_ms));
  return res;
}

RunResult run_odometry(const Dataset& dataset, OdometryConfig cfg, const RunOptions& opts) {
  const int levels = cfg.pyramid_levels;
  FrameSource src{dataset.size(), [&dataset, levels](int i) { return dataset.Load(i, levels); }};
  return run_odometry(src, dataset.rig(), std::move(cfg), opts);
}

std::string FormatTiming(const RunResult& r) {
  std::string out = "stage,count,mean_ms,p50_ms,p90_ms,p99_ms,max_ms\n";
  char buf[256];
  for (const StageTiming* s : {&r.track, &r.kf}) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.3f,%.3f,%.3f,%.3f,%.3f\n", s->name.c_str(), s->count,
                  s->mean, s->p50, s->p90, s->p99, s->max);
    out += buf;
  }
  return out;
}

}  // namespace dsol
