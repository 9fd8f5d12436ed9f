#pragma once

// Cycle-consistent online training: one fresh model per (LR source, HR guide)
// pair, one full-image optimizer step per epoch, no ground truth involved.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "mmsr/adam.hpp"
#include "mmsr/image.hpp"
#include "mmsr/network.hpp"
#include "mmsr/parallel.hpp"

namespace mmsr {

enum class Dtype { f32, f64 };

inline Dtype parse_dtype(const std::string& s) {
  if (s == "f32") return Dtype::f32;
  if (s == "f64") return Dtype::f64;
  throw ConfigError("unknown dtype '" + s + "' (f32 or f64)");
}

struct TrainConfig {
  int epochs = 1000;
  double lr0 = 0.002;
  double decay = 0.9998;
  int decay_every = 5;
  std::uint64_t seed = 0;
  Dtype dtype = Dtype::f32;
  int log_every = 100;  // stdout progress cadence; 0 = silent
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 0) throw ConfigError("train config: epochs must be >= 0");
  if (!(cfg.lr0 > 0)) throw ConfigError("train config: lr0 must be > 0");
  if (!(cfg.decay > 0) || cfg.decay > 1) throw ConfigError("train config: decay must be in (0,1]");
  if (cfg.decay_every < 1) throw ConfigError("train config: decay_every must be >= 1");
}

// lr0 * decay^floor(epoch / decay_every)
inline double lr_at(int epoch, const TrainConfig& cfg) {
  return cfg.lr0 * std::pow(cfg.decay, static_cast<double>(epoch / cfg.decay_every));
}

struct TrainReport {
  std::vector<double> losses;          // one entry per epoch
  double final_cycle_residual = 0.0;   // mean |avg_pool(SR) - LR| after training
  double wall_seconds = 0.0;
};

// l1 distance between the average-pooled prediction and the LR source.
template <class S>
Tensor<S> cycle_loss(const Tensor<S>& sr, const Tensor<S>& src_lr, int scale) {
  if (sr.rank() != 3 || src_lr.rank() != 3 || sr.dim(1) != src_lr.dim(1) * scale ||
      sr.dim(2) != src_lr.dim(2) * scale || sr.dim(0) != src_lr.dim(0))
    throw ArgumentError("cycle_loss: SR " + shape_str(sr.shape()) + " is not LR " +
                        shape_str(src_lr.shape()) + " x scale " + std::to_string(scale));
  return l1_loss(avg_pool_down(sr, scale), src_lr);
}

// Root mean squared error in the images' native (denormalized) units.
inline double rmse(const Image& a, const Image& b) {
  if (a.height != b.height || a.width != b.width || a.channels != b.channels)
    throw ArgumentError("rmse: dimension mismatch");
  if (a.dynamic_range != b.dynamic_range)
    throw ArgumentError("rmse: dynamic range mismatch (" + std::to_string(a.dynamic_range) +
                        " vs " + std::to_string(b.dynamic_range) + ")");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(a.data.size())) * a.dynamic_range;
}

template <class S>
struct TrainResult {
  ModelParams<S> params;
  Image sr;
  TrainReport report;
};

template <class S>
TrainResult<S> train_pair(const Image& src_lr, const Image& guide, const ModelConfig& mcfg,
                          const TrainConfig& tcfg) {
  validate(mcfg);
  validate(tcfg);
  if (src_lr.channels != 1 || guide.channels != 3)
    throw ArgumentError("train_pair: source must be 1-channel, guide 3-channel");
  if (guide.height != src_lr.height * mcfg.scale || guide.width != src_lr.width * mcfg.scale)
    throw ArgumentError("train_pair: guide " + std::to_string(guide.height) + "x" +
                        std::to_string(guide.width) + " is not source x scale " +
                        std::to_string(mcfg.scale));

  const auto t0 = std::chrono::steady_clock::now();
  const Tensor<S> lr_t = image_to_tensor<S>(src_lr);
  const Tensor<S> guide_t = image_to_tensor<S>(guide);

  Graph<S> graph;
  TrainResult<S> result;
  result.params = build<S>(mcfg, tcfg.seed, &graph);
  AdamOptimizer<S> opt(result.params.tensors());

  result.report.losses.reserve(static_cast<std::size_t>(tcfg.epochs));
  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    graph.clear();
    Tensor<S> sr = forward(result.params, lr_t, guide_t);
    Tensor<S> loss = cycle_loss(sr, lr_t, mcfg.scale);
    const double loss_value = static_cast<double>(loss.value());
    if (!std::isfinite(loss_value)) throw TrainingError("training diverged: non-finite loss", epoch);
    result.report.losses.push_back(loss_value);
    graph.backward(loss);
    opt.step(lr_at(epoch, tcfg));
    opt.zero_grad();
  }

  graph.clear();
  graph.set_recording(false);
  Tensor<S> sr = forward(result.params, lr_t, guide_t);
  result.report.final_cycle_residual =
      static_cast<double>(cycle_loss(sr, lr_t, mcfg.scale).value());
  graph.set_recording(true);

  result.sr = tensor_to_image(sr, src_lr.dynamic_range);
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---- ablation runner ----

struct PairSample {
  std::string name;
  Image lr, guide, gt;
};

struct AblationRun {
  Variant variant = Variant::model3;
  int n = 11;
  int m = 11;
};

struct AblationRow {
  Variant variant;
  int n = 0, m = 0, scale = 0;
  double mean_rmse = 0.0;
  std::vector<double> pair_rmse;  // input pair order
};

// Trains every (run, pair) combination with a fresh seed-derived model and
// reports per-run mean RMSE against ground truth. Sessions are independent;
// `jobs` of them run concurrently (0 = hardware threads).
inline std::vector<AblationRow> run_ablation(const std::vector<PairSample>& pairs,
                                             const std::vector<AblationRun>& runs,
                                             const ModelConfig& base, const TrainConfig& tcfg,
                                             int jobs = 0) {
  if (pairs.empty()) throw ArgumentError("run_ablation: no pairs given");
  if (runs.empty()) throw ArgumentError("run_ablation: no variants given");
  for (const auto& p : pairs) {
    if (p.gt.height != p.lr.height * base.scale || p.gt.width != p.lr.width * base.scale)
      throw ArgumentError("run_ablation: pair '" + p.name + "' ground truth does not match scale");
  }

  std::vector<AblationRow> rows(runs.size());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    rows[r].variant = runs[r].variant;
    rows[r].n = runs[r].n;
    rows[r].m = runs[r].m;
    rows[r].scale = base.scale;
    rows[r].pair_rmse.assign(pairs.size(), 0.0);
  }

  const int task_count = static_cast<int>(runs.size() * pairs.size());
  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::string first_error;

  auto worker = [&]() {
    set_thread_count(1);
    for (;;) {
      const int task = next.fetch_add(1);
      if (task >= task_count) return;
      const std::size_t r = static_cast<std::size_t>(task) / pairs.size();
      const std::size_t p = static_cast<std::size_t>(task) % pairs.size();
      ModelConfig mcfg = base;
      mcfg.variant = runs[r].variant;
      mcfg.n = runs[r].n;
      mcfg.m = runs[r].m;
      TrainConfig session = tcfg;
      session.seed = derive_seed(tcfg.seed, static_cast<std::uint64_t>(r) * 1000003 + p);
      session.log_every = 0;
      try {
        auto res = tcfg.dtype == Dtype::f64
                       ? [&] {
                           auto rr = train_pair<double>(pairs[p].lr, pairs[p].guide, mcfg, session);
                           return std::pair<Image, TrainReport>(rr.sr, rr.report);
                         }()
                       : [&] {
                           auto rr = train_pair<float>(pairs[p].lr, pairs[p].guide, mcfg, session);
                           return std::pair<Image, TrainReport>(rr.sr, rr.report);
                         }();
        rows[r].pair_rmse[p] = rmse(res.first, pairs[p].gt);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error.empty())
          first_error = "pair '" + pairs[p].name + "', variant " +
                        variant_name(runs[r].variant) + ": " + e.what();
      }
    }
  };

  int worker_count = jobs > 0 ? jobs : thread_count();
  worker_count = std::min(worker_count, task_count);
  if (worker_count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < worker_count; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (!first_error.empty()) throw TrainingError("ablation failed: " + first_error);

  for (auto& row : rows) {
    double acc = 0.0;
    for (double v : row.pair_rmse) acc += v;
    row.mean_rmse = acc / static_cast<double>(row.pair_rmse.size());
  }
  return rows;
}

// CSV layout used by the ablation CLI: variant,n,m,scale,mean_rmse.
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string csv = "variant,n,m,scale,mean_rmse\n";
  char line[128];
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%.6f\n", variant_name(row.variant), row.n,
                  row.m, row.scale, row.mean_rmse);
    csv += line;
  }
  return csv;
}

}  // namespace mmsr
